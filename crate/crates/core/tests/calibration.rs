//! Cost-model calibration, report formats and the `bench` binary.

use std::process::Command;

use meshgemm::bench::{
    self, calibrate_cost_model, emit_report, kernel_bench, rows, BenchReport, CalibrationTargets, Format,
    KernelBenchOptions, Mode, Precision,
};
use meshgemm::config::MeshSetup;
use meshgemm::cost::{self, CostParams};

const TARGETS: &str = include_str!("../configs/parallella.targets");

fn targets() -> CalibrationTargets {
    CalibrationTargets::parse(TARGETS).unwrap()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

#[test]
fn shipped_config_is_a_fresh_calibration() {
    let shipped = MeshSetup::parallella();
    let fresh = calibrate_cost_model(&targets(), &shipped).unwrap();
    assert_eq!(fresh, shipped.cost);
    // Starting from placeholder bandwidths gives the same answer: the
    // ledger does not depend on them.
    let placeholder = MeshSetup { cost: CostParams::uncalibrated(), ..shipped };
    assert_eq!(calibrate_cost_model(&targets(), &placeholder).unwrap(), shipped.cost);
}

#[test]
fn calibration_fixed_point() {
    let t = targets();
    let inproc = kernel_bench(&KernelBenchOptions::new(t.k, Mode::Inproc, 5)).unwrap().timing;
    assert!(rel(inproc.input_stage_time, t.input_time) < 0.01);
    assert!(rel(inproc.device_time, t.device_time) < 0.01);
    assert!(rel(inproc.post_time, t.post_time) < 0.01);
    assert!(rel(inproc.total_time, t.total_time) < 0.01);
    let svc = kernel_bench(&KernelBenchOptions::new(t.k, Mode::Service, 5)).unwrap().timing;
    assert!(rel(svc.total_time, t.service_total_time.unwrap()) < 0.01);
}

#[test]
fn doubling_bandwidths_halves_transfer_rows() {
    let base = MeshSetup::parallella();
    let c = base.cost;
    let fast = MeshSetup {
        cost: CostParams {
            bw_host_write_hc: 2.0 * c.bw_host_write_hc,
            bw_host_read_hc: 2.0 * c.bw_host_read_hc,
            bw_hh: 2.0 * c.bw_hh,
            ..c
        },
        ..base
    };
    let slow =
        kernel_bench(&KernelBenchOptions { setup: base, ..KernelBenchOptions::new(1024, Mode::Service, 1) })
            .unwrap()
            .timing;
    let quick =
        kernel_bench(&KernelBenchOptions { setup: fast, ..KernelBenchOptions::new(1024, Mode::Service, 1) })
            .unwrap()
            .timing;
    assert!(rel(2.0 * quick.input_stage_time, slow.input_stage_time) < 1e-12);
    assert!(rel(2.0 * quick.post_time, slow.post_time) < 1e-12);
    assert!(rel(2.0 * quick.hh_copy_time, slow.hh_copy_time) < 1e-12);
    assert_eq!(quick.device_time, slow.device_time);
}

#[test]
fn kernel_report_is_consistent() {
    for (k, mode) in [(64, Mode::Inproc), (4096, Mode::Inproc), (256, Mode::Service)] {
        let report = bench::run_kernel_bench(k, mode, 3).unwrap();
        let total = report.row(rows::TOTAL).unwrap();
        let t = total.model_time_s.unwrap();
        let gf = total.gflops_model.unwrap();
        assert!(rel(gf * t, 2.0 * 192.0 * 256.0 * k as f64 / 1e9) < 1e-12);
        assert_eq!(total.percent_of_total, Some(100.0));
        for r in report.rows.iter().filter(|r| r.model_time_s.is_some()) {
            let p = r.percent_of_total.unwrap();
            assert!(p.is_finite() && p > 0.0 && p <= 100.0, "{r:?}");
            assert!(rel(p, 100.0 * r.model_time_s.unwrap() / t) < 1e-12);
        }
        for name in [rows::MEAN_REL, rows::MAX_REL, rows::RESIDUE] {
            assert!(report.row(name).unwrap().error.unwrap().is_finite());
        }
        assert_eq!(report.row(rows::HH).is_some(), mode == Mode::Service);
    }
}

#[test]
fn testsuite_report_round_trips() {
    let report =
        bench::run_testsuite(256, 300, 130, Precision::Single, &bench::parse_variants("nn,nc,th").unwrap())
            .unwrap();
    assert_eq!(report.rows.len(), 3);
    assert!(!report.any_failed());
    let json = emit_report(&report, Format::Json).unwrap();
    let back: BenchReport = serde_json::from_slice(&json).unwrap();
    assert_eq!(back, report);

    let csv = emit_report(&report, Format::Csv).unwrap();
    let mut rd = csv::Reader::from_reader(csv.as_slice());
    for (rec, row) in rd.records().zip(&report.rows) {
        let rec = rec.unwrap();
        assert_eq!(&rec[0], row.description);
        assert_eq!(rec[1].parse::<f64>().unwrap(), row.model_time_s.unwrap());
        assert_eq!(rec[5].parse::<f64>().unwrap(), row.error.unwrap());
    }
    let text = String::from_utf8(emit_report(&report, Format::Text).unwrap()).unwrap();
    assert!(text.contains("blis_sgemm_th_ccc"));
}

#[test]
fn gflops_helper() {
    assert_eq!(cost::gflops(2e9, 2.0), 1.0);
    assert_eq!(cost::gflops(1.0, 0.0), 0.0);
}

#[test]
fn cli_kernel_json_and_exit_status() {
    let exe = env!("CARGO_BIN_EXE_bench");
    let out = Command::new(exe).args(["kernel", "--k", "128", "--format", "json"]).output().unwrap();
    assert!(out.status.success());
    let report: BenchReport = serde_json::from_slice(&out.stdout).unwrap();
    assert!(report.row(rows::TOTAL).is_some());

    let bad = Command::new(exe).args(["kernel", "--k", "100"]).output().unwrap();
    assert!(!bad.status.success());

    let suite = Command::new(exe)
        .args(["testsuite", "--size", "200", "--variants", "nt,hc", "--format", "csv"])
        .output()
        .unwrap();
    assert!(suite.status.success());
    assert_eq!(String::from_utf8(suite.stdout).unwrap().lines().count(), 3);
}

#[test]
fn cli_calibrate_writes_the_shipped_config() {
    let exe = env!("CARGO_BIN_EXE_bench");
    let targets = concat!(env!("CARGO_MANIFEST_DIR"), "/configs/parallella.targets");
    let out = Command::new(exe).args(["calibrate", "--targets", targets]).output().unwrap();
    assert!(out.status.success());
    let written = MeshSetup::parse(&String::from_utf8(out.stdout).unwrap()).unwrap();
    assert_eq!(written, MeshSetup::parallella());
}

#[test]
fn cli_failed_rows_set_exit_status() {
    // A config whose mesh cannot hold the kernel makes the run error out.
    let dir = std::env::temp_dir().join(format!("meshgemm-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let conf = dir.join("tiny.conf");
    std::fs::write(&conf, "local_mem_bytes = 16384\n").unwrap();
    let exe = env!("CARGO_BIN_EXE_bench");
    let out =
        Command::new(exe).args(["--config", conf.to_str().unwrap(), "kernel", "--k", "64"]).output().unwrap();
    assert!(!out.status.success());
    let _ = std::fs::remove_dir_all(&dir);
}
