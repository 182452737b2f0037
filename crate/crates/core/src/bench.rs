//! Benchmark drivers, cost-model calibration and report formatting.
//!
//! Model times come from the cost model and are what the reports are about;
//! wall times only say how long the simulation took on this machine.

use std::fmt::{self, Write as _};
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::blas::{dgemm_false, sgemm, GemmCall, GemmEngine};
use crate::config::MeshSetup;
use crate::cost::{self, CostParams, KernelProfile, TimingBreakdown};
use crate::error::{Error, Result};
use crate::host::{InnerKernel, InnerKernelRequest};
use crate::matrix::{compare, gemm_norm_scale, ref_gemm, Element, ErrorReport, Layout, Matrix, OpFlag};
use crate::service::OffloadService;
use crate::{KSUB, TILE_M, TILE_N};

/// Residues above this flag a testsuite row as FAILED.
pub const RESIDUE_THRESHOLD: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    /// Micro-kernel called from the same process.
    Inproc,
    /// Micro-kernel called through the offload service.
    Service,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Precision {
    Single,
    FalseDouble,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Text,
    Csv,
    Json,
}

impl FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "inproc" => Ok(Mode::Inproc),
            "service" => Ok(Mode::Service),
            _ => Err(Error::InvalidArgument(format!("mode {s:?}: expected inproc or service"))),
        }
    }
}

impl FromStr for Precision {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "single" => Ok(Precision::Single),
            "false-double" | "false_double" => Ok(Precision::FalseDouble),
            _ => Err(Error::InvalidArgument(format!("precision {s:?}: expected single or false-double"))),
        }
    }
}

impl FromStr for Format {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "text" => Ok(Format::Text),
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            _ => Err(Error::InvalidArgument(format!("format {s:?}: expected text, csv or json"))),
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Inproc => "inproc",
            Mode::Service => "service",
        })
    }
}

/// One line of a report. Empty cells are `None`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct BenchRow {
    pub description: String,
    pub model_time_s: Option<f64>,
    /// Share of the report's total model time, in percent.
    pub percent_of_total: Option<f64>,
    pub gflops_model: Option<f64>,
    pub wall_time_s: Option<f64>,
    /// Relative error or residue, depending on the row.
    pub error: Option<f64>,
    pub failed: bool,
}

impl BenchRow {
    fn named(description: impl Into<String>) -> Self {
        Self { description: description.into(), ..Self::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct BenchReport {
    pub title: String,
    pub rows: Vec<BenchRow>,
    pub notes: Vec<String>,
}

impl BenchReport {
    pub fn any_failed(&self) -> bool {
        self.rows.iter().any(|r| r.failed)
    }

    pub fn row(&self, description: &str) -> Option<&BenchRow> {
        self.rows.iter().find(|r| r.description == description)
    }
}

/// Row labels of the kernel benchmark.
pub mod rows {
    pub const INPUT: &str = "Input loading and host preprocessing (*)";
    pub const DEVICE: &str = "Coprocessor work (*)";
    pub const POST: &str = "Host data retrieving and postprocessing";
    pub const HH: &str = "Host-to-host copies";
    pub const TOTAL: &str = "Total sgemm micro-kernel";
    pub const MEAN_REL: &str = "Mean Relative Error";
    pub const MAX_REL: &str = "Maximum Relative Error";
    pub const RESIDUE: &str = "Normalized Residue";
}

const CSV_HEADER: [&str; 7] =
    ["description", "model_time_s", "percent_of_total", "gflops_model", "wall_time_s", "error", "status"];

pub fn emit_report(report: &BenchReport, format: Format) -> Result<Vec<u8>> {
    match format {
        Format::Json => Ok(serde_json::to_vec_pretty(report)?),
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(CSV_HEADER)?;
            for r in &report.rows {
                w.write_record([
                    r.description.clone(),
                    opt_cell(r.model_time_s),
                    opt_cell(r.percent_of_total),
                    opt_cell(r.gflops_model),
                    opt_cell(r.wall_time_s),
                    opt_cell(r.error),
                    status(r).to_string(),
                ])?;
            }
            w.into_inner().map_err(|e| Error::Io(e.into_error()))
        }
        Format::Text => Ok(text_table(report).into_bytes()),
    }
}

fn opt_cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn status(r: &BenchRow) -> &'static str {
    if r.failed {
        "FAILED"
    } else {
        ""
    }
}

fn text_table(report: &BenchReport) -> String {
    let cells: Vec<[String; 6]> = report
        .rows
        .iter()
        .map(|r| {
            [
                r.description.clone(),
                r.model_time_s.map(|v| format!("{v:.6}")).unwrap_or_else(|| "-".into()),
                r.percent_of_total.map(|v| format!("{v:.1}")).unwrap_or_else(|| "-".into()),
                r.gflops_model.map(|v| format!("{v:.3}")).unwrap_or_else(|| "-".into()),
                r.error.map(|v| format!("{v:.2e}")).unwrap_or_else(|| "-".into()),
                r.wall_time_s.map(|v| format!("{v:.3}")).unwrap_or_else(|| "-".into()),
            ]
        })
        .collect();
    let header = ["Description", "Time (s)", "%", "GFLOPS/s", "Error", "Wall (s)"];
    let mut width: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for row in &cells {
        for (w, c) in width.iter_mut().zip(row) {
            *w = (*w).max(c.len());
        }
    }
    let mut out = String::new();
    if !report.title.is_empty() {
        let _ = writeln!(out, "{}", report.title);
    }
    let line = |out: &mut String, cols: &[String], failed: bool| {
        let mut s = format!("{:<w$}", cols[0], w = width[0]);
        for (c, w) in cols[1..].iter().zip(&width[1..]) {
            let _ = write!(s, " | {c:>w$}");
        }
        if failed {
            s.push_str("  FAILED");
        }
        let _ = writeln!(out, "{}", s.trim_end());
    };
    line(&mut out, &header.map(String::from), false);
    let _ = writeln!(out, "{}", "-".repeat(width.iter().sum::<usize>() + 3 * (width.len() - 1)));
    for (row, r) in cells.iter().zip(&report.rows) {
        line(&mut out, row, r.failed);
    }
    for n in &report.notes {
        let _ = writeln!(out, "{n}");
    }
    out
}

/// Settings for [`kernel_bench`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelBenchOptions {
    pub k: usize,
    pub mode: Mode,
    pub seed: u64,
    /// Inputs are drawn from `uniform(lo, hi)`.
    pub lo: f64,
    pub hi: f64,
    pub setup: MeshSetup,
}

impl KernelBenchOptions {
    pub fn new(k: usize, mode: Mode, seed: u64) -> Self {
        Self { k, mode, seed, lo: -1.0, hi: 1.0, setup: MeshSetup::parallella() }
    }
}

/// Raw outcome of one micro-kernel benchmark.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelBench {
    pub timing: TimingBreakdown,
    pub profile: KernelProfile,
    pub errors: ErrorReport,
    pub flops: u64,
    pub wall_time_s: f64,
    pub output: Matrix<f32>,
    pub report: BenchReport,
}

/// `c = a1 * b1` for one `TILE_M x TILE_N` block at depth `k`, against the
/// double-precision oracle.
pub fn kernel_bench(opts: &KernelBenchOptions) -> Result<KernelBench> {
    let k = opts.k;
    if k == 0 || !k.is_multiple_of(KSUB) {
        return Err(Error::InvalidArgument(format!("K = {k} must be a positive multiple of {KSUB}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let a1 = Matrix::<f32>::random_uniform(TILE_M, k, Layout::ColMajor, opts.lo, opts.hi, &mut rng);
    let b1 = Matrix::<f32>::random_uniform(k, TILE_N, Layout::RowMajor, opts.lo, opts.hi, &mut rng);
    let mut out = Matrix::<f32>::zeros(TILE_M, TILE_N, Layout::ColMajor);
    let req = InnerKernelRequest {
        a1: a1.view(),
        b1: b1.view(),
        c_in: None,
        c_out: out.view_mut(),
        alpha: 1.0,
        beta: 0.0,
    };
    let (timing, profile, flops, wall) = match opts.mode {
        Mode::Inproc => {
            let mut kernel = InnerKernel::new(opts.setup)?;
            let t0 = Instant::now();
            let run = kernel.run(req)?;
            (run.timing, run.profile, run.flops, t0.elapsed().as_secs_f64())
        }
        Mode::Service => {
            let mut svc = OffloadService::new(opts.setup);
            svc.start()?;
            let t0 = Instant::now();
            let r = svc.submit(req)?;
            let wall = t0.elapsed().as_secs_f64();
            svc.stop()?;
            (r.timing, r.profile, r.flops, wall)
        }
    };
    let zero = Matrix::<f32>::zeros(TILE_M, TILE_N, Layout::ColMajor);
    let oracle = ref_gemm(1.0, a1.view(), OpFlag::N, b1.view(), OpFlag::N, 0.0, zero.view())?;
    let scale = gemm_norm_scale(1.0, a1.view(), b1.view(), 0.0, zero.view());
    let errors = compare(out.view(), oracle.view(), scale)?;

    let useful = 2.0 * (TILE_M * TILE_N * k) as f64;
    let pct = |t: f64| 100.0 * (t / timing.total_time);
    let timed = |name: &str, t: f64| BenchRow {
        model_time_s: Some(t),
        percent_of_total: Some(pct(t)),
        ..BenchRow::named(name)
    };
    let mut report = BenchReport {
        title: format!(
            "sgemm micro-kernel, {} (m={TILE_M}, n={TILE_N}, K={k}, seed={})",
            match opts.mode {
                Mode::Inproc => "called from the same process",
                Mode::Service => "called through the offload service",
            },
            opts.seed
        ),
        rows: vec![
            timed(rows::INPUT, timing.input_stage_time),
            timed(rows::DEVICE, timing.device_time),
            timed(rows::POST, timing.post_time),
        ],
        notes: vec![
            "(*) Input loading and coprocessor work overlap, so the percentages add up to more than 100."
                .into(),
        ],
    };
    if opts.mode == Mode::Service {
        report.rows.push(timed(rows::HH, timing.hh_copy_time));
    }
    report.rows.push(BenchRow {
        gflops_model: Some(cost::gflops(useful, timing.total_time)),
        wall_time_s: Some(wall),
        ..timed(rows::TOTAL, timing.total_time)
    });
    report.rows.push(BenchRow { error: Some(errors.mean_rel_err), ..BenchRow::named(rows::MEAN_REL) });
    report.rows.push(BenchRow { error: Some(errors.max_rel_err), ..BenchRow::named(rows::MAX_REL) });
    report.rows.push(BenchRow { error: Some(errors.normalized_residue), ..BenchRow::named(rows::RESIDUE) });
    Ok(KernelBench { timing, profile, errors, flops, wall_time_s: wall, output: out, report })
}

/// Micro-kernel benchmark with the default inputs and shipped parameters.
pub fn run_kernel_bench(k: usize, mode: Mode, seed: u64) -> Result<BenchReport> {
    Ok(kernel_bench(&KernelBenchOptions::new(k, mode, seed))?.report)
}

/// `"all"` or a comma-separated list such as `"nn,nt,ch"`.
pub fn parse_variants(spec: &str) -> Result<Vec<(OpFlag, OpFlag)>> {
    if spec.trim() == "all" {
        return Ok(all_variants());
    }
    spec.split(',')
        .map(|v| {
            let v = v.trim();
            let mut chars = v.chars();
            match (chars.next(), chars.next(), chars.next()) {
                (Some(a), Some(b), None) => Ok((OpFlag::from_char(a)?, OpFlag::from_char(b)?)),
                _ => Err(Error::InvalidArgument(format!("variant {v:?}: expected two of n, c, t, h"))),
            }
        })
        .collect()
}

pub fn all_variants() -> Vec<(OpFlag, OpFlag)> {
    OpFlag::ALL.iter().flat_map(|&a| OpFlag::ALL.iter().map(move |&b| (a, b))).collect()
}

/// `blis_sgemm_nt_ccc` style row name.
pub fn variant_name(precision: Precision, op_a: OpFlag, op_b: OpFlag) -> String {
    let dt = match precision {
        Precision::Single => 's',
        Precision::FalseDouble => 'd',
    };
    format!(
        "blis_{dt}gemm_{}{}_ccc",
        op_a.as_char().to_ascii_lowercase(),
        op_b.as_char().to_ascii_lowercase()
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct TestsuiteOptions {
    pub m: usize,
    pub n: usize,
    pub k: usize,
    pub precision: Precision,
    pub variants: Vec<(OpFlag, OpFlag)>,
    pub seed: u64,
    pub mode: Mode,
    pub alpha: f64,
    pub beta: f64,
    pub setup: MeshSetup,
}

impl TestsuiteOptions {
    pub fn new(m: usize, n: usize, k: usize, precision: Precision) -> Self {
        Self {
            m,
            n,
            k,
            precision,
            variants: all_variants(),
            seed: 1,
            mode: Mode::Service,
            alpha: 1.0,
            beta: 1.0,
            setup: MeshSetup::parallella(),
        }
    }
}

/// Output of one testsuite variant, kept for bitwise comparisons.
#[derive(Debug, Clone, PartialEq)]
pub enum VariantOutput {
    Single(Matrix<f32>),
    Double(Matrix<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TestsuiteRun {
    pub report: BenchReport,
    pub outputs: Vec<VariantOutput>,
}

pub fn make_engine(mode: Mode, setup: MeshSetup) -> Result<Box<dyn GemmEngine>> {
    Ok(match mode {
        Mode::Inproc => Box::new(InnerKernel::new(setup)?),
        Mode::Service => Box::new(OffloadService::spawn(setup)?),
    })
}

/// Run every requested variant on the same seeded operands (stored
/// transposed where the variant asks for it) and check each against the
/// oracle.
pub fn testsuite(opts: &TestsuiteOptions) -> Result<TestsuiteRun> {
    let (m, n, k) = (opts.m, opts.n, opts.k);
    if m == 0 || n == 0 || k == 0 {
        return Err(Error::InvalidArgument("testsuite dimensions must be positive".into()));
    }
    let mut engine = make_engine(opts.mode, opts.setup)?;
    let mut report = BenchReport {
        title: format!("BLIS gemm results (m={m}, n={n}, K={k})"),
        rows: Vec::new(),
        notes: vec![format!("Rows with residue above {RESIDUE_THRESHOLD:.0e} are FAILED.")],
    };
    let mut outputs = Vec::new();
    for &(op_a, op_b) in &opts.variants {
        let name = variant_name(opts.precision, op_a, op_b);
        let (stats, err, wall, out) = match opts.precision {
            Precision::Single => {
                let (stats, err, wall, c) = run_variant::<f32>(engine.as_mut(), opts, op_a, op_b)?;
                (stats, err, wall, VariantOutput::Single(c))
            }
            Precision::FalseDouble => {
                let (stats, err, wall, c) = run_variant::<f64>(engine.as_mut(), opts, op_a, op_b)?;
                (stats, err, wall, VariantOutput::Double(c))
            }
        };
        let useful = 2.0 * (m * n * k) as f64;
        report.rows.push(BenchRow {
            description: name,
            model_time_s: Some(stats.timing.total_time),
            percent_of_total: None,
            gflops_model: Some(cost::gflops(useful, stats.timing.total_time)),
            wall_time_s: Some(wall),
            error: Some(err.normalized_residue),
            failed: err.normalized_residue.is_nan() || err.normalized_residue > RESIDUE_THRESHOLD,
        });
        outputs.push(out);
    }
    Ok(TestsuiteRun { report, outputs })
}

pub fn run_testsuite(
    m: usize,
    n: usize,
    k: usize,
    precision: Precision,
    variants: &[(OpFlag, OpFlag)],
) -> Result<BenchReport> {
    let opts = TestsuiteOptions { variants: variants.to_vec(), ..TestsuiteOptions::new(m, n, k, precision) };
    Ok(testsuite(&opts)?.report)
}

trait SuiteElement: Element {
    fn gemm(engine: &mut dyn GemmEngine, call: GemmCall<'_, Self>) -> Result<crate::blas::GemmStats>;
}

impl SuiteElement for f32 {
    fn gemm(engine: &mut dyn GemmEngine, call: GemmCall<'_, f32>) -> Result<crate::blas::GemmStats> {
        sgemm(engine, call)
    }
}

impl SuiteElement for f64 {
    fn gemm(engine: &mut dyn GemmEngine, call: GemmCall<'_, f64>) -> Result<crate::blas::GemmStats> {
        dgemm_false(engine, call)
    }
}

fn run_variant<T: SuiteElement>(
    engine: &mut dyn GemmEngine,
    opts: &TestsuiteOptions,
    op_a: OpFlag,
    op_b: OpFlag,
) -> Result<(crate::blas::GemmStats, ErrorReport, f64, Matrix<T>)> {
    let (m, n, k) = (opts.m, opts.n, opts.k);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let (ar, ac) = if op_a.is_transposed() { (k, m) } else { (m, k) };
    let (br, bc) = if op_b.is_transposed() { (n, k) } else { (k, n) };
    let a = Matrix::<T>::random_uniform(ar, ac, Layout::ColMajor, -1.0, 1.0, &mut rng);
    let b = Matrix::<T>::random_uniform(br, bc, Layout::ColMajor, -1.0, 1.0, &mut rng);
    let c0 = Matrix::<T>::random_uniform(m, n, Layout::ColMajor, -1.0, 1.0, &mut rng);
    let alpha = T::from_f64(opts.alpha);
    let beta = T::from_f64(opts.beta);
    let oracle = ref_gemm(alpha.to_f64(), a.view(), op_a, b.view(), op_b, beta.to_f64(), c0.view())?;
    let scale = gemm_norm_scale(alpha.to_f64(), a.view(), b.view(), beta.to_f64(), c0.view());
    let mut c = c0.clone();
    let t0 = Instant::now();
    let stats = T::gemm(engine, GemmCall::new(op_a, op_b, alpha, a.view(), b.view(), beta, c.view_mut())?)?;
    let wall = t0.elapsed().as_secs_f64();
    let err = compare(c.view(), oracle.view(), scale)?;
    Ok((stats, err, wall, c))
}

/// Target timings for [`calibrate_cost_model`], all in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationTargets {
    pub k: usize,
    pub input_time: f64,
    pub device_time: f64,
    pub post_time: f64,
    pub total_time: f64,
    /// Total through the offload service; fixes `bw_hh` when present.
    pub service_total_time: Option<f64>,
}

impl CalibrationTargets {
    /// Same `key = value` syntax as the mesh config.
    pub fn parse(text: &str) -> Result<Self> {
        let mut k = 4096;
        let mut vals: [Option<f64>; 5] = [None; 5];
        const KEYS: [&str; 5] =
            ["input_time", "device_time", "post_time", "total_time", "service_total_time"];
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let bad = |msg: String| Error::Config { line, msg };
            let (key, value) = content
                .split_once('=')
                .ok_or_else(|| bad(format!("expected key = value, got {content:?}")))?;
            let (key, value) = (key.trim(), value.trim());
            if key == "k" {
                k = value.parse().map_err(|_| bad(format!("bad value {value:?} for k")))?;
                continue;
            }
            let slot = KEYS
                .iter()
                .position(|&name| name == key)
                .ok_or_else(|| bad(format!("unknown key {key:?}")))?;
            vals[slot] = Some(value.parse().map_err(|_| bad(format!("bad value {value:?} for {key}")))?);
        }
        let need =
            |i: usize| vals[i].ok_or_else(|| Error::Calibration(format!("targets file lacks {}", KEYS[i])));
        Ok(Self {
            k,
            input_time: need(0)?,
            device_time: need(1)?,
            post_time: need(2)?,
            total_time: need(3)?,
            service_total_time: vals[4],
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }
}

/// Fit the bandwidths and per-task handoff so the model reproduces
/// `targets` for one `TILE_M x TILE_N` micro-kernel call.
///
/// The ledger's byte and cycle counts do not depend on the bandwidths, so
/// one profiling run on `base` determines everything: each target row is a
/// byte count divided by one unknown bandwidth, and whatever total time the
/// bandwidths leave unexplained is spread over the tasks as handoff latency.
pub fn calibrate_cost_model(targets: &CalibrationTargets, base: &MeshSetup) -> Result<CostParams> {
    let t = targets;
    for (name, v) in [
        ("input_time", t.input_time),
        ("device_time", t.device_time),
        ("post_time", t.post_time),
        ("total_time", t.total_time),
    ] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::Calibration(format!("{name} must be positive, got {v}")));
        }
    }
    let profile = zero_profile(t.k, base)?;
    let clock = base.mesh.clock_hz;
    let staged: u64 = profile.tasks.iter().map(|x| x.staged_bytes).sum();
    let core_bytes: u64 = profile.tasks.iter().map(|x| x.core_bytes).sum();
    let cycles: u64 = profile.tasks.iter().map(|x| x.device_cycles).sum();

    let mut p = base.cost;
    p.bw_host_write_hc = staged as f64 / t.input_time;
    let transfer_time = t.device_time - cycles as f64 / clock;
    if transfer_time <= 0.0 {
        return Err(Error::Calibration(format!(
            "device_time {} is below the compute time {} alone",
            t.device_time,
            cycles as f64 / clock
        )));
    }
    p.bw_core_hc = core_bytes as f64 / transfer_time;
    p.bw_host_read_hc = profile.retrieved_bytes as f64 / t.post_time;
    p.task_handoff_s = 0.0;
    let bare = cost::evaluate(&profile, &p, clock).total_time;
    let slack = t.total_time - bare;
    if slack < 0.0 {
        return Err(Error::Calibration(format!(
            "total_time {} is below the modeled {} without any handoff",
            t.total_time, bare
        )));
    }
    p.task_handoff_s = slack / profile.tasks.len() as f64;
    if let Some(svc) = t.service_total_time {
        let hh = svc - t.total_time;
        if hh.is_nan() || hh <= 0.0 {
            return Err(Error::Calibration(format!(
                "service_total_time {svc} must exceed total_time {}",
                t.total_time
            )));
        }
        p.bw_hh = service_payload_bytes(t.k) as f64 / hh;
    }
    p.validate().map_err(|e| Error::Calibration(e.to_string()))?;
    Ok(p)
}

/// Host-to-host bytes of one service call: a1, b1 and c in, c out.
pub fn service_payload_bytes(k: usize) -> u64 {
    4 * (TILE_M * k + k * TILE_N + 2 * TILE_M * TILE_N) as u64
}

fn zero_profile(k: usize, base: &MeshSetup) -> Result<KernelProfile> {
    if k == 0 || !k.is_multiple_of(KSUB) {
        return Err(Error::Calibration(format!("K = {k} must be a positive multiple of {KSUB}")));
    }
    let mut kernel = InnerKernel::new(*base)?;
    let a1 = Matrix::<f32>::zeros(TILE_M, k, Layout::ColMajor);
    let b1 = Matrix::<f32>::zeros(k, TILE_N, Layout::RowMajor);
    let mut c = Matrix::<f32>::zeros(TILE_M, TILE_N, Layout::ColMajor);
    let run = kernel.run(InnerKernelRequest {
        a1: a1.view(),
        b1: b1.view(),
        c_in: None,
        c_out: c.view_mut(),
        alpha: 1.0,
        beta: 0.0,
    })?;
    Ok(run.profile)
}
