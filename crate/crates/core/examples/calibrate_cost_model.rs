//! Fit the cost model to measured micro-kernel timings and check the fit.

use meshgemm::bench::{calibrate_cost_model, kernel_bench, CalibrationTargets, KernelBenchOptions, Mode};
use meshgemm::config::MeshSetup;
use meshgemm::cost::CostParams;

fn main() -> meshgemm::Result<()> {
    let targets = CalibrationTargets::parse(include_str!("../configs/parallella.targets"))?;
    let base = MeshSetup { cost: CostParams::uncalibrated(), ..MeshSetup::parallella() };
    let cost = calibrate_cost_model(&targets, &base)?;
    let setup = MeshSetup { cost, ..base };
    print!("{}", setup.to_config_string());

    for mode in [Mode::Inproc, Mode::Service] {
        let t = kernel_bench(&KernelBenchOptions { setup, ..KernelBenchOptions::new(targets.k, mode, 1) })?
            .timing;
        println!(
            "{mode:>8}: input {:.6}  device {:.6}  post {:.6}  total {:.6}",
            t.input_stage_time, t.device_time, t.post_time, t.total_time
        );
    }
    Ok(())
}
