use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use meshgemm::bench::{self, Format, KernelBenchOptions, Mode, Precision, TestsuiteOptions};
use meshgemm::MeshSetup;

#[derive(Parser)]
#[command(name = "bench", about = "Mesh coprocessor sgemm benchmarks")]
struct Cli {
    /// Mesh and cost-model config; defaults to the shipped calibration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// One 192x256 micro-kernel call at depth K.
    Kernel {
        #[arg(long, default_value_t = 4096)]
        k: usize,
        #[arg(long, default_value = "inproc")]
        mode: Mode,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value = "text")]
        format: Format,
    },
    /// Full gemm over transpose variants, checked against the oracle.
    Testsuite {
        #[arg(long, default_value_t = 768)]
        m: usize,
        #[arg(long, default_value_t = 768)]
        n: usize,
        #[arg(long, default_value_t = 768)]
        k: usize,
        /// Set m, n and K together (4096 for the full-scale run).
        #[arg(long)]
        size: Option<usize>,
        #[arg(long, default_value = "single")]
        precision: Precision,
        #[arg(long, default_value = "all")]
        variants: String,
        #[arg(long, default_value = "service")]
        mode: Mode,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value = "text")]
        format: Format,
    },
    /// Fit the cost model to target timings and write a config.
    Calibrate {
        #[arg(long)]
        targets: PathBuf,
        /// Output config path; stdout if omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> meshgemm::Result<ExitCode> {
    let setup = match &cli.config {
        Some(path) => MeshSetup::load(path)?,
        None => MeshSetup::parallella(),
    };
    let (report, format) = match cli.command {
        Cmd::Kernel { k, mode, seed, format } => {
            let opts = KernelBenchOptions { setup, ..KernelBenchOptions::new(k, mode, seed) };
            (bench::kernel_bench(&opts)?.report, format)
        }
        Cmd::Testsuite { m, n, k, size, precision, variants, mode, seed, format } => {
            let (m, n, k) = size.map_or((m, n, k), |s| (s, s, s));
            let opts = TestsuiteOptions {
                variants: bench::parse_variants(&variants)?,
                seed,
                mode,
                setup,
                ..TestsuiteOptions::new(m, n, k, precision)
            };
            (bench::testsuite(&opts)?.report, format)
        }
        Cmd::Calibrate { targets, out } => {
            let targets = bench::CalibrationTargets::load(targets)?;
            let cost = bench::calibrate_cost_model(&targets, &setup)?;
            let calibrated = MeshSetup { cost, ..setup };
            match out {
                Some(path) => calibrated.save(path)?,
                None => print!("{}", calibrated.to_config_string()),
            }
            return Ok(ExitCode::SUCCESS);
        }
    };
    std::io::stdout().write_all(&bench::emit_report(&report, format)?)?;
    Ok(if report.any_failed() { ExitCode::FAILURE } else { ExitCode::SUCCESS })
}
