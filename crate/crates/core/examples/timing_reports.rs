//! Kernel tables (same process and through the service) and a desk-scale
//! testsuite sweep. Pass a size argument to change the sweep, e.g. `-- 4096`.

use meshgemm::bench::{self, emit_report, Format, Mode, Precision, TestsuiteOptions};

fn main() -> meshgemm::Result<()> {
    let size: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(384);
    for mode in [Mode::Inproc, Mode::Service] {
        let report = bench::run_kernel_bench(4096, mode, 1)?;
        println!("{}", String::from_utf8_lossy(&emit_report(&report, Format::Text)?));
    }
    for precision in [Precision::Single, Precision::FalseDouble] {
        let run = bench::testsuite(&TestsuiteOptions::new(size, size, size, precision))?;
        println!("{}", String::from_utf8_lossy(&emit_report(&run.report, Format::Text)?));
    }
    Ok(())
}
