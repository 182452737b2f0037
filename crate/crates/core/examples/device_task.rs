//! Drive the device program by hand: stage one task, write the control
//! block, run it and look at where the finished blocks ended up.

use meshgemm::config::MeshSetup;
use meshgemm::device::{Command, DeviceKernel, KernelConfig};
use meshgemm::mesh::{ControlBlock, Mesh};
use meshgemm::{Layout, Matrix};

fn main() -> meshgemm::Result<()> {
    let setup = MeshSetup::parallella();
    let mut mesh = Mesh::new(setup.mesh, setup.cost)?;
    let dev = DeviceKernel::load(&mut mesh, KernelConfig::PARALLELLA)?;
    let cfg = *dev.config();
    let core0 = mesh.core(0)?;
    for r in core0.regions() {
        println!("core 0 {:<5} @ {:>5} .. {:>5}", r.name, r.offset, r.offset + r.length);
    }

    let a = Matrix::<f32>::from_fn(cfg.m, cfg.ksub, Layout::ColMajor, |i, p| ((i + p) % 3) as f32);
    let b = Matrix::<f32>::from_fn(cfg.ksub, cfg.n, Layout::RowMajor, |p, j| ((p * j) % 5) as f32 - 2.0);
    let hc = *dev.hc_layout();
    mesh.host_write_hc(hc.a[0], 0, a.data())?;
    mesh.host_write_hc(hc.b[0], 0, b.data())?;

    for (command, label) in [(Command::ClearAccumulate, "accumulate"), (Command::Single, "single")] {
        mesh.set_control(ControlBlock { command: command.code(), selector: 0, done_flag: false });
        let before = mesh.ledger().clone();
        dev.epiphany_task(&mut mesh)?;
        let d = mesh.ledger().since(&before);
        let loc = dev.block_location(5, 0, command);
        println!(
            "{label:>10}: {} cycles, {} barriers; core 5's first block sits in core {}",
            d.max_core_cycles(),
            d.barrier_count(),
            loc.core
        );
    }

    let (c, _) = mesh.host_read_hc(hc.c, 0, cfg.m * cfg.n)?;
    let expect: f32 = (0..cfg.ksub).map(|p| a.get(7, p) * b.get(p, 100)).sum();
    println!("c[7, 100] = {} (expected {expect})", c[7 + 100 * cfg.m]);
    Ok(())
}
