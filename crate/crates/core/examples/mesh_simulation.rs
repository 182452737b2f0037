//! The mesh simulator on its own: local memory, lockstep phases, remote
//! stores and the cycle ledger.

use meshgemm::config::MeshSetup;
use meshgemm::mesh::{Direction, Mesh, Step};

fn main() -> meshgemm::Result<()> {
    let setup = MeshSetup::parallella();
    let mut mesh = Mesh::new(setup.mesh, setup.cost)?;
    let (rows, cols) = setup.mesh.grid();
    println!("{} cores ({rows}x{cols}), {} bytes each", mesh.num_cores(), setup.mesh.local_mem_bytes);

    let mut buf = None;
    for core in 0..mesh.num_cores() {
        buf = Some(mesh.allocate_region(core, "TOKEN", 64)?);
    }
    let buf = buf.unwrap();

    // Each core sends its id to the right-hand neighbour. Stores land at the
    // end of the phase, so nobody sees a neighbour's value mid-phase.
    mesh.step(|ctx| {
        let next = (ctx.id() + 1) % ctx.num_cores();
        ctx.compute(16);
        ctx.remote_write(next, buf, 0, vec![ctx.id() as f32], true)?;
        Ok(Step::Barrier)
    })?;
    let got: Vec<f32> =
        (0..mesh.num_cores()).map(|c| mesh.host_read_local(c, buf, 0, 1).unwrap()[0]).collect();
    println!("after one hop: {got:?}");

    let secs = mesh.hc_transfer(Direction::HostToHc, 1 << 20)?;
    let l = mesh.ledger();
    println!(
        "ledger: {} flops, {} barriers, max core cycles {}, 1 MiB host write = {secs:.6} model s",
        l.flop_count(),
        l.barrier_count(),
        l.max_core_cycles()
    );

    // Running past the 32 KB budget is a fault, not a silent overlap.
    match mesh.allocate_region(0, "HUGE", 32768) {
        Err(e) => println!("expected fault: {e}"),
        Ok(_) => unreachable!(),
    }
    Ok(())
}
