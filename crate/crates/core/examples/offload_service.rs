//! The offload service: start once, serve several calls, stop.

use meshgemm::config::MeshSetup;
use meshgemm::{InnerKernelRequest, Layout, Matrix, OffloadService};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> meshgemm::Result<()> {
    let mut svc = OffloadService::new(MeshSetup::parallella());
    svc.start()?;
    println!("state {:?}, flops during init: {}", svc.state(), svc.init_ledger().unwrap().flop_count());

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for k in [256, 512] {
        let a = Matrix::<f32>::random_uniform(192, k, Layout::ColMajor, -1.0, 1.0, &mut rng);
        let b = Matrix::<f32>::random_uniform(k, 256, Layout::RowMajor, -1.0, 1.0, &mut rng);
        let mut c = Matrix::<f32>::zeros(192, 256, Layout::ColMajor);
        let r = svc.submit(InnerKernelRequest {
            a1: a.view(),
            b1: b.view(),
            c_in: None,
            c_out: c.view_mut(),
            alpha: 1.0,
            beta: 0.0,
        })?;
        println!(
            "K = {k}: total {:.6} s of which host-to-host copies {:.6} s ({} bytes)",
            r.timing.total_time, r.timing.hh_copy_time, r.profile.hh_bytes
        );
    }
    println!("flag trace: {:?}", svc.flag_trace());
    svc.stop()?;
    println!("state {:?}; restart allowed: {}", svc.state(), svc.start().is_ok());
    Ok(())
}
