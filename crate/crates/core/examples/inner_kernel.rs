//! One micro-kernel call, `c = alpha * a1 * b1 + beta * c`, with its
//! modeled time breakdown.

use meshgemm::config::MeshSetup;
use meshgemm::matrix::{compare, gemm_norm_scale, ref_gemm};
use meshgemm::{InnerKernel, InnerKernelRequest, Layout, Matrix, OpFlag};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> meshgemm::Result<()> {
    let k = 1024;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let a1 = Matrix::<f32>::random_uniform(192, k, Layout::ColMajor, -1.0, 1.0, &mut rng);
    let b1 = Matrix::<f32>::random_uniform(k, 256, Layout::RowMajor, -1.0, 1.0, &mut rng);
    let c = Matrix::<f32>::random_uniform(192, 256, Layout::ColMajor, -1.0, 1.0, &mut rng);

    let mut kernel = InnerKernel::new(MeshSetup::parallella())?;
    let mut out = c.clone();
    let run = kernel.run(InnerKernelRequest {
        a1: a1.view(),
        b1: b1.view(),
        c_in: None,
        c_out: out.view_mut(),
        alpha: 2.0,
        beta: 0.5,
    })?;

    let t = run.timing;
    println!("K = {k}: {} tasks, {} flops", run.profile.tasks.len(), run.flops);
    println!("  input staging {:.6} s  ({:.1}%)", t.input_stage_time, 100.0 * t.ir);
    println!("  device        {:.6} s", t.device_time);
    println!("  post          {:.6} s  ({:.1}%)", t.post_time, 100.0 * t.or);
    println!("  total         {:.6} s", t.total_time);

    let oracle = ref_gemm(2.0, a1.view(), OpFlag::N, b1.view(), OpFlag::N, 0.5, c.view())?;
    let scale = gemm_norm_scale(2.0, a1.view(), b1.view(), 0.5, c.view());
    println!("  {:?}", compare(out.view(), oracle.view(), scale)?);
    Ok(())
}
