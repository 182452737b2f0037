//! Double-precision interface over the single-precision kernel.

use meshgemm::blas::{dgemm_false, GemmCall};
use meshgemm::config::MeshSetup;
use meshgemm::matrix::{compare, gemm_norm_scale, ref_gemm};
use meshgemm::{InnerKernel, Layout, Matrix, OpFlag};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> meshgemm::Result<()> {
    let n = 384;
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let a = Matrix::<f64>::random_uniform(n, n, Layout::ColMajor, -1.0, 1.0, &mut rng);
    let b = Matrix::<f64>::random_uniform(n, n, Layout::ColMajor, -1.0, 1.0, &mut rng);
    let c0 = Matrix::<f64>::random_uniform(n, n, Layout::ColMajor, -1.0, 1.0, &mut rng);

    let mut c = c0.clone();
    let mut kernel = InnerKernel::new(MeshSetup::parallella())?;
    dgemm_false(
        &mut kernel,
        GemmCall::new(OpFlag::N, OpFlag::N, 1.0, a.view(), b.view(), 1.0, c.view_mut())?,
    )?;

    let oracle = ref_gemm(1.0, a.view(), OpFlag::N, b.view(), OpFlag::N, 1.0, c0.view())?;
    let scale = gemm_norm_scale(1.0, a.view(), b.view(), 1.0, c0.view());
    let err = compare(c.view(), oracle.view(), scale)?;
    println!("false dgemm {n}^3: normalized residue {:.2e} against the f64 oracle", err.normalized_residue);
    Ok(())
}
