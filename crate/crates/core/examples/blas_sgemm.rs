//! The classic column-major gemm surface on arbitrary shapes.

use meshgemm::blas::{plan_blocks, sgemm_blas};
use meshgemm::config::MeshSetup;
use meshgemm::matrix::{compare, gemm_norm_scale, ref_gemm};
use meshgemm::{InnerKernel, Layout, Matrix, MatrixView, OpFlag};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> meshgemm::Result<()> {
    let (m, n, k) = (300, 280, 100);
    let plan = plan_blocks(m, n, k);
    println!(
        "{m}x{n}x{k}: {} tiles ({} on an edge), K padded to {}",
        plan.tiles.len(),
        plan.tiles.iter().filter(|t| t.is_edge()).count(),
        plan.padded_k
    );

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    // A is stored k x m (transposed), B is n x k (transposed), C has ldc = m + 8.
    let a = Matrix::<f32>::random_uniform(k, m, Layout::ColMajor, -1.0, 1.0, &mut rng);
    let b = Matrix::<f32>::random_uniform(n, k, Layout::ColMajor, -1.0, 1.0, &mut rng);
    let ldc = m + 8;
    let mut c = vec![1.0f32; ldc * n];
    let c0 = c.clone();

    let mut kernel = InnerKernel::new(MeshSetup::parallella())?;
    let stats = sgemm_blas(&mut kernel, 'T', 'T', m, n, k, 1.0, a.data(), k, b.data(), n, -1.0, &mut c, ldc)?;
    println!("model time {:.4} s over {} tiles", stats.timing.total_time, stats.tiles);

    let c0v = MatrixView::col_major(&c0, m, n, ldc)?;
    let oracle = ref_gemm(1.0, a.view(), OpFlag::T, b.view(), OpFlag::T, -1.0, c0v)?;
    let scale = gemm_norm_scale(1.0, a.view(), b.view(), -1.0, c0v);
    let err = compare(MatrixView::col_major(&c, m, n, ldc)?, oracle.view(), scale)?;
    println!("normalized residue {:.2e}", err.normalized_residue);
    Ok(())
}
