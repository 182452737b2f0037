//! Strided views, the double-precision reference gemm and the error metrics.

use meshgemm::matrix::{compare, gemm_norm_scale, pack_a, ref_gemm};
use meshgemm::{Layout, Matrix, MatrixView, OpFlag};

fn main() -> meshgemm::Result<()> {
    // A 3x2 matrix stored row-major with a padded leading dimension of 4.
    let buf = [1.0f32, 2.0, 0.0, 0.0, 3.0, 4.0, 0.0, 0.0, 5.0, 6.0, 0.0, 0.0];
    let a = MatrixView::row_major(&buf, 3, 2, 4)?;
    let b = Matrix::<f32>::from_rows(&[[1.0, 0.0, -1.0], [0.5, 2.0, 1.0]]);
    let c = Matrix::<f32>::zeros(3, 3, Layout::ColMajor);

    let r = ref_gemm(1.0, a, OpFlag::N, b.view(), OpFlag::N, 0.0, c.view())?;
    println!("A * B =");
    for i in 0..3 {
        println!("  {:?}", (0..3).map(|j| r.get(i, j)).collect::<Vec<_>>());
    }

    // op(A) through a transposed view: (A^T)^T == A.
    let at = a.t().to_owned();
    let r2 = ref_gemm(1.0, at.view(), OpFlag::T, b.view(), OpFlag::N, 0.0, c.view())?;
    assert_eq!(r, r2);

    // Packing pads to the micro-kernel's 192 x KSUB panel.
    let panel = pack_a(a, OpFlag::N, 0, 2);
    println!("packed A panel: {} x {}", panel.rows(), panel.cols());

    let single = Matrix::<f32>::from_fn(3, 3, Layout::ColMajor, |i, j| r.get(i, j) as f32 * (1.0 + 1e-7));
    let scale = gemm_norm_scale(1.0, a, b.view(), 0.0, c.view());
    println!("{:?}", compare(single.view(), r.view(), scale)?);
    Ok(())
}
