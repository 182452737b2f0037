//! User-facing gemm: arbitrary shapes, transposes and leading dimensions,
//! decomposed into `TILE_M x TILE_N` micro-kernel calls.
//!
//! B is packed once per column block and A once per row block; each tile is
//! a single micro-kernel call over the whole (zero-padded) K, so the device
//! accumulator sums every K slice before anything comes back to the host.

use crate::cost::TimingBreakdown;
use crate::error::{Error, Result};
use crate::host::{InnerKernel, InnerKernelRequest};
use crate::matrix::{
    cast, pack_a, pack_b, padded_k, Element, Layout, Matrix, MatrixView, MatrixViewMut, OpFlag,
};
use crate::service::OffloadService;
use crate::{TILE_M, TILE_N};

/// `C = alpha * op(A) * op(B) + beta * C`.
#[derive(Debug)]
pub struct GemmCall<'a, T> {
    pub op_a: OpFlag,
    pub op_b: OpFlag,
    pub alpha: T,
    pub a: MatrixView<'a, T>,
    pub b: MatrixView<'a, T>,
    pub beta: T,
    pub c: MatrixViewMut<'a, T>,
}

impl<'a, T: Element> GemmCall<'a, T> {
    pub fn new(
        op_a: OpFlag,
        op_b: OpFlag,
        alpha: T,
        a: MatrixView<'a, T>,
        b: MatrixView<'a, T>,
        beta: T,
        c: MatrixViewMut<'a, T>,
    ) -> Result<Self> {
        let call = Self { op_a, op_b, alpha, a, b, beta, c };
        call.validate()?;
        Ok(call)
    }

    pub fn m(&self) -> usize {
        self.a.op(self.op_a).rows()
    }

    pub fn n(&self) -> usize {
        self.b.op(self.op_b).cols()
    }

    pub fn k(&self) -> usize {
        self.a.op(self.op_a).cols()
    }

    pub fn validate(&self) -> Result<()> {
        let a = self.a.op(self.op_a);
        let b = self.b.op(self.op_b);
        if a.cols() != b.rows() || self.c.shape() != (a.rows(), b.cols()) {
            return Err(Error::DimensionMismatch(format!(
                "op(A) {}x{}, op(B) {}x{}, C {}x{}",
                a.rows(),
                a.cols(),
                b.rows(),
                b.cols(),
                self.c.rows(),
                self.c.cols()
            )));
        }
        Ok(())
    }
}

/// One micro-kernel invocation's share of C.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Tile {
    pub row0: usize,
    pub col0: usize,
    pub rows: usize,
    pub cols: usize,
}

impl Tile {
    /// Smaller than a full micro-kernel block.
    pub fn is_edge(&self) -> bool {
        self.rows < TILE_M || self.cols < TILE_N
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockPlan {
    pub m: usize,
    pub n: usize,
    pub k: usize,
    pub padded_k: usize,
    /// Column block major, row block minor.
    pub tiles: Vec<Tile>,
}

pub fn plan_blocks(m: usize, n: usize, k: usize) -> BlockPlan {
    let mut tiles = Vec::with_capacity(m.div_ceil(TILE_M) * n.div_ceil(TILE_N));
    for col0 in (0..n).step_by(TILE_N) {
        for row0 in (0..m).step_by(TILE_M) {
            tiles.push(Tile { row0, col0, rows: TILE_M.min(m - row0), cols: TILE_N.min(n - col0) });
        }
    }
    BlockPlan { m, n, k, padded_k: padded_k(k), tiles }
}

/// Something that runs micro-kernel calls.
pub trait GemmEngine {
    fn run_tile(&mut self, req: InnerKernelRequest<'_>) -> Result<TileRun>;
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TileRun {
    pub timing: TimingBreakdown,
    pub flops: u64,
}

impl GemmEngine for InnerKernel {
    fn run_tile(&mut self, req: InnerKernelRequest<'_>) -> Result<TileRun> {
        let run = self.run(req)?;
        Ok(TileRun { timing: run.timing, flops: run.flops })
    }
}

impl GemmEngine for OffloadService {
    fn run_tile(&mut self, req: InnerKernelRequest<'_>) -> Result<TileRun> {
        let r = self.submit(req)?;
        Ok(TileRun { timing: r.timing, flops: r.flops })
    }
}

/// Totals over the tiles of one gemm.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct GemmStats {
    pub tiles: usize,
    pub timing: TimingBreakdown,
    /// Device flops, padding included.
    pub flops: u64,
}

pub fn sgemm<E: GemmEngine + ?Sized>(engine: &mut E, call: GemmCall<'_, f32>) -> Result<GemmStats> {
    call.validate()?;
    let (m, n, k) = (call.m(), call.n(), call.k());
    let GemmCall { op_a, op_b, alpha, a, b, beta, mut c } = call;
    let mut stats = GemmStats::default();
    if m == 0 || n == 0 {
        return Ok(stats);
    }
    if k == 0 {
        scale_in_place(&mut c, beta);
        return Ok(stats);
    }
    let plan = plan_blocks(m, n, k);
    let a_panels: Vec<Matrix<f32>> = (0..m).step_by(TILE_M).map(|row0| pack_a(a, op_a, row0, k)).collect();
    let mut edge = Matrix::<f32>::zeros(TILE_M, TILE_N, Layout::ColMajor);
    let mut b_panel: Option<(usize, Matrix<f32>)> = None;
    for tile in &plan.tiles {
        if b_panel.as_ref().map(|(c0, _)| *c0) != Some(tile.col0) {
            b_panel = Some((tile.col0, pack_b(b, op_b, tile.col0, k)));
        }
        let b1 = b_panel.as_ref().expect("packed above").1.view();
        let a1 = a_panels[tile.row0 / TILE_M].view();
        let run = if tile.is_edge() {
            edge.data_mut().fill(0.0);
            if beta != 0.0 {
                for j in 0..tile.cols {
                    for i in 0..tile.rows {
                        edge.set(i, j, c.get(tile.row0 + i, tile.col0 + j));
                    }
                }
            }
            let run = engine.run_tile(InnerKernelRequest {
                a1,
                b1,
                c_in: None,
                c_out: edge.view_mut(),
                alpha,
                beta,
            })?;
            for j in 0..tile.cols {
                for i in 0..tile.rows {
                    c.set(tile.row0 + i, tile.col0 + j, edge.get(i, j));
                }
            }
            run
        } else {
            let c_out = c.submatrix_mut(tile.row0, tile.col0, TILE_M, TILE_N)?;
            engine.run_tile(InnerKernelRequest { a1, b1, c_in: None, c_out, alpha, beta })?
        };
        stats.tiles += 1;
        stats.flops += run.flops;
        stats.timing.accumulate(&run.timing);
    }
    Ok(stats)
}

fn scale_in_place(c: &mut MatrixViewMut<'_, f32>, beta: f32) {
    for j in 0..c.cols() {
        for i in 0..c.rows() {
            let v = if beta == 0.0 { 0.0 } else { beta * c.get(i, j) };
            c.set(i, j, v);
        }
    }
}

/// Double-precision interface over the single-precision kernel: inputs are
/// rounded to f32, the product is computed by [`sgemm`], and the result is
/// widened back into `C`.
pub fn dgemm_false<E: GemmEngine + ?Sized>(engine: &mut E, call: GemmCall<'_, f64>) -> Result<GemmStats> {
    call.validate()?;
    let GemmCall { op_a, op_b, alpha, a, b, beta, mut c } = call;
    let a32: Matrix<f32> = cast(a);
    let b32: Matrix<f32> = cast(b);
    let mut c32: Matrix<f32> =
        if beta == 0.0 { Matrix::zeros(c.rows(), c.cols(), Layout::ColMajor) } else { cast(c.as_view()) };
    let stats = sgemm(
        engine,
        GemmCall::new(op_a, op_b, alpha as f32, a32.view(), b32.view(), beta as f32, c32.view_mut())?,
    )?;
    for j in 0..c.cols() {
        for i in 0..c.rows() {
            c.set(i, j, f64::from(c32.get(i, j)));
        }
    }
    Ok(stats)
}

/// Classic column-major gemm surface:
/// `(transa, transb, m, n, k, alpha, a, lda, b, ldb, beta, c, ldc)`.
#[allow(clippy::too_many_arguments)]
pub fn sgemm_blas<E: GemmEngine + ?Sized>(
    engine: &mut E,
    transa: char,
    transb: char,
    m: usize,
    n: usize,
    k: usize,
    alpha: f32,
    a: &[f32],
    lda: usize,
    b: &[f32],
    ldb: usize,
    beta: f32,
    c: &mut [f32],
    ldc: usize,
) -> Result<GemmStats> {
    let op_a = OpFlag::from_char(transa)?;
    let op_b = OpFlag::from_char(transb)?;
    let (ar, ac) = if op_a.is_transposed() { (k, m) } else { (m, k) };
    let (br, bc) = if op_b.is_transposed() { (n, k) } else { (k, n) };
    let a = MatrixView::col_major(a, ar, ac, lda)?;
    let b = MatrixView::col_major(b, br, bc, ldb)?;
    let c = MatrixViewMut::col_major(c, m, n, ldc)?;
    sgemm(engine, GemmCall::new(op_a, op_b, alpha, a, b, beta, c)?)
}
