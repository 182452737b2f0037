//! Strided matrix views, panel packing, the double-precision reference gemm,
//! precision casting and the error metrics every other module reports.
//!
//! A matrix is described the same way the classic BLAS / BLIS surfaces do:
//! a buffer, a shape and two element strides. Element `(i, j)` lives at
//! `i * row_stride + j * col_stride`. Column-major storage with leading
//! dimension `ld` is `row_stride = 1, col_stride = ld`; row-major is the
//! mirror image.

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::{KSUB, TILE_M, TILE_N};

/// Floating point role of a buffer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ElemKind {
    Single,
    Double,
}

/// Scalar types a [`MatrixView`] can hold.
pub trait Element: Copy + Default + PartialEq + fmt::Debug + Send + Sync + 'static {
    const KIND: ElemKind;
    /// Unit roundoff of the type (half the machine epsilon).
    const UNIT_ROUNDOFF: f64;

    fn to_f64(self) -> f64;
    /// Round-to-nearest-even conversion from double.
    fn from_f64(v: f64) -> Self;
}

impl Element for f32 {
    const KIND: ElemKind = ElemKind::Single;
    const UNIT_ROUNDOFF: f64 = f32::EPSILON as f64 / 2.0;

    #[inline]
    fn to_f64(self) -> f64 {
        self as f64
    }

    #[inline]
    fn from_f64(v: f64) -> Self {
        v as f32
    }
}

impl Element for f64 {
    const KIND: ElemKind = ElemKind::Double;
    const UNIT_ROUNDOFF: f64 = f64::EPSILON / 2.0;

    #[inline]
    fn to_f64(self) -> f64 {
        self
    }

    #[inline]
    fn from_f64(v: f64) -> Self {
        v
    }
}

/// Transpose flag in the BLIS testsuite naming scheme.
///
/// The operands here are real, so conjugation is the identity: `C` behaves
/// exactly like `N` and `H` exactly like `T`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum OpFlag {
    N,
    T,
    C,
    H,
}

impl OpFlag {
    pub const ALL: [OpFlag; 4] = [OpFlag::N, OpFlag::C, OpFlag::T, OpFlag::H];

    pub fn from_char(c: char) -> Result<Self> {
        match c.to_ascii_lowercase() {
            'n' => Ok(OpFlag::N),
            't' => Ok(OpFlag::T),
            'c' => Ok(OpFlag::C),
            'h' => Ok(OpFlag::H),
            _ => Err(Error::InvalidArgument(format!("unknown transpose flag '{c}'"))),
        }
    }

    pub fn as_char(self) -> char {
        match self {
            OpFlag::N => 'n',
            OpFlag::T => 't',
            OpFlag::C => 'c',
            OpFlag::H => 'h',
        }
    }

    /// Collapse conjugation for real data.
    pub fn normalize(self) -> Self {
        match self {
            OpFlag::N | OpFlag::C => OpFlag::N,
            OpFlag::T | OpFlag::H => OpFlag::T,
        }
    }

    pub fn is_transposed(self) -> bool {
        self.normalize() == OpFlag::T
    }
}

impl fmt::Display for OpFlag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_char())
    }
}

/// Storage order of an owned [`Matrix`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Layout {
    ColMajor,
    RowMajor,
}

fn check_view(len: usize, rows: usize, cols: usize, rs: usize, cs: usize) -> Result<()> {
    if rows == 0 || cols == 0 {
        return Ok(());
    }
    let last =
        (rows - 1).checked_mul(rs).and_then(|r| (cols - 1).checked_mul(cs).and_then(|c| r.checked_add(c)));
    match last {
        Some(last) if last < len => {}
        _ => {
            return Err(Error::InvalidView(format!(
                "{rows}x{cols} view with strides ({rs}, {cs}) exceeds buffer of {len}"
            )))
        }
    }
    // Injectivity: one dimension must step over the whole extent of the other.
    let distinct = (rows == 1 || rs > 0) && (cols == 1 || cs > 0) && {
        rows == 1 || cols == 1 || cs >= rows * rs || rs >= cols * cs
    };
    if !distinct {
        return Err(Error::InvalidView(format!(
            "{rows}x{cols} view with strides ({rs}, {cs}) maps two elements to one index"
        )));
    }
    Ok(())
}

/// Read-only strided view.
#[derive(Clone, Copy)]
pub struct MatrixView<'a, T> {
    data: &'a [T],
    rows: usize,
    cols: usize,
    row_stride: usize,
    col_stride: usize,
}

impl<T: fmt::Debug> fmt::Debug for MatrixView<'_, T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MatrixView")
            .field("rows", &self.rows)
            .field("cols", &self.cols)
            .field("row_stride", &self.row_stride)
            .field("col_stride", &self.col_stride)
            .finish()
    }
}

impl<'a, T: Element> MatrixView<'a, T> {
    pub fn new(
        data: &'a [T],
        rows: usize,
        cols: usize,
        row_stride: usize,
        col_stride: usize,
    ) -> Result<Self> {
        check_view(data.len(), rows, cols, row_stride, col_stride)?;
        Ok(Self { data, rows, cols, row_stride, col_stride })
    }

    /// Column-major view with leading dimension `ld`.
    pub fn col_major(data: &'a [T], rows: usize, cols: usize, ld: usize) -> Result<Self> {
        if ld < rows.max(1) {
            return Err(Error::InvalidView(format!("leading dimension {ld} < rows {rows}")));
        }
        Self::new(data, rows, cols, 1, ld)
    }

    /// Row-major view with leading dimension `ld`.
    pub fn row_major(data: &'a [T], rows: usize, cols: usize, ld: usize) -> Result<Self> {
        if ld < cols.max(1) {
            return Err(Error::InvalidView(format!("leading dimension {ld} < cols {cols}")));
        }
        Self::new(data, rows, cols, ld, 1)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row_stride(&self) -> usize {
        self.row_stride
    }

    pub fn col_stride(&self) -> usize {
        self.col_stride
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        debug_assert!(i < self.rows && j < self.cols);
        self.data[i * self.row_stride + j * self.col_stride]
    }

    /// Swap the roles of rows and columns without touching the data.
    pub fn t(&self) -> Self {
        Self {
            data: self.data,
            rows: self.cols,
            cols: self.rows,
            row_stride: self.col_stride,
            col_stride: self.row_stride,
        }
    }

    /// `op(self)` for a BLAS transpose flag.
    pub fn op(&self, flag: OpFlag) -> Self {
        if flag.is_transposed() {
            self.t()
        } else {
            *self
        }
    }

    pub fn submatrix(&self, r0: usize, c0: usize, rows: usize, cols: usize) -> Result<Self> {
        if r0 + rows > self.rows || c0 + cols > self.cols {
            return Err(Error::InvalidView(format!(
                "submatrix ({r0}+{rows}, {c0}+{cols}) outside {}x{}",
                self.rows, self.cols
            )));
        }
        if rows == 0 || cols == 0 {
            return Ok(Self { data: &self.data[..0], rows, cols, ..*self });
        }
        let start = r0 * self.row_stride + c0 * self.col_stride;
        Ok(Self { data: &self.data[start..], rows, cols, ..*self })
    }

    pub fn is_col_major(&self) -> bool {
        self.row_stride == 1
    }

    pub fn is_row_major(&self) -> bool {
        self.col_stride == 1
    }

    /// Copy into an owned column-major matrix.
    pub fn to_owned(&self) -> Matrix<T> {
        Matrix::from_fn(self.rows, self.cols, Layout::ColMajor, |i, j| self.get(i, j))
    }
}

/// Mutable strided view.
pub struct MatrixViewMut<'a, T> {
    data: &'a mut [T],
    rows: usize,
    cols: usize,
    row_stride: usize,
    col_stride: usize,
}

impl<T: fmt::Debug> fmt::Debug for MatrixViewMut<'_, T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MatrixViewMut")
            .field("rows", &self.rows)
            .field("cols", &self.cols)
            .field("row_stride", &self.row_stride)
            .field("col_stride", &self.col_stride)
            .finish()
    }
}

impl<'a, T: Element> MatrixViewMut<'a, T> {
    pub fn new(
        data: &'a mut [T],
        rows: usize,
        cols: usize,
        row_stride: usize,
        col_stride: usize,
    ) -> Result<Self> {
        check_view(data.len(), rows, cols, row_stride, col_stride)?;
        Ok(Self { data, rows, cols, row_stride, col_stride })
    }

    pub fn col_major(data: &'a mut [T], rows: usize, cols: usize, ld: usize) -> Result<Self> {
        if ld < rows.max(1) {
            return Err(Error::InvalidView(format!("leading dimension {ld} < rows {rows}")));
        }
        Self::new(data, rows, cols, 1, ld)
    }

    pub fn row_major(data: &'a mut [T], rows: usize, cols: usize, ld: usize) -> Result<Self> {
        if ld < cols.max(1) {
            return Err(Error::InvalidView(format!("leading dimension {ld} < cols {cols}")));
        }
        Self::new(data, rows, cols, ld, 1)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        debug_assert!(i < self.rows && j < self.cols);
        self.data[i * self.row_stride + j * self.col_stride]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: T) {
        debug_assert!(i < self.rows && j < self.cols);
        self.data[i * self.row_stride + j * self.col_stride] = v;
    }

    pub fn as_view(&self) -> MatrixView<'_, T> {
        MatrixView {
            data: self.data,
            rows: self.rows,
            cols: self.cols,
            row_stride: self.row_stride,
            col_stride: self.col_stride,
        }
    }

    pub fn reborrow(&mut self) -> MatrixViewMut<'_, T> {
        MatrixViewMut {
            data: self.data,
            rows: self.rows,
            cols: self.cols,
            row_stride: self.row_stride,
            col_stride: self.col_stride,
        }
    }

    pub fn submatrix_mut(
        &mut self,
        r0: usize,
        c0: usize,
        rows: usize,
        cols: usize,
    ) -> Result<MatrixViewMut<'_, T>> {
        if r0 + rows > self.rows || c0 + cols > self.cols {
            return Err(Error::InvalidView(format!(
                "submatrix ({r0}+{rows}, {c0}+{cols}) outside {}x{}",
                self.rows, self.cols
            )));
        }
        let start = if rows == 0 || cols == 0 { 0 } else { r0 * self.row_stride + c0 * self.col_stride };
        Ok(MatrixViewMut {
            data: &mut self.data[start..],
            rows,
            cols,
            row_stride: self.row_stride,
            col_stride: self.col_stride,
        })
    }

    pub fn fill(&mut self, v: T) {
        for j in 0..self.cols {
            for i in 0..self.rows {
                self.set(i, j, v);
            }
        }
    }
}

/// Owned dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<T> {
    data: Vec<T>,
    rows: usize,
    cols: usize,
    layout: Layout,
}

impl<T: Element> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize, layout: Layout) -> Self {
        Self { data: vec![T::default(); rows * cols], rows, cols, layout }
    }

    pub fn from_vec(rows: usize, cols: usize, layout: Layout, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch(format!(
                "{} elements for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Self { data, rows, cols, layout })
    }

    pub fn from_fn(rows: usize, cols: usize, layout: Layout, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut m = Self::zeros(rows, cols, layout);
        for j in 0..cols {
            for i in 0..rows {
                let idx = m.index(i, j);
                m.data[idx] = f(i, j);
            }
        }
        m
    }

    /// Row-major literal, handy in tests: `Matrix::from_rows(&[[1., 2.], [3., 4.]])`.
    pub fn from_rows<const C: usize>(rows: &[[T; C]]) -> Self {
        Self::from_fn(rows.len(), C, Layout::ColMajor, |i, j| rows[i][j])
    }

    pub fn identity(n: usize) -> Self {
        Self::from_fn(n, n, Layout::ColMajor, |i, j| if i == j { T::from_f64(1.0) } else { T::default() })
    }

    /// Entries drawn independently from `uniform(lo, hi)`.
    pub fn random_uniform<R: Rng + ?Sized>(
        rows: usize,
        cols: usize,
        layout: Layout,
        lo: f64,
        hi: f64,
        rng: &mut R,
    ) -> Self {
        Self::from_fn(rows, cols, layout, |_, _| T::from_f64(rng.gen_range(lo..hi)))
    }

    #[inline]
    fn index(&self, i: usize, j: usize) -> usize {
        match self.layout {
            Layout::ColMajor => i + j * self.rows,
            Layout::RowMajor => i * self.cols + j,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn layout(&self) -> Layout {
        self.layout
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[self.index(i, j)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: T) {
        let idx = self.index(i, j);
        self.data[idx] = v;
    }

    fn strides(&self) -> (usize, usize) {
        match self.layout {
            Layout::ColMajor => (1, self.rows.max(1)),
            Layout::RowMajor => (self.cols.max(1), 1),
        }
    }

    pub fn view(&self) -> MatrixView<'_, T> {
        let (rs, cs) = self.strides();
        MatrixView { data: &self.data, rows: self.rows, cols: self.cols, row_stride: rs, col_stride: cs }
    }

    pub fn view_mut(&mut self) -> MatrixViewMut<'_, T> {
        let (rs, cs) = self.strides();
        MatrixViewMut {
            data: &mut self.data,
            rows: self.rows,
            cols: self.cols,
            row_stride: rs,
            col_stride: cs,
        }
    }
}

/// Double-precision reference gemm: `alpha * op(A) * op(B) + beta * C`.
///
/// Products and sums are formed in `f64` whatever the operand type, so the
/// result is a strictly tighter reference than any single-precision path.
/// `beta == 0` never reads `C`, and `alpha == 0` skips the product.
pub fn ref_gemm<TA: Element, TB: Element, TC: Element>(
    alpha: f64,
    a: MatrixView<'_, TA>,
    op_a: OpFlag,
    b: MatrixView<'_, TB>,
    op_b: OpFlag,
    beta: f64,
    c: MatrixView<'_, TC>,
) -> Result<Matrix<f64>> {
    let a = a.op(op_a);
    let b = b.op(op_b);
    let (m, k) = a.shape();
    let n = b.cols();
    if b.rows() != k || c.shape() != (m, n) {
        return Err(Error::DimensionMismatch(format!(
            "op(A) {}x{}, op(B) {}x{}, C {}x{}",
            m,
            k,
            b.rows(),
            n,
            c.rows(),
            c.cols()
        )));
    }
    let mut out = Matrix::<f64>::zeros(m, n, Layout::ColMajor);
    let acc = out.data_mut();
    if alpha != 0.0 {
        for j in 0..n {
            let col = &mut acc[j * m..(j + 1) * m];
            for p in 0..k {
                let bpj = b.get(p, j).to_f64();
                for (i, slot) in col.iter_mut().enumerate() {
                    *slot += a.get(i, p).to_f64() * bpj;
                }
            }
        }
    }
    for j in 0..n {
        for i in 0..m {
            let s = acc[i + j * m];
            let ab = if alpha != 0.0 { alpha * s } else { 0.0 };
            acc[i + j * m] = if beta != 0.0 { ab + beta * c.get(i, j).to_f64() } else { ab };
        }
    }
    Ok(out)
}

/// Round `len` up to the next multiple of the task depth.
pub fn padded_k(len: usize) -> usize {
    len.div_ceil(KSUB) * KSUB
}

/// Pack `TILE_M` rows of `op(A)` starting at `row_offset` into a column-major
/// panel of `padded_k(k_len)` columns. Everything outside `op(A)` or past
/// `k_len` is zero.
pub fn pack_a(a: MatrixView<'_, f32>, op_a: OpFlag, row_offset: usize, k_len: usize) -> Matrix<f32> {
    let a = a.op(op_a);
    let kp = padded_k(k_len);
    let k_avail = k_len.min(a.cols());
    let rows_avail = a.rows().saturating_sub(row_offset).min(TILE_M);
    let mut panel = Matrix::zeros(TILE_M, kp, Layout::ColMajor);
    let data = panel.data_mut();
    for p in 0..k_avail {
        let col = &mut data[p * TILE_M..p * TILE_M + rows_avail];
        for (r, slot) in col.iter_mut().enumerate() {
            *slot = a.get(row_offset + r, p);
        }
    }
    panel
}

/// Pack `TILE_N` columns of `op(B)` starting at `col_offset` into a row-major
/// panel of `padded_k(k_len)` rows, zero outside `op(B)` or past `k_len`.
pub fn pack_b(b: MatrixView<'_, f32>, op_b: OpFlag, col_offset: usize, k_len: usize) -> Matrix<f32> {
    let b = b.op(op_b);
    let kp = padded_k(k_len);
    let k_avail = k_len.min(b.rows());
    let cols_avail = b.cols().saturating_sub(col_offset).min(TILE_N);
    let mut panel = Matrix::zeros(kp, TILE_N, Layout::RowMajor);
    let data = panel.data_mut();
    for p in 0..k_avail {
        let row = &mut data[p * TILE_N..p * TILE_N + cols_avail];
        for (c, slot) in row.iter_mut().enumerate() {
            *slot = b.get(p, col_offset + c);
        }
    }
    panel
}

/// Element-wise precision change. Downcasts round to nearest even,
/// upcasts are exact. The result is column-major.
pub fn cast<S: Element, D: Element>(m: MatrixView<'_, S>) -> Matrix<D> {
    Matrix::from_fn(m.rows(), m.cols(), Layout::ColMajor, |i, j| D::from_f64(m.get(i, j).to_f64()))
}

pub fn frobenius_norm<T: Element>(m: MatrixView<'_, T>) -> f64 {
    let mut s = 0.0;
    for j in 0..m.cols() {
        for i in 0..m.rows() {
            let v = m.get(i, j).to_f64();
            s += v * v;
        }
    }
    s.sqrt()
}

/// Scale used to normalize gemm residues:
/// `|alpha| * ||A||_F * ||B||_F + |beta| * ||C||_F`.
pub fn gemm_norm_scale<TA: Element, TB: Element, TC: Element>(
    alpha: f64,
    a: MatrixView<'_, TA>,
    b: MatrixView<'_, TB>,
    beta: f64,
    c: MatrixView<'_, TC>,
) -> f64 {
    let mut s = 0.0;
    if alpha != 0.0 {
        s += alpha.abs() * frobenius_norm(a) * frobenius_norm(b);
    }
    if beta != 0.0 {
        s += beta.abs() * frobenius_norm(c);
    }
    s
}

/// Floor on the relative-error denominator.
pub const REL_ERR_FLOOR: f64 = 1e-30;

/// Accuracy of a computed matrix against a reference.
///
/// * `mean_rel_err`, `max_rel_err`: mean / max over entries of
///   `|t - r| / max(|r|, 1e-30)`.
/// * `normalized_residue`: `||T - R||_F / norm_scale`. For gemm the scale is
///   [`gemm_norm_scale`], which makes the residue a normwise relative error
///   bounded by a small multiple of `K * u` for a backward-stable product.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ErrorReport {
    pub mean_rel_err: f64,
    pub max_rel_err: f64,
    pub normalized_residue: f64,
}

pub fn compare<TT: Element, TR: Element>(
    test: MatrixView<'_, TT>,
    reference: MatrixView<'_, TR>,
    norm_scale: f64,
) -> Result<ErrorReport> {
    if test.shape() != reference.shape() {
        return Err(Error::DimensionMismatch(format!(
            "compare {}x{} against {}x{}",
            test.rows(),
            test.cols(),
            reference.rows(),
            reference.cols()
        )));
    }
    let (m, n) = test.shape();
    let mut sum_rel = 0.0;
    let mut max_rel: f64 = 0.0;
    let mut diff_sq = 0.0;
    for j in 0..n {
        for i in 0..m {
            let t = test.get(i, j).to_f64();
            let r = reference.get(i, j).to_f64();
            let d = (t - r).abs();
            let rel = if d == 0.0 { 0.0 } else { d / r.abs().max(REL_ERR_FLOOR) };
            sum_rel += rel;
            max_rel = max_rel.max(rel);
            diff_sq += d * d;
        }
    }
    let count = (m * n).max(1) as f64;
    let diff = diff_sq.sqrt();
    let normalized_residue = if diff == 0.0 { 0.0 } else { diff / norm_scale };
    Ok(ErrorReport { mean_rel_err: sum_rel / count, max_rel_err: max_rel, normalized_residue })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn naive_ijk(a: &Matrix<f64>, b: &Matrix<f64>) -> Matrix<f64> {
        // Independent loop order: dot products, k innermost.
        let mut out = Matrix::zeros(a.rows(), b.cols(), Layout::RowMajor);
        for i in 0..a.rows() {
            for j in 0..b.cols() {
                let mut s = 0.0;
                for p in 0..a.cols() {
                    s += a.get(i, p) * b.get(p, j);
                }
                out.set(i, j, s);
            }
        }
        out
    }

    #[test]
    fn ref_gemm_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = Matrix::<f64>::random_uniform(3, 3, Layout::ColMajor, -1.0, 1.0, &mut rng);
        let i3 = Matrix::<f64>::identity(3);
        let c = Matrix::<f64>::zeros(3, 3, Layout::ColMajor);
        let out = ref_gemm(1.0, i3.view(), OpFlag::N, m.view(), OpFlag::N, 0.0, c.view()).unwrap();
        assert_eq!(out.view().to_owned(), m.view().to_owned());
    }

    #[test]
    fn ref_gemm_alpha_zero_returns_c() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = Matrix::<f32>::random_uniform(4, 5, Layout::ColMajor, -1.0, 1.0, &mut rng);
        let b = Matrix::<f32>::random_uniform(5, 3, Layout::ColMajor, -1.0, 1.0, &mut rng);
        let c = Matrix::<f64>::random_uniform(4, 3, Layout::ColMajor, -1.0, 1.0, &mut rng);
        let out = ref_gemm(0.0, a.view(), OpFlag::N, b.view(), OpFlag::N, 1.0, c.view()).unwrap();
        assert_eq!(out, c);
    }

    #[test]
    fn ref_gemm_hand_arithmetic() {
        let a = Matrix::<f64>::from_rows(&[[1.0, 2.0], [3.0, 4.0]]);
        let b = Matrix::<f64>::from_rows(&[[5.0, 6.0], [7.0, 8.0]]);
        let c = Matrix::<f64>::zeros(2, 2, Layout::ColMajor);
        let out = ref_gemm(1.0, a.view(), OpFlag::N, b.view(), OpFlag::N, 0.0, c.view()).unwrap();
        assert_eq!(out, Matrix::from_rows(&[[19.0, 22.0], [43.0, 50.0]]));
    }

    #[test]
    fn ref_gemm_dimension_mismatch() {
        let a = Matrix::<f64>::zeros(2, 3, Layout::ColMajor);
        let b = Matrix::<f64>::zeros(2, 3, Layout::ColMajor);
        let c = Matrix::<f64>::zeros(2, 3, Layout::ColMajor);
        let err = ref_gemm(1.0, a.view(), OpFlag::N, b.view(), OpFlag::N, 0.0, c.view());
        assert!(matches!(err, Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn ref_gemm_beta_zero_ignores_nan() {
        let a = Matrix::<f64>::identity(2);
        let c = Matrix::<f64>::from_rows(&[[f64::NAN, 1.0], [2.0, f64::NAN]]);
        let out = ref_gemm(1.0, a.view(), OpFlag::N, a.view(), OpFlag::N, 0.0, c.view()).unwrap();
        assert_eq!(out, Matrix::identity(2));
    }

    proptest! {
        #[test]
        fn ref_gemm_matches_independent_loop_order(
            m in 1usize..=8, n in 1usize..=8, k in 1usize..=8, seed in any::<u64>()
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = Matrix::<f64>::random_uniform(m, k, Layout::ColMajor, -1.0, 1.0, &mut rng);
            let b = Matrix::<f64>::random_uniform(k, n, Layout::RowMajor, -1.0, 1.0, &mut rng);
            let c = Matrix::<f64>::zeros(m, n, Layout::ColMajor);
            let out = ref_gemm(1.0, a.view(), OpFlag::N, b.view(), OpFlag::N, 0.0, c.view()).unwrap();
            let expect = naive_ijk(&a, &b);
            for i in 0..m {
                for j in 0..n {
                    prop_assert_eq!(out.get(i, j), expect.get(i, j));
                }
            }
        }

        #[test]
        fn conjugate_flags_match_plain(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = Matrix::<f32>::random_uniform(5, 6, Layout::ColMajor, -1.0, 1.0, &mut rng);
            let b = Matrix::<f32>::random_uniform(5, 4, Layout::ColMajor, -1.0, 1.0, &mut rng);
            let c = Matrix::<f32>::zeros(6, 4, Layout::ColMajor);
            let t = ref_gemm(1.0, a.view(), OpFlag::T, b.view(), OpFlag::N, 0.0, c.view()).unwrap();
            let h = ref_gemm(1.0, a.view(), OpFlag::H, b.view(), OpFlag::C, 0.0, c.view()).unwrap();
            prop_assert_eq!(t, h);
        }

        #[test]
        fn pack_a_is_index_walk(
            rows in 1usize..260, k in 1usize..140, off in 0usize..100, trans in any::<bool>(), seed in any::<u64>()
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let op = if trans { OpFlag::T } else { OpFlag::N };
            let stored = if trans {
                Matrix::<f32>::random_uniform(k, rows, Layout::ColMajor, -1.0, 1.0, &mut rng)
            } else {
                Matrix::<f32>::random_uniform(rows, k, Layout::ColMajor, -1.0, 1.0, &mut rng)
            };
            let panel = pack_a(stored.view(), op, off, k);
            prop_assert_eq!(panel.cols(), padded_k(k));
            for p in 0..panel.cols() {
                for r in 0..TILE_M {
                    let gi = off + r;
                    let expect = if gi < rows && p < k {
                        if trans { stored.get(p, gi) } else { stored.get(gi, p) }
                    } else {
                        0.0
                    };
                    prop_assert_eq!(panel.data()[r + p * TILE_M], expect);
                }
            }
        }
    }

    #[test]
    fn pack_a_full_tile_is_copy() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = Matrix::<f32>::random_uniform(192, 64, Layout::ColMajor, -1.0, 1.0, &mut rng);
        let panel = pack_a(a.view(), OpFlag::N, 0, 64);
        assert_eq!(panel.data(), a.data());
    }

    #[test]
    fn pack_a_zero_pads_rows() {
        let a = Matrix::<f32>::from_fn(100, 64, Layout::ColMajor, |_, _| 1.0);
        let panel = pack_a(a.view(), OpFlag::N, 0, 64);
        for p in 0..64 {
            for r in 0..192 {
                assert_eq!(panel.get(r, p), if r < 100 { 1.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn pack_a_transposed_200x130() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = Matrix::<f32>::random_uniform(200, 130, Layout::ColMajor, -1.0, 1.0, &mut rng);
        let panel = pack_a(a.view(), OpFlag::T, 0, 192);
        assert_eq!(panel.cols(), 192);
        for p in 0..192 {
            for r in 0..192 {
                let expect = if r < 130 && p < 200 { a.get(p, r) } else { 0.0 };
                assert_eq!(panel.data()[r + 192 * p], expect);
            }
        }
    }

    #[test]
    fn pack_b_full_and_padded() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let b = Matrix::<f32>::random_uniform(64, 256, Layout::RowMajor, -1.0, 1.0, &mut rng);
        assert_eq!(pack_b(b.view(), OpFlag::N, 0, 64).data(), b.data());

        let b = Matrix::<f32>::from_fn(64, 200, Layout::ColMajor, |_, _| 2.0);
        let panel = pack_b(b.view(), OpFlag::N, 0, 64);
        for p in 0..64 {
            for c in 0..256 {
                assert_eq!(panel.data()[p * 256 + c], if c < 200 { 2.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn pack_b_transposed_130x300() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let b = Matrix::<f32>::random_uniform(130, 300, Layout::ColMajor, -1.0, 1.0, &mut rng);
        // op(B) = B^T is 300 x 130: K = 300, only 130 columns exist.
        for off in [0usize, 256] {
            let panel = pack_b(b.view(), OpFlag::T, off, 300);
            assert_eq!(panel.rows(), 320);
            for p in 0..320 {
                for c in 0..256 {
                    let gc = off + c;
                    let expect = if p < 300 && gc < 130 { b.get(gc, p) } else { 0.0 };
                    assert_eq!(panel.data()[p * 256 + c], expect);
                }
            }
        }
    }

    #[test]
    fn compare_equal_and_uniform_perturbation() {
        let ones = Matrix::<f64>::from_fn(8, 8, Layout::ColMajor, |_, _| 1.0);
        let rep = compare(ones.view(), ones.view(), 1.0).unwrap();
        assert_eq!(rep, ErrorReport::default());

        let eps = 2f64.powi(-20);
        let bumped = Matrix::<f64>::from_fn(8, 8, Layout::ColMajor, |_, _| 1.0 + eps);
        let rep = compare(bumped.view(), ones.view(), 1.0).unwrap();
        assert_eq!(rep.mean_rel_err, eps);
        assert_eq!(rep.max_rel_err, eps);
    }

    #[test]
    fn compare_zero_reference_entries() {
        let z = Matrix::<f64>::zeros(2, 2, Layout::ColMajor);
        assert_eq!(compare(z.view(), z.view(), 0.0).unwrap(), ErrorReport::default());
        let mut t = z.clone();
        t.set(0, 0, 1e-40);
        let rep = compare(t.view(), z.view(), 1.0).unwrap();
        assert!(rep.max_rel_err.is_finite() && rep.max_rel_err > 0.0);
    }

    #[test]
    fn compare_shape_mismatch() {
        let a = Matrix::<f64>::zeros(2, 2, Layout::ColMajor);
        let b = Matrix::<f64>::zeros(2, 3, Layout::ColMajor);
        assert!(compare(a.view(), b.view(), 1.0).is_err());
    }

    #[test]
    fn cast_round_trips() {
        let one = Matrix::<f64>::from_rows(&[[1.0]]);
        let down: Matrix<f32> = cast(one.view());
        let up: Matrix<f64> = cast(down.view());
        assert_eq!(up, one);

        let v = 1.0 + 2f64.powi(-30);
        let m = Matrix::<f64>::from_rows(&[[v]]);
        let up: Matrix<f64> = cast(cast::<f64, f32>(m.view()).view());
        assert_eq!(up.get(0, 0), 1.0);
        assert_ne!(up.get(0, 0), v);
    }

    proptest! {
        #[test]
        fn cast_relative_bound(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let m = Matrix::<f64>::random_uniform(6, 7, Layout::ColMajor, -1e3, 1e3, &mut rng);
            let back: Matrix<f64> = cast(cast::<f64, f32>(m.view()).view());
            for j in 0..7 {
                for i in 0..6 {
                    let (x, y) = (m.get(i, j), back.get(i, j));
                    prop_assert!((x - y).abs() <= x.abs() * 2f64.powi(-24));
                }
            }
        }
    }

    #[test]
    fn views_reject_aliasing_and_overflow() {
        let buf = vec![0f32; 16];
        assert!(MatrixView::new(&buf, 4, 4, 1, 4).is_ok());
        assert!(MatrixView::new(&buf, 4, 4, 4, 1).is_ok());
        assert!(MatrixView::new(&buf, 4, 4, 1, 2).is_err());
        assert!(MatrixView::new(&buf, 4, 5, 1, 4).is_err());
        assert!(MatrixView::col_major(&buf, 4, 2, 3).is_err());
        let v = MatrixView::col_major(&buf, 4, 4, 4).unwrap();
        assert!(v.is_col_major());
        assert!(v.t().is_row_major());
    }

    #[test]
    fn submatrix_indexes_parent() {
        let m = Matrix::<f64>::from_fn(5, 6, Layout::ColMajor, |i, j| (10 * i + j) as f64);
        let s = m.view().submatrix(1, 2, 3, 3).unwrap();
        assert_eq!(s.get(0, 0), 12.0);
        assert_eq!(s.get(2, 2), 34.0);
        assert!(m.view().submatrix(3, 3, 3, 3).is_err());
    }
}
