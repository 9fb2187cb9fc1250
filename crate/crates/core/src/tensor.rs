//! Dense row-major matrices and a compressed sparse row matrix for
//! constant adjacency operands.

use serde::{Deserialize, Serialize};

use crate::error::{Result, TnaError};

/// Dense 2-D `f64` array stored row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(TnaError::contract(format!(
                "{} values cannot fill a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    /// Builds a matrix from nested rows. Panics on ragged input; meant for
    /// literals in tests and examples.
    pub fn from_rows(rows: &[&[f64]]) -> Self {
        let cols = rows.first().map_or(0, |r| r.len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            assert_eq!(r.len(), cols, "ragged rows");
            data.extend_from_slice(r);
        }
        Matrix {
            rows: rows.len(),
            cols,
            data,
        }
    }

    pub fn scalar(value: f64) -> Self {
        Matrix {
            rows: 1,
            cols: 1,
            data: vec![value],
        }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    /// Value of a 1x1 matrix.
    pub fn item(&self) -> f64 {
        debug_assert_eq!(self.data.len(), 1);
        self.data[0]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Matrix, f: impl Fn(f64, f64) -> f64) -> Matrix {
        debug_assert_eq!(self.shape(), other.shape());
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    /// `self += other` elementwise.
    pub fn add_assign(&mut self, other: &Matrix) {
        debug_assert_eq!(self.shape(), other.shape());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn scale(&self, s: f64) -> Matrix {
        self.map(|x| x * s)
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        out
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        debug_assert_eq!(self.shape(), other.shape());
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Checked matrix product `self · rhs`.
    pub fn matmul(&self, rhs: &Matrix) -> Result<Matrix> {
        if self.cols != rhs.rows {
            return Err(TnaError::shape("matmul", self.shape(), rhs.shape()));
        }
        Ok(self.matmul_unchecked(rhs))
    }

    pub(crate) fn matmul_unchecked(&self, rhs: &Matrix) -> Matrix {
        let (m, k, n) = (self.rows, self.cols, rhs.cols);
        let mut out = Matrix::zeros(m, n);
        gemm(
            (m, k, n),
            1.0,
            Strided::new(&self.data, k, 1),
            Strided::new(&rhs.data, n, 1),
            0.0,
            &mut out.data,
            (n, 1),
        );
        out
    }

    /// `self · rhsᵀ` without materialising the transpose.
    pub(crate) fn matmul_nt(&self, rhs: &Matrix) -> Matrix {
        debug_assert_eq!(self.cols, rhs.cols);
        let (m, k, n) = (self.rows, self.cols, rhs.rows);
        let mut out = Matrix::zeros(m, n);
        gemm(
            (m, k, n),
            1.0,
            Strided::new(&self.data, k, 1),
            Strided::new(&rhs.data, 1, k),
            0.0,
            &mut out.data,
            (n, 1),
        );
        out
    }

    /// `selfᵀ · rhs` without materialising the transpose.
    pub(crate) fn matmul_tn(&self, rhs: &Matrix) -> Matrix {
        debug_assert_eq!(self.rows, rhs.rows);
        let (m, k, n) = (self.cols, self.rows, rhs.cols);
        let mut out = Matrix::zeros(m, n);
        gemm(
            (m, k, n),
            1.0,
            Strided::new(&self.data, 1, m),
            Strided::new(&rhs.data, n, 1),
            0.0,
            &mut out.data,
            (n, 1),
        );
        out
    }
}

/// Read-only strided view: element `(r, c)` lives at `r * row_stride +
/// c * col_stride`.
#[derive(Clone, Copy)]
pub(crate) struct Strided<'a> {
    data: &'a [f64],
    row_stride: usize,
    col_stride: usize,
}

impl<'a> Strided<'a> {
    pub(crate) fn new(data: &'a [f64], row_stride: usize, col_stride: usize) -> Self {
        Strided {
            data,
            row_stride,
            col_stride,
        }
    }

    fn covers(&self, rows: usize, cols: usize) -> bool {
        rows == 0
            || cols == 0
            || (rows - 1) * self.row_stride + (cols - 1) * self.col_stride < self.data.len()
    }
}

/// `C ← alpha · A · B + beta · C` for an `m×k` `A` and `k×n` `B`, with `C`
/// strided by `c_strides`.
pub(crate) fn gemm(
    (m, k, n): (usize, usize, usize),
    alpha: f64,
    a: Strided<'_>,
    b: Strided<'_>,
    beta: f64,
    c: &mut [f64],
    c_strides: (usize, usize),
) {
    if m == 0 || n == 0 {
        return;
    }
    let c_view = Strided::new(c, c_strides.0, c_strides.1);
    assert!(
        a.covers(m, k) && b.covers(k, n) && c_view.covers(m, n),
        "gemm operand out of bounds"
    );
    // SAFETY: the bounds above keep every addressed element inside its
    // slice, and `c` is uniquely borrowed.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            alpha,
            a.data.as_ptr(),
            a.row_stride as isize,
            a.col_stride as isize,
            b.data.as_ptr(),
            b.row_stride as isize,
            b.col_stride as isize,
            beta,
            c.as_mut_ptr(),
            c_strides.0 as isize,
            c_strides.1 as isize,
        );
    }
}

/// `exp(x)` by range reduction and a degree-12 polynomial, branch-free so
/// loops over it vectorise. Relative error is within a few ulp; inputs are
/// clamped to `[-708, 709]`.
#[inline(always)]
#[allow(clippy::excessive_precision)]
pub fn exp(x: f64) -> f64 {
    const LOG2E: f64 = std::f64::consts::LOG2_E;
    const LN2_HI: f64 = 6.931_471_803_691_238_2e-1;
    const LN2_LO: f64 = 1.908_214_929_270_587_7e-10;
    // adding 1.5·2^52 rounds to an integer held in the low mantissa bits
    const SHIFTER: f64 = 6_755_399_441_055_744.0;
    let x = x.clamp(-708.0, 709.0);
    let shifted = x * LOG2E + SHIFTER;
    let k = shifted - SHIFTER;
    let k_int = shifted.to_bits().wrapping_sub(SHIFTER.to_bits()) as i64;
    let r = (x - k * LN2_HI) - k * LN2_LO;
    let mut p = 1.0 / 479_001_600.0;
    for c in [
        1.0 / 39_916_800.0,
        1.0 / 3_628_800.0,
        1.0 / 362_880.0,
        1.0 / 40_320.0,
        1.0 / 5_040.0,
        1.0 / 720.0,
        1.0 / 120.0,
        1.0 / 24.0,
        1.0 / 6.0,
        0.5,
        1.0,
        1.0,
    ] {
        p = p * r + c;
    }
    p * f64::from_bits(((k_int + 1023) as u64) << 52)
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    // four partial sums let the loop vectorise
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let tail: f64 = ca
        .remainder()
        .iter()
        .zip(cb.remainder())
        .map(|(x, y)| x * y)
        .sum();
    for (x, y) in ca.zip(cb) {
        for k in 0..4 {
            acc[k] += x[k] * y[k];
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

#[inline]
pub(crate) fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Compressed sparse row matrix. Used for normalised adjacencies, which
/// enter the computation only as constants.
#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    rows: usize,
    cols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds from per-row `(column, value)` lists; columns within a row must
    /// be strictly increasing.
    pub fn from_rows(cols: usize, rows: Vec<Vec<(usize, f64)>>) -> Self {
        let mut indptr = Vec::with_capacity(rows.len() + 1);
        let nnz = rows.iter().map(Vec::len).sum();
        let mut indices = Vec::with_capacity(nnz);
        let mut values = Vec::with_capacity(nnz);
        indptr.push(0);
        for row in &rows {
            debug_assert!(row.windows(2).all(|w| w[0].0 < w[1].0));
            for &(c, v) in row {
                debug_assert!(c < cols);
                indices.push(c);
                values.push(v);
            }
            indptr.push(indices.len());
        }
        CsrMatrix {
            rows: rows.len(),
            cols,
            indptr,
            indices,
            values,
        }
    }

    pub fn from_dense(m: &Matrix) -> Self {
        let rows = (0..m.rows())
            .map(|r| {
                m.row(r)
                    .iter()
                    .enumerate()
                    .filter(|(_, v)| **v != 0.0)
                    .map(|(c, v)| (c, *v))
                    .collect()
            })
            .collect();
        CsrMatrix::from_rows(m.cols(), rows)
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

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.indptr[r]..self.indptr[r + 1];
        self.indices[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    pub fn to_dense(&self) -> Matrix {
        let mut m = Matrix::zeros(self.rows, self.cols);
        for r in 0..self.rows {
            for (c, v) in self.row(r) {
                m.set(r, c, v);
            }
        }
        m
    }

    /// `self · rhs`.
    pub fn matmul(&self, rhs: &Matrix) -> Result<Matrix> {
        if self.cols != rhs.rows() {
            return Err(TnaError::shape("spmm", self.shape(), rhs.shape()));
        }
        let n = rhs.cols();
        let mut out = Matrix::zeros(self.rows, n);
        for r in 0..self.rows {
            let o_row = out.row_mut(r);
            for k in self.indptr[r]..self.indptr[r + 1] {
                axpy(self.values[k], rhs.row(self.indices[k]), o_row);
            }
        }
        Ok(out)
    }

    /// `selfᵀ · rhs`, accumulated by scattering rows.
    pub fn matmul_transposed(&self, rhs: &Matrix) -> Matrix {
        debug_assert_eq!(self.rows, rhs.rows());
        let n = rhs.cols();
        let mut out = Matrix::zeros(self.cols, n);
        for r in 0..self.rows {
            let g_row = rhs.row(r);
            for k in self.indptr[r]..self.indptr[r + 1] {
                axpy(self.values[k], g_row, out.row_mut(self.indices[k]));
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_exp_matches_std() {
        let mut x = -700.0;
        while x < 700.0 {
            let (a, b) = (exp(x), x.exp());
            assert!(((a - b) / b).abs() < 4e-16, "{x}: {a} vs {b}");
            x += 0.173;
        }
        assert_eq!(exp(0.0), 1.0);
        assert_eq!(exp(-1000.0), exp(-708.0));
    }

    #[test]
    fn identity_product_is_exact() {
        let m = Matrix::from_rows(&[&[1.5, -2.0], &[0.25, 3.0]]);
        let i = Matrix::identity(2);
        assert_eq!(i.matmul(&m).unwrap(), m);
        assert_eq!(m.matmul(&i).unwrap(), m);
    }

    #[test]
    fn hand_evaluated_product() {
        let a = Matrix::from_rows(&[&[1.0, 2.0], &[3.0, 4.0]]);
        let b = Matrix::from_rows(&[&[1.0], &[1.0]]);
        assert_eq!(a.matmul(&b).unwrap(), Matrix::from_rows(&[&[3.0], &[7.0]]));
    }

    #[test]
    fn mismatched_product_names_both_shapes() {
        let a = Matrix::zeros(2, 3);
        let b = Matrix::zeros(2, 3);
        let err = a.matmul(&b).unwrap_err().to_string();
        assert!(err.contains("(2, 3)"), "{err}");
    }

    #[test]
    fn transposed_products_agree_with_explicit_transpose() {
        let a = Matrix::from_rows(&[&[1.0, 2.0, 0.5], &[-1.0, 0.0, 4.0]]);
        let b = Matrix::from_rows(&[&[0.5, 1.0, -2.0], &[3.0, 1.0, 1.0]]);
        assert_eq!(a.matmul_nt(&b), a.matmul(&b.transpose()).unwrap());
        assert_eq!(a.matmul_tn(&b), a.transpose().matmul(&b).unwrap());
    }

    #[test]
    fn sparse_products_match_dense() {
        let d = Matrix::from_rows(&[&[0.0, 2.0, 0.0], &[1.0, 0.0, 0.5], &[0.0, 0.0, 3.0]]);
        let s = CsrMatrix::from_dense(&d);
        let x = Matrix::from_rows(&[&[1.0, 2.0], &[3.0, 4.0], &[5.0, 6.0]]);
        assert_eq!(s.matmul(&x).unwrap(), d.matmul(&x).unwrap());
        assert_eq!(s.matmul_transposed(&x), d.transpose().matmul(&x).unwrap());
        assert_eq!(s.to_dense(), d);
    }
}
