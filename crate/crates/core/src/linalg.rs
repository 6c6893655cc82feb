//! Small dense kernels: Householder QR (optionally column pivoted), least
//! squares and the smallest singular value via one-sided Jacobi rotations.
//!
//! Sizes in this crate stay around `d_z ≈ 18`, so everything is plain
//! row-major `Vec<f64>` storage without blocking.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use thiserror::Error;

use crate::math::{dot, norm2, sqrt};

/// Relative tolerance on the triangular diagonal below which a least-squares
/// system is declared rank deficient.
pub const LSTSQ_RANK_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinalgError {
    #[error("dimension mismatch: {0}")]
    Dimension(&'static str),
    #[error("matrix is rank deficient (|r_kk| = {diag:e} at column {column}, largest {largest:e})")]
    RankDeficient {
        column: usize,
        diag: f64,
        largest: f64,
    },
    #[error("non-finite entry")]
    NonFinite,
}

/// Row-major dense matrix.
#[derive(Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl fmt::Debug for DenseMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "DenseMatrix {}x{} [", self.rows, self.cols)?;
        for r in 0..self.rows {
            writeln!(f, "  {:?}", self.row(r))?;
        }
        write!(f, "]")
    }
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, LinalgError> {
        if data.len() != rows * cols {
            return Err(LinalgError::Dimension("data length != rows * cols"));
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from equally long rows. An empty slice gives `0 x 0`.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, LinalgError> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(LinalgError::Dimension("ragged rows"));
        }
        let data = rows.iter().flat_map(|r| r.iter().copied()).collect();
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn from_columns(rows: usize, columns: &[Vec<f64>]) -> Result<Self, LinalgError> {
        let mut m = Self::zeros(rows, columns.len());
        for (j, c) in columns.iter().enumerate() {
            if c.len() != rows {
                return Err(LinalgError::Dimension("column length != rows"));
            }
            m.set_column(j, c);
        }
        Ok(m)
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self[(r, c)]).collect()
    }

    pub fn set_column(&mut self, c: usize, values: &[f64]) {
        for (r, v) in values.iter().enumerate() {
            self[(r, c)] = *v;
        }
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|r| self.row(r).to_vec()).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                t[(c, r)] = self[(r, c)];
            }
        }
        t
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.cols);
        (0..self.rows).map(|r| dot(self.row(r), x)).collect()
    }

    pub fn mul(&self, other: &DenseMatrix) -> Result<DenseMatrix, LinalgError> {
        if self.cols != other.rows {
            return Err(LinalgError::Dimension("inner dimensions differ"));
        }
        let mut out = DenseMatrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    out[(i, j)] += a * other[(k, j)];
                }
            }
        }
        Ok(out)
    }

    /// Submatrix made of the listed columns, in the listed order.
    pub fn select_columns(&self, columns: &[usize]) -> DenseMatrix {
        let mut out = DenseMatrix::zeros(self.rows, columns.len());
        for r in 0..self.rows {
            for (k, &c) in columns.iter().enumerate() {
                out[(r, k)] = self[(r, c)];
            }
        }
        out
    }

    /// Submatrix `rows x cols` starting at `(r0, c0)`.
    pub fn block(&self, r0: usize, c0: usize, rows: usize, cols: usize) -> DenseMatrix {
        let mut out = DenseMatrix::zeros(rows, cols);
        for r in 0..rows {
            for c in 0..cols {
                out[(r, c)] = self[(r0 + r, c0 + c)];
            }
        }
        out
    }

    pub fn frobenius_norm(&self) -> f64 {
        norm2(&self.data)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
    }
}

impl core::ops::Index<(usize, usize)> for DenseMatrix {
    type Output = f64;
    #[inline]
    fn index(&self, (r, c): (usize, usize)) -> &f64 {
        &self.data[r * self.cols + c]
    }
}

impl core::ops::IndexMut<(usize, usize)> for DenseMatrix {
    #[inline]
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut f64 {
        &mut self.data[r * self.cols + c]
    }
}

/// Householder QR factorization `A P = Q R`.
///
/// Reflectors are kept explicitly; `perm[k]` is the original column that
/// ended up in position `k`.
#[derive(Debug, Clone)]
pub struct Qr {
    r: DenseMatrix,
    reflectors: Vec<(Vec<f64>, f64)>,
    perm: Vec<usize>,
}

impl Qr {
    pub fn new(a: &DenseMatrix) -> Self {
        Self::factor(a, false)
    }

    /// Column-pivoted factorization: at every step the remaining column with
    /// the largest trailing norm is moved to the front, so `|r_kk|` is
    /// non-increasing.
    pub fn pivoted(a: &DenseMatrix) -> Self {
        Self::factor(a, true)
    }

    fn factor(a: &DenseMatrix, pivot: bool) -> Self {
        let (m, n) = (a.rows(), a.cols());
        let mut r = a.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let steps = m.min(n);
        let mut reflectors = Vec::with_capacity(steps);

        for k in 0..steps {
            if pivot {
                let mut best = k;
                let mut best_norm = -1.0;
                for j in k..n {
                    let s: f64 = (k..m).map(|i| r[(i, j)] * r[(i, j)]).sum();
                    if s > best_norm {
                        best_norm = s;
                        best = j;
                    }
                }
                if best != k {
                    for i in 0..m {
                        let tmp = r[(i, k)];
                        r[(i, k)] = r[(i, best)];
                        r[(i, best)] = tmp;
                    }
                    perm.swap(k, best);
                }
            }

            let x: Vec<f64> = (k..m).map(|i| r[(i, k)]).collect();
            let xnorm = norm2(&x);
            if xnorm == 0.0 {
                reflectors.push((x, 0.0));
                continue;
            }
            let alpha = if x[0] >= 0.0 { -xnorm } else { xnorm };
            let mut v = x;
            v[0] -= alpha;
            let vv = dot(&v, &v);
            let beta = if vv == 0.0 { 0.0 } else { 2.0 / vv };
            for j in k..n {
                let s: f64 = v.iter().enumerate().map(|(i, vi)| vi * r[(k + i, j)]).sum::<f64>() * beta;
                if s != 0.0 {
                    for (i, vi) in v.iter().enumerate() {
                        r[(k + i, j)] -= s * vi;
                    }
                }
            }
            // exact zeros below the diagonal
            r[(k, k)] = alpha;
            for i in k + 1..m {
                r[(i, k)] = 0.0;
            }
            reflectors.push((v, beta));
        }

        Self { r, reflectors, perm }
    }

    /// Upper-trapezoidal factor (`m x n`).
    pub fn r(&self) -> &DenseMatrix {
        &self.r
    }

    pub fn permutation(&self) -> &[usize] {
        &self.perm
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.r.rows().min(self.r.cols())).map(|k| self.r[(k, k)]).collect()
    }

    /// Computes `Qᵀ y` in place.
    pub fn apply_qt(&self, y: &mut [f64]) {
        for (k, (v, beta)) in self.reflectors.iter().enumerate() {
            if *beta == 0.0 {
                continue;
            }
            let s = v.iter().enumerate().map(|(i, vi)| vi * y[k + i]).sum::<f64>() * beta;
            for (i, vi) in v.iter().enumerate() {
                y[k + i] -= s * vi;
            }
        }
    }
}

/// Solution of an overdetermined least-squares problem.
#[derive(Debug, Clone, PartialEq)]
pub struct LeastSquares {
    pub x: Vec<f64>,
    /// `‖y − A x‖₂`
    pub residual: f64,
}

/// Minimizes `‖y − A x‖₂` for a full-column-rank `A` with `m ≥ n`.
pub fn least_squares(a: &DenseMatrix, y: &[f64]) -> Result<LeastSquares, LinalgError> {
    let (m, n) = (a.rows(), a.cols());
    if y.len() != m {
        return Err(LinalgError::Dimension("rhs length != rows"));
    }
    if m < n {
        return Err(LinalgError::Dimension("least squares needs rows >= cols"));
    }
    if !a.is_finite() || y.iter().any(|v| !v.is_finite()) {
        return Err(LinalgError::NonFinite);
    }
    if n == 0 {
        return Ok(LeastSquares {
            x: Vec::new(),
            residual: norm2(y),
        });
    }

    let qr = Qr::new(a);
    let diag = qr.diagonal();
    let largest = diag.iter().fold(0.0_f64, |m, d| m.max(d.abs()));
    for (k, d) in diag.iter().enumerate() {
        if !(d.abs() > LSTSQ_RANK_TOL * largest) || largest == 0.0 {
            return Err(LinalgError::RankDeficient {
                column: k,
                diag: d.abs(),
                largest,
            });
        }
    }

    let mut qty = y.to_vec();
    qr.apply_qt(&mut qty);
    let r = qr.r();
    let mut x = vec![0.0; n];
    for k in (0..n).rev() {
        let s: f64 = (k + 1..n).map(|j| r[(k, j)] * x[j]).sum();
        x[k] = (qty[k] - s) / r[(k, k)];
    }
    let residual = norm2(&qty[n..]);
    Ok(LeastSquares { x, residual })
}

/// Smallest singular value of `a` by cyclic one-sided Jacobi rotations.
///
/// For `m < n` the matrix has a nontrivial null space and `0.0` is returned.
pub fn smallest_singular_value(a: &DenseMatrix) -> f64 {
    singular_values(a).last().copied().unwrap_or(0.0)
}

/// All `n` singular values of an `m x n` matrix with `m ≥ n`, sorted in
/// decreasing order. Wide matrices are padded with zeros.
pub fn singular_values(a: &DenseMatrix) -> Vec<f64> {
    let (m, n) = (a.rows(), a.cols());
    if n == 0 {
        return Vec::new();
    }
    let mut cols: Vec<Vec<f64>> = (0..n).map(|j| a.column(j)).collect();
    const MAX_SWEEPS: usize = 60;
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let alpha = dot(&cols[p], &cols[p]);
                let beta = dot(&cols[q], &cols[q]);
                let gamma = dot(&cols[p], &cols[q]);
                if gamma == 0.0 || gamma.abs() <= f64::EPSILON * sqrt(alpha * beta) {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + sqrt(1.0 + zeta * zeta));
                let c = 1.0 / sqrt(1.0 + t * t);
                let s = c * t;
                let (lo, hi) = cols.split_at_mut(q);
                let (up, uq) = (&mut lo[p], &mut hi[0]);
                for i in 0..m {
                    let xp = up[i];
                    let xq = uq[i];
                    up[i] = c * xp - s * xq;
                    uq[i] = s * xp + c * xq;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let mut sv: Vec<f64> = cols.iter().map(|c| norm2(c)).collect();
    sv.sort_by(|x, y| y.partial_cmp(x).unwrap_or(core::cmp::Ordering::Equal));
    if m < n {
        for s in sv.iter_mut().skip(m) {
            *s = 0.0;
        }
        sv.sort_by(|x, y| y.partial_cmp(x).unwrap_or(core::cmp::Ordering::Equal));
    }
    sv
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_least_squares_returns_rhs() {
        let a = DenseMatrix::identity(3);
        let y = [1.5, -2.0, 0.25];
        let ls = least_squares(&a, &y).unwrap();
        for (x, e) in ls.x.iter().zip(y) {
            assert!((x - e).abs() < 1e-15);
        }
        assert!(ls.residual < 1e-15);
    }

    #[test]
    fn two_equal_rows_give_mean() {
        let a = DenseMatrix::from_rows(&[vec![1.0], vec![1.0]]).unwrap();
        let ls = least_squares(&a, &[0.0, 2.0]).unwrap();
        assert!((ls.x[0] - 1.0).abs() < 1e-15);
        assert!((ls.residual - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn rank_deficient_is_reported() {
        let a = DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 4.0], vec![3.0, 6.0]]).unwrap();
        assert!(matches!(
            least_squares(&a, &[1.0, 1.0, 1.0]),
            Err(LinalgError::RankDeficient { column: 1, .. })
        ));
    }

    #[test]
    fn wide_system_rejected() {
        let a = DenseMatrix::zeros(1, 2);
        assert!(matches!(least_squares(&a, &[0.0]), Err(LinalgError::Dimension(_))));
    }

    #[test]
    fn sigma_min_of_diagonal() {
        let a = DenseMatrix::from_rows(&[vec![3.0, 0.0], vec![0.0, 1.0]]).unwrap();
        assert!((smallest_singular_value(&a) - 1.0).abs() < 1e-15);
        assert_eq!(smallest_singular_value(&DenseMatrix::zeros(3, 2)), 0.0);
    }

    #[test]
    fn pivoted_qr_diagonal_non_increasing() {
        let a = DenseMatrix::from_rows(&[
            vec![1e-3, 2.0, 0.5],
            vec![0.0, 1.0, 3.0],
            vec![1.0, 0.0, 0.1],
        ])
        .unwrap();
        let d: Vec<f64> = Qr::pivoted(&a).diagonal().iter().map(|x| x.abs()).collect();
        assert!(d[0] >= d[1] && d[1] >= d[2]);
    }
}
