//! Dense linear-algebra kernel: row-major matrices, vectors, Gaussian
//! elimination with partial pivoting and spectral-radius bounds.

use std::fmt;
use std::ops::{Index, IndexMut};

use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Relative pivot threshold for [`solve_linear`].
pub const PIVOT_TOL: f64 = 1e-12;
/// Residual tolerance guaranteed by [`solve_linear`], relative to `1 + |b|_inf`.
pub const RESIDUAL_TOL: f64 = 1e-9;
/// Convergence tolerance of the power iteration.
pub const POWER_ITER_TOL: f64 = 1e-10;
/// Iteration budget of the power iteration.
pub const POWER_ITER_MAX: usize = 1000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NumericsError {
    #[error("singular matrix: pivot {pivot:e} at column {column} below {threshold:e}")]
    SingularMatrix { column: usize, pivot: f64, threshold: f64 },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("non-finite value produced")]
    NonFinite,
}

#[derive(Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DenseVector {
    data: Vec<f64>,
}

impl DenseVector {
    pub fn zeros(len: usize) -> Self {
        Self { data: vec![0.0; len] }
    }

    pub fn filled(len: usize, value: f64) -> Self {
        Self { data: vec![value; len] }
    }

    pub fn from_fn(len: usize, f: impl FnMut(usize) -> f64) -> Self {
        Self {
            data: (0..len).map(f).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
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

    pub fn iter(&self) -> std::slice::Iter<'_, f64> {
        self.data.iter()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn dot(&self, other: &DenseVector) -> f64 {
        assert_eq!(self.len(), other.len(), "dot: length mismatch");
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    pub fn norm_inf(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn add(&self, other: &DenseVector) -> DenseVector {
        assert_eq!(self.len(), other.len(), "add: length mismatch");
        DenseVector::from_fn(self.len(), |i| self.data[i] + other.data[i])
    }

    pub fn sub(&self, other: &DenseVector) -> DenseVector {
        assert_eq!(self.len(), other.len(), "sub: length mismatch");
        DenseVector::from_fn(self.len(), |i| self.data[i] - other.data[i])
    }

    pub fn scale(&self, factor: f64) -> DenseVector {
        DenseVector::from_fn(self.len(), |i| self.data[i] * factor)
    }

    /// Componentwise product.
    pub fn hadamard(&self, other: &DenseVector) -> DenseVector {
        assert_eq!(self.len(), other.len(), "hadamard: length mismatch");
        DenseVector::from_fn(self.len(), |i| self.data[i] * other.data[i])
    }

    /// Largest componentwise absolute difference.
    pub fn max_abs_diff(&self, other: &DenseVector) -> f64 {
        assert_eq!(self.len(), other.len(), "max_abs_diff: length mismatch");
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }
}

impl From<Vec<f64>> for DenseVector {
    fn from(data: Vec<f64>) -> Self {
        Self { data }
    }
}

impl From<&[f64]> for DenseVector {
    fn from(data: &[f64]) -> Self {
        Self { data: data.to_vec() }
    }
}

impl Index<usize> for DenseVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.data[i]
    }
}

impl IndexMut<usize> for DenseVector {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.data[i]
    }
}

impl fmt::Debug for DenseVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(&self.data).finish()
    }
}

impl<'a> IntoIterator for &'a DenseVector {
    type Item = &'a f64;
    type IntoIter = std::slice::Iter<'a, f64>;
    fn into_iter(self) -> Self::IntoIter {
        self.data.iter()
    }
}

/// Row-major dense matrix.
#[derive(Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
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

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, NumericsError> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(NumericsError::DimensionMismatch("ragged row lengths".to_string()));
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data: rows.concat(),
        })
    }

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, NumericsError> {
        if data.len() != rows * cols {
            return Err(NumericsError::DimensionMismatch(format!(
                "{} entries for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn transpose(&self) -> DenseMatrix {
        DenseMatrix::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn abs(&self) -> DenseMatrix {
        DenseMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v.abs()).collect(),
        }
    }

    pub fn scale(&self, factor: f64) -> DenseMatrix {
        DenseMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * factor).collect(),
        }
    }

    pub fn add(&self, other: &DenseMatrix) -> DenseMatrix {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        DenseMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect(),
        }
    }

    pub fn sub(&self, other: &DenseMatrix) -> DenseMatrix {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        DenseMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        }
    }

    pub fn mul_vec(&self, x: &DenseVector) -> DenseVector {
        assert_eq!(self.cols, x.len(), "mul_vec: dimension mismatch");
        DenseVector::from_fn(self.rows, |i| {
            self.row(i).iter().zip(x.iter()).map(|(a, b)| a * b).sum()
        })
    }

    pub fn mul_mat(&self, other: &DenseMatrix) -> DenseMatrix {
        assert_eq!(self.cols, other.rows, "mul_mat: dimension mismatch");
        let mut out = DenseMatrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                let src = other.row(k);
                let dst = out.row_mut(i);
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += a * s;
                }
            }
        }
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn row_sums(&self) -> DenseVector {
        DenseVector::from_fn(self.rows, |i| self.row(i).iter().sum())
    }

    pub fn col_sums(&self) -> DenseVector {
        let mut sums = DenseVector::zeros(self.cols);
        for i in 0..self.rows {
            for (j, v) in self.row(i).iter().enumerate() {
                sums[j] += v;
            }
        }
        sums
    }

    pub fn max_abs_diff(&self, other: &DenseMatrix) -> f64 {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    /// Nonzero entries as `(row, col, value)` triplets in row-major order.
    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::new();
        for i in 0..self.rows {
            for (j, &v) in self.row(i).iter().enumerate() {
                if v != 0.0 {
                    out.push((i, j, v));
                }
            }
        }
        out
    }
}

impl Index<(usize, usize)> for DenseMatrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for DenseMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

impl fmt::Debug for DenseMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "DenseMatrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            writeln!(f, "  {:?}", self.row(i))?;
        }
        write!(f, "]")
    }
}

/// Solves `a * y = b` by Gaussian elimination with partial pivoting.
///
/// A pivot smaller than `PIVOT_TOL * max|a|` is reported as
/// [`NumericsError::SingularMatrix`].
pub fn solve_linear(a: &DenseMatrix, b: &DenseVector) -> Result<DenseVector, NumericsError> {
    let n = a.rows();
    if !a.is_square() || b.len() != n {
        return Err(NumericsError::DimensionMismatch(format!(
            "solve_linear: A is {}x{}, b has {}",
            a.rows(),
            a.cols(),
            b.len()
        )));
    }
    if n == 0 {
        return Ok(DenseVector::zeros(0));
    }
    let threshold = PIVOT_TOL * a.max_abs();
    let mut m = a.clone();
    let mut rhs = b.clone();

    for col in 0..n {
        let (pivot_row, pivot_abs) =
            (col..n)
                .map(|r| (r, m[(r, col)].abs()))
                .fold((col, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
        if pivot_abs <= threshold || pivot_abs == 0.0 {
            return Err(NumericsError::SingularMatrix {
                column: col,
                pivot: pivot_abs,
                threshold,
            });
        }
        if pivot_row != col {
            for j in 0..n {
                m.data.swap(col * n + j, pivot_row * n + j);
            }
            rhs.as_mut_slice().swap(col, pivot_row);
        }
        let pivot = m[(col, col)];
        for r in col + 1..n {
            let factor = m[(r, col)] / pivot;
            if factor == 0.0 {
                continue;
            }
            m[(r, col)] = 0.0;
            for j in col + 1..n {
                let v = m[(col, j)];
                m[(r, j)] -= factor * v;
            }
            rhs[r] -= factor * rhs[col];
        }
    }

    let mut y = DenseVector::zeros(n);
    for i in (0..n).rev() {
        let tail: f64 = (i + 1..n).map(|j| m[(i, j)] * y[j]).sum();
        y[i] = (rhs[i] - tail) / m[(i, i)];
    }
    if !y.is_finite() {
        return Err(NumericsError::NonFinite);
    }
    Ok(y)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralBound {
    /// `max_i sum_l |a_il|`, an upper bound on the spectral radius.
    pub row_sum_max: f64,
    /// Dominant eigenvalue magnitude of `|A|` from power iteration.
    pub power_iter_estimate: f64,
}

/// Row-sum bound and power-iteration estimate of the spectral radius.
///
/// The power iteration runs on `|A|` from a seeded random positive start and
/// measures growth in the infinity norm, so the estimate never exceeds the
/// row-sum bound.
pub fn spectral_radius_bound(a: &DenseMatrix) -> SpectralBound {
    assert!(a.is_square(), "spectral_radius_bound: matrix must be square");
    let n = a.rows();
    let abs = a.abs();
    let row_sum_max = (0..n).map(|i| abs.row(i).iter().sum::<f64>()).fold(0.0, f64::max);
    if row_sum_max == 0.0 {
        return SpectralBound {
            row_sum_max: 0.0,
            power_iter_estimate: 0.0,
        };
    }

    let mut rng = Xoshiro256PlusPlus::seed_from_u64(0x5eed_5eed);
    let mut v = DenseVector::from_fn(n, |_| rng.random_range(0.5..1.5));
    let mut estimate = 0.0;
    for _ in 0..POWER_ITER_MAX {
        let norm = v.norm_inf();
        let w = abs.mul_vec(&v);
        let w_norm = w.norm_inf();
        let next = w_norm / norm;
        if w_norm == 0.0 {
            estimate = 0.0;
            break;
        }
        v = w.scale(1.0 / w_norm);
        let converged = (next - estimate).abs() <= POWER_ITER_TOL * next.max(1.0);
        estimate = next;
        if converged {
            break;
        }
    }
    SpectralBound {
        row_sum_max,
        power_iter_estimate: estimate.min(row_sum_max),
    }
}
