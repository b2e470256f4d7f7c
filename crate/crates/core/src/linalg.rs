//! Small dense linear algebra for the control environments.
//!
//! Everything here targets dimensions up to 16. Matrices are row-major
//! `f64` buffers; no blocking, no SIMD, deterministic operation order.

use std::fmt;
use std::ops::{Add, Index, IndexMut, Mul, Neg, Sub};

use thiserror::Error;

/// Failures of the dense routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinalgError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("matrix is numerically singular (pivot {pivot:e})")]
    Singular { pivot: f64 },
    #[error("matrix is not positive semidefinite (eigenvalue {eigenvalue:e})")]
    NotPsd { eigenvalue: f64 },
    #[error("fixed-point iteration diverged after {iterations} equivalent steps")]
    Divergence { iterations: u64 },
    #[error("Lyapunov residual {residual:e} exceeds 1e-8")]
    Residual { residual: f64 },
}

/// Dense row-major matrix.
#[derive(Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn diag(values: &[f64]) -> Self {
        let mut m = Matrix::zeros(values.len(), values.len());
        for (i, v) in values.iter().enumerate() {
            m[(i, i)] = *v;
        }
        m
    }

    /// Builds a matrix from a row-major buffer.
    ///
    /// # Panics
    /// If `data.len() != rows * cols`.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "buffer length does not match shape");
        Matrix { rows, cols, data }
    }

    /// # Panics
    /// If the rows have different lengths.
    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c, "ragged rows");
            data.extend_from_slice(row);
        }
        Matrix { rows: r, cols: c, data }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Matrix { rows, cols, data }
    }

    pub fn scalar(v: f64) -> Self {
        Matrix::from_vec(1, 1, vec![v])
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

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn transpose(&self) -> Matrix {
        Matrix::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn scale(&self, s: f64) -> Matrix {
        Matrix { rows: self.rows, cols: self.cols, data: self.data.iter().map(|v| v * s).collect() }
    }

    pub fn trace(&self) -> f64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Sum of absolute entries.
    pub fn entrywise_l1(&self) -> f64 {
        self.data.iter().map(|v| v.abs()).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// `(M + Mᵀ) / 2`.
    pub fn symmetrize(&self) -> Matrix {
        Matrix::from_fn(self.rows, self.cols, |i, j| 0.5 * (self[(i, j)] + self[(j, i)]))
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(self.cols, v.len(), "matrix-vector shape mismatch");
        (0..self.rows).map(|i| dot(self.row(i), v)).collect()
    }

    /// Frobenius inner product `tr(Aᵀ B)`.
    pub fn inner(&self, other: &Matrix) -> f64 {
        assert_eq!(self.shape(), other.shape(), "inner product shape mismatch");
        dot(&self.data, &other.data)
    }

    /// `v vᵀ`.
    pub fn outer(u: &[f64], v: &[f64]) -> Matrix {
        Matrix::from_fn(u.len(), v.len(), |i, j| u[i] * v[j])
    }

    /// `self · other · selfᵀ`.
    pub fn congruence(&self, other: &Matrix) -> Matrix {
        &(self * other) * &self.transpose()
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Matrix{}x{}[", self.rows, self.cols)?;
        for i in 0..self.rows {
            if i > 0 {
                write!(f, "; ")?;
            }
            for j in 0..self.cols {
                if j > 0 {
                    write!(f, ", ")?;
                }
                write!(f, "{:?}", self[(i, j)])?;
            }
        }
        write!(f, "]")
    }
}

impl<'a> Mul<&'a Matrix> for &'a Matrix {
    type Output = Matrix;
    fn mul(self, rhs: &'a Matrix) -> Matrix {
        assert_eq!(self.cols, rhs.rows, "matrix product shape mismatch");
        let mut out = Matrix::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == 0.0 {
                    continue;
                }
                let src = &rhs.data[k * rhs.cols..(k + 1) * rhs.cols];
                let dst = &mut out.data[i * rhs.cols..(i + 1) * rhs.cols];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += a * s;
                }
            }
        }
        out
    }
}

impl<'a> Add<&'a Matrix> for &'a Matrix {
    type Output = Matrix;
    fn add(self, rhs: &'a Matrix) -> Matrix {
        assert_eq!(self.shape(), rhs.shape(), "matrix sum shape mismatch");
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a + b).collect(),
        }
    }
}

impl<'a> Sub<&'a Matrix> for &'a Matrix {
    type Output = Matrix;
    fn sub(self, rhs: &'a Matrix) -> Matrix {
        assert_eq!(self.shape(), rhs.shape(), "matrix difference shape mismatch");
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect(),
        }
    }
}

impl Neg for &Matrix {
    type Output = Matrix;
    fn neg(self) -> Matrix {
        self.scale(-1.0)
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

pub fn sub_vec(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn add_vec(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

/// Eigendecomposition of a symmetric matrix.
#[derive(Debug, Clone)]
pub struct SymEigen {
    /// Ascending.
    pub values: Vec<f64>,
    /// Column `i` is the unit eigenvector of `values[i]`.
    pub vectors: Matrix,
}

/// Cyclic Jacobi eigensolver for symmetric input.
///
/// Only the upper triangle's symmetrization is used. Sweeps stop once the
/// off-diagonal mass is below `1e-30` relative to the total mass, or after
/// 100 sweeps.
pub fn sym_eigen(m: &Matrix) -> Result<SymEigen, LinalgError> {
    if !m.is_square() {
        return Err(LinalgError::Dimension(format!("eigensolve needs a square matrix, got {:?}", m.shape())));
    }
    let n = m.rows();
    let mut a = m.symmetrize();
    let mut v = Matrix::identity(n);
    let total = a.frobenius_norm().powi(2);
    for _sweep in 0..100 {
        let mut off = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                off += 2.0 * a[(p, q)] * a[(p, q)];
            }
        }
        if off <= 1e-30 * total || off == 0.0 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(i, i)].total_cmp(&a[(j, j)]).then(i.cmp(&j)));
    let values = order.iter().map(|&i| a[(i, i)]).collect();
    let vectors = Matrix::from_fn(n, n, |r, c| v[(r, order[c])]);
    Ok(SymEigen { values, vectors })
}

/// Largest singular value, from the Jacobi spectrum of `MᵀM`.
pub fn spectral_norm(m: &Matrix) -> f64 {
    if m.rows() == 0 || m.cols() == 0 {
        return 0.0;
    }
    let gram = if m.cols() <= m.rows() { &m.transpose() * m } else { m * &m.transpose() };
    let eig = sym_eigen(&gram).expect("gram matrix is square");
    eig.values.last().copied().unwrap_or(0.0).max(0.0).sqrt()
}

/// Smallest singular value, from the Jacobi spectrum of `MᵀM`.
///
/// For wide matrices this is the smallest of the `rows` nonzero-capable
/// singular values.
pub fn min_singular_value(m: &Matrix) -> f64 {
    let gram = if m.cols() <= m.rows() { &m.transpose() * m } else { m * &m.transpose() };
    let eig = sym_eigen(&gram).expect("gram matrix is square");
    eig.values.first().copied().unwrap_or(0.0).max(0.0).sqrt()
}

/// Power-iteration estimate of `‖M‖₂` with relative step tolerance `1e-10`.
///
/// Cheaper than [`spectral_norm`] but only a lower estimate when the
/// iteration stalls; used for pre-checks, never for certificates.
pub fn power_norm_estimate(m: &Matrix) -> f64 {
    let gram = &m.transpose() * m;
    let n = gram.rows();
    if n == 0 {
        return 0.0;
    }
    let mut v: Vec<f64> = (0..n).map(|i| 1.0 + 0.1 * i as f64).collect();
    let mut lambda = 0.0;
    for _ in 0..10_000 {
        let w = gram.mul_vec(&v);
        let nw = norm2(&w);
        if nw == 0.0 {
            return 0.0;
        }
        let next = nw / norm2(&v);
        v = w.iter().map(|x| x / nw).collect();
        if (next - lambda).abs() <= 1e-10 * next {
            lambda = next;
            break;
        }
        lambda = next;
    }
    lambda.sqrt()
}

/// Symmetric PSD square root.
///
/// Eigenvalues down to `-1e-10` are clamped to zero; anything lower is
/// rejected.
pub fn matrix_sqrt_psd(m: &Matrix) -> Result<Matrix, LinalgError> {
    let eig = sym_eigen(m)?;
    if let Some(&lo) = eig.values.first() {
        if lo < -1e-10 {
            return Err(LinalgError::NotPsd { eigenvalue: lo });
        }
    }
    let n = m.rows();
    let roots: Vec<f64> = eig.values.iter().map(|v| v.max(0.0).sqrt()).collect();
    Ok(Matrix::from_fn(n, n, |i, j| {
        (0..n).map(|k| eig.vectors[(i, k)] * roots[k] * eig.vectors[(j, k)]).sum()
    }))
}

/// Solves `M x = v` by Gaussian elimination with partial pivoting.
pub fn solve_linear(m: &Matrix, v: &[f64]) -> Result<Vec<f64>, LinalgError> {
    let rhs = Matrix::from_vec(v.len(), 1, v.to_vec());
    Ok(solve_matrix(m, &rhs)?.into_vec())
}

/// Solves `M X = R` column-wise.
pub fn solve_matrix(m: &Matrix, rhs: &Matrix) -> Result<Matrix, LinalgError> {
    if !m.is_square() || m.rows() != rhs.rows() {
        return Err(LinalgError::Dimension(format!(
            "solve needs square M matching rhs rows, got {:?} and {:?}",
            m.shape(),
            rhs.shape()
        )));
    }
    let n = m.rows();
    let c = rhs.cols();
    let mut a = m.clone();
    let mut b = rhs.clone();
    let scale = m.max_abs().max(f64::MIN_POSITIVE);
    for col in 0..n {
        let mut piv = col;
        for r in (col + 1)..n {
            if a[(r, col)].abs() > a[(piv, col)].abs() {
                piv = r;
            }
        }
        let p = a[(piv, col)];
        if p.abs() <= 1e-14 * scale {
            return Err(LinalgError::Singular { pivot: p });
        }
        if piv != col {
            for j in 0..n {
                let tmp = a[(col, j)];
                a[(col, j)] = a[(piv, j)];
                a[(piv, j)] = tmp;
            }
            for j in 0..c {
                let tmp = b[(col, j)];
                b[(col, j)] = b[(piv, j)];
                b[(piv, j)] = tmp;
            }
        }
        for r in (col + 1)..n {
            let f = a[(r, col)] / p;
            if f == 0.0 {
                continue;
            }
            for j in col..n {
                a[(r, j)] -= f * a[(col, j)];
            }
            for j in 0..c {
                b[(r, j)] -= f * b[(col, j)];
            }
        }
    }
    let mut x = Matrix::zeros(n, c);
    for j in 0..c {
        for i in (0..n).rev() {
            let mut s = b[(i, j)];
            for k in (i + 1)..n {
                s -= a[(i, k)] * x[(k, j)];
            }
            x[(i, j)] = s / a[(i, i)];
        }
    }
    Ok(x)
}

pub fn inverse(m: &Matrix) -> Result<Matrix, LinalgError> {
    solve_matrix(m, &Matrix::identity(m.rows()))
}

/// Outcome of [`solve_discrete_lyapunov`].
#[derive(Debug, Clone)]
pub struct LyapunovSolution {
    pub x: Matrix,
    /// `‖X − A X Aᵀ − W‖_F`.
    pub residual: f64,
    /// Doubling steps taken; step `k` covers `2^k` plain iterations.
    pub doublings: u32,
}

/// Plain fixed-point iterations covered before declaring divergence.
pub const LYAPUNOV_ITERATION_CAP: u64 = 1_000_000;

/// Solves `X = A X Aᵀ + W` by the doubling form of the fixed-point iteration.
///
/// Step `k` holds `X_k = Σ_{s < 2^k} Aˢ W (Aˢ)ᵀ` and squares `A`. The
/// iteration stops when the increment falls below `1e-12` in Frobenius norm.
/// More than [`LYAPUNOV_ITERATION_CAP`] equivalent plain steps, or a
/// non-finite iterate, is reported as divergence.
pub fn solve_discrete_lyapunov(a: &Matrix, w: &Matrix) -> Result<LyapunovSolution, LinalgError> {
    if !a.is_square() || a.shape() != w.shape() {
        return Err(LinalgError::Dimension(format!(
            "Lyapunov needs square A and W of equal shape, got {:?} and {:?}",
            a.shape(),
            w.shape()
        )));
    }
    let mut x = w.symmetrize();
    let mut power = a.clone();
    let mut doublings = 0u32;
    loop {
        let increment = power.congruence(&x);
        let step = increment.frobenius_norm();
        x = (&x + &increment).symmetrize();
        power = &power * &power;
        doublings += 1;
        if !x.is_finite() || !power.is_finite() {
            return Err(LinalgError::Divergence { iterations: 1u64 << doublings.min(63) });
        }
        if step < 1e-12 {
            break;
        }
        if (1u64 << doublings) >= LYAPUNOV_ITERATION_CAP {
            return Err(LinalgError::Divergence { iterations: 1u64 << doublings });
        }
    }
    let residual = lyapunov_residual(a, w, &x);
    if residual > 1e-8 {
        return Err(LinalgError::Residual { residual });
    }
    Ok(LyapunovSolution { x, residual, doublings })
}

/// `‖X − A X Aᵀ − W‖_F`.
pub fn lyapunov_residual(a: &Matrix, w: &Matrix, x: &Matrix) -> f64 {
    (&(x - &a.congruence(x)) - w).frobenius_norm()
}
