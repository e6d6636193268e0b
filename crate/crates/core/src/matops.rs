//! Dense matrix primitives.
//!
//! A small row-major `Matrix` plus the handful of numerical kernels the rest
//! of the crate needs: spectral radius, the discrete Lyapunov solve,
//! empirical autocovariances, norms and soft-thresholding. Nothing here is a
//! general linear-algebra library; sizes are assumed to be at most a few
//! hundred.

use std::fmt;
use std::ops::{Index, IndexMut};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default tolerance and budget for [`spectral_radius`].
pub const SPECTRAL_TOL: f64 = 1e-10;
pub const SPECTRAL_MAX_ITER: usize = 10_000;
const SPECTRAL_RESTARTS: usize = 3;
const SPECTRAL_RESTART_SEED: u64 = 0x5eed_5eed;

/// Dense matrix stored in row-major order. Every entry is finite.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Matrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            writeln!(f, "  {:?}", self.row(i))?;
        }
        write!(f, "]")
    }
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::InvalidData {
                rows,
                cols,
                got: data.len(),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("matrix entries"));
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from equally sized rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|row| row.len() != c) {
            return Err(Error::DimensionMismatch {
                expected: (r, c),
                got: (r, bad.len()),
            });
        }
        Self::new(r, c, rows.concat())
    }

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

    pub fn diag(values: &[f64]) -> Result<Self> {
        let mut m = Self::zeros(values.len(), values.len());
        for (i, &v) in values.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFinite("diagonal"));
            }
            m[(i, i)] = v;
        }
        Ok(m)
    }

    /// Column vector from a slice.
    pub fn column(values: &[f64]) -> Result<Self> {
        Self::new(values.len(), 1, values.to_vec())
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

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub(crate) fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn col(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn matmul(&self, other: &Matrix) -> Result<Self> {
        if self.cols != other.rows {
            return Err(Error::DimensionMismatch {
                expected: (self.cols, other.cols),
                got: other.shape(),
            });
        }
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let out_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == 0.0 {
                    continue;
                }
                let b_row = &other.data[k * other.cols..(k + 1) * other.cols];
                for (o, b) in out_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    /// `self' * other` without materializing the transpose.
    pub fn tr_matmul(&self, other: &Matrix) -> Result<Self> {
        if self.rows != other.rows {
            return Err(Error::DimensionMismatch {
                expected: (self.rows, other.cols),
                got: other.shape(),
            });
        }
        let mut out = Self::zeros(self.cols, other.cols);
        for t in 0..self.rows {
            let a_row = self.row(t);
            let b_row = other.row(t);
            for (i, &a) in a_row.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let out_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for (o, b) in out_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    pub fn mul_vec(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.cols {
            return Err(Error::DimensionMismatch {
                expected: (self.cols, 1),
                got: (v.len(), 1),
            });
        }
        Ok((0..self.rows).map(|i| dot(self.row(i), v)).collect())
    }

    pub fn add(&self, other: &Matrix) -> Result<Self> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Matrix) -> Result<Self> {
        self.zip_with(other, |a, b| a - b)
    }

    fn zip_with(&self, other: &Matrix, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        if self.shape() != other.shape() {
            return Err(Error::DimensionMismatch {
                expected: self.shape(),
                got: other.shape(),
            });
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| f(a, b))
            .collect();
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            data,
        })
    }

    pub fn scale(&self, c: f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * c).collect(),
        }
    }

    /// Symmetric part `(M + M') / 2`.
    pub fn symmetrize(&self) -> Result<Self> {
        self.add(&self.transpose()).map(|m| m.scale(0.5))
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        self.is_square()
            && (0..self.rows).all(|i| (0..i).all(|j| (self[(i, j)] - self[(j, i)]).abs() <= tol))
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn nnz(&self) -> usize {
        self.data.iter().filter(|v| **v != 0.0).count()
    }

    /// Sub-block `[r0..r1) x [c0..c1)`.
    pub fn block(&self, r0: usize, r1: usize, c0: usize, c1: usize) -> Self {
        let mut out = Self::zeros(r1 - r0, c1 - c0);
        for i in r0..r1 {
            out.row_mut(i - r0).copy_from_slice(&self.row(i)[c0..c1]);
        }
        out
    }

    /// Gram matrix `X'X / T` of a `T x p` sample.
    pub fn gram(&self) -> Self {
        let t = self.rows.max(1) as f64;
        let mut g = self.tr_matmul(self).expect("shapes agree");
        g.data.iter_mut().for_each(|v| *v /= t);
        g
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

impl TryFrom<Vec<Vec<f64>>> for Matrix {
    type Error = Error;
    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        Matrix::from_rows(&rows)
    }
}

impl From<Matrix> for Vec<Vec<f64>> {
    fn from(m: Matrix) -> Self {
        m.to_rows()
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn l2(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

pub(crate) fn l1(v: &[f64]) -> f64 {
    v.iter().map(|x| x.abs()).sum()
}

fn require_square(m: &Matrix) -> Result<()> {
    if m.is_square() {
        Ok(())
    } else {
        Err(Error::NotSquare {
            rows: m.rows,
            cols: m.cols,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralInfo {
    pub radius: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Spectral radius by power iteration.
///
/// Vector power iteration runs from a fixed start and up to three random
/// restarts. When every start stagnates (several eigenvalues share the top
/// modulus, as with complex pairs or cyclic nonnegative matrices) the
/// estimate falls back to Gelfand's formula `r = lim ||M^k||^(1/k)` evaluated
/// by normalized repeated squaring, which converges for every matrix.
pub fn spectral_radius(m: &Matrix, tol: f64, max_iter: usize) -> Result<SpectralInfo> {
    require_square(m)?;
    if m.data.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("spectral_radius input"));
    }
    if !(tol > 0.0) || max_iter == 0 {
        return Err(Error::param(
            "spectral_radius needs tol > 0 and max_iter >= 1",
        ));
    }
    let n = m.rows;
    if n == 0 || m.max_abs() == 0.0 {
        return Ok(SpectralInfo {
            radius: 0.0,
            iterations: 0,
            converged: true,
        });
    }

    // Squaring steps are reserved out of the budget for the fallback.
    let reserve = (max_iter / 2).min(80);
    let budget = ((max_iter - reserve) / (SPECTRAL_RESTARTS + 1)).max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(SPECTRAL_RESTART_SEED);
    let mut iterations = 0;
    for start in 0..=SPECTRAL_RESTARTS {
        let v0: Vec<f64> = if start == 0 {
            vec![1.0; n]
        } else {
            (0..n).map(|_| rng.sample(StandardNormal)).collect()
        };
        let (est, used, ok) = vector_power(m, v0, tol, budget);
        iterations += used;
        if ok {
            return Ok(SpectralInfo {
                radius: est,
                iterations,
                converged: true,
            });
        }
    }

    let (radius, used, converged) = gelfand_radius(m, tol, reserve.max(1));
    Ok(SpectralInfo {
        radius,
        iterations: iterations + used,
        converged: converged && iterations + used <= max_iter,
    })
}

fn vector_power(m: &Matrix, mut v: Vec<f64>, tol: f64, budget: usize) -> (f64, usize, bool) {
    let nrm = l2(&v);
    if nrm == 0.0 {
        return (0.0, 0, false);
    }
    v.iter_mut().for_each(|x| *x /= nrm);
    let mut history = [f64::NAN; 2];
    for it in 1..=budget {
        let w = m.mul_vec(&v).expect("square");
        let est = l2(&w);
        if est == 0.0 {
            // Landed in the kernel; the start vector says nothing about r.
            return (0.0, it, false);
        }
        let scale = est.max(1.0);
        if (est - history[1]).abs() <= tol * scale && (est - history[0]).abs() <= tol * scale {
            return (est, it, true);
        }
        history = [history[1], est];
        v = w.into_iter().map(|x| x / est).collect();
    }
    (history[1], budget, false)
}

fn gelfand_radius(m: &Matrix, tol: f64, max_steps: usize) -> (f64, usize, bool) {
    let norm0 = frobenius(m);
    let mut b = m.scale(1.0 / norm0);
    // log ||M^(2^j)|| and its 2^j-th root
    let mut log_norm = norm0.ln();
    let mut prev = norm0;
    let mut pow = 1.0_f64;
    for j in 1..=max_steps {
        b = b.matmul(&b).expect("square");
        let nu = frobenius(&b);
        if nu == 0.0 {
            return (0.0, j, true);
        }
        b = b.scale(1.0 / nu);
        log_norm = 2.0 * log_norm + nu.ln();
        pow *= 2.0;
        let est = (log_norm / pow).exp();
        if (est - prev).abs() <= tol * est.max(1.0) && j > 4 {
            return (est, j, true);
        }
        prev = est;
    }
    (prev, max_steps, false)
}

fn frobenius(m: &Matrix) -> f64 {
    l2(&m.data)
}

/// Solves `S = a S a' + q` for stable `a` by the series `sum_k a^k q (a')^k`.
///
/// The series is summed by doubling (`S <- S + a^(2^k) S (a')^(2^k)`) and
/// stops once the next omitted term, which equals the residual
/// `S - a S a' - q`, is below `tol` entrywise.
pub fn solve_discrete_lyapunov(a: &Matrix, q: &Matrix, tol: f64) -> Result<Matrix> {
    require_square(a)?;
    require_square(q)?;
    if a.shape() != q.shape() {
        return Err(Error::DimensionMismatch {
            expected: a.shape(),
            got: q.shape(),
        });
    }
    if !q.is_symmetric(1e-10 * q.max_abs().max(1.0)) {
        return Err(Error::NotSymmetric);
    }
    let r = spectral_radius(a, SPECTRAL_TOL, SPECTRAL_MAX_ITER)?.radius;
    if r >= 1.0 {
        return Err(Error::Unstable(r));
    }
    let mut sigma = q.clone();
    let mut a_pow = a.clone();
    for _ in 0..64 {
        let tail = a_pow.matmul(q)?.matmul(&a_pow.transpose())?;
        if tail.max_abs() <= tol {
            return sigma.symmetrize();
        }
        let inc = a_pow.matmul(&sigma)?.matmul(&a_pow.transpose())?;
        sigma = sigma.add(&inc)?;
        a_pow = a_pow.matmul(&a_pow)?;
    }
    // 2^64 terms without reaching tol means r is 1 to machine precision.
    Err(Error::Unstable(r))
}

/// Lag-`lag` sample autocovariance `(1/T) sum_t x_t x_{t+lag}'` of a `T x p`
/// sample, normalized by `T` so that lag 0 is exactly `X'X/T`.
pub fn empirical_autocovariance(x: &Matrix, lag: isize) -> Result<Matrix> {
    let t = x.rows;
    if lag.unsigned_abs() >= t {
        return Err(Error::LagOutOfRange { lag, len: t });
    }
    let p = x.cols;
    let mut out = Matrix::zeros(p, p);
    let (first, last) = if lag >= 0 {
        (0, t - lag as usize)
    } else {
        (lag.unsigned_abs(), t)
    };
    for s in first..last {
        let xs = x.row(s);
        let xl = x.row((s as isize + lag) as usize);
        for (i, &a) in xs.iter().enumerate() {
            let out_row = out.row_mut(i);
            for (o, &b) in out_row.iter_mut().zip(xl) {
                *o += a * b;
            }
        }
    }
    Ok(out.scale(1.0 / t as f64))
}

/// `sign(z) * max(|z| - lam, 0)`.
#[inline]
pub fn soft_threshold(z: f64, lam: f64) -> f64 {
    debug_assert!(lam >= 0.0);
    if z > lam {
        z - lam
    } else if z < -lam {
        z + lam
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Norms {
    pub frobenius: f64,
    /// Largest absolute entry.
    pub entrywise_inf: f64,
    pub l1_vec: f64,
    pub l2_vec: f64,
}

pub fn norms(m: &Matrix) -> Norms {
    let f = frobenius(m);
    Norms {
        frobenius: f,
        entrywise_inf: m.max_abs(),
        l1_vec: l1(&m.data),
        l2_vec: f,
    }
}

/// Lower Cholesky factor of a symmetric positive definite matrix.
pub fn cholesky(m: &Matrix) -> Result<Matrix> {
    require_square(m)?;
    let n = m.rows;
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let mut d = m[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !(d > 0.0) {
            return Err(Error::NotPositiveDefinite);
        }
        let d = d.sqrt();
        l[(j, j)] = d;
        for i in j + 1..n {
            let mut s = m[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / d;
        }
    }
    Ok(l)
}

/// Solves `M X = B` for symmetric positive definite `M`.
pub fn solve_spd(m: &Matrix, b: &Matrix) -> Result<Matrix> {
    if b.rows != m.rows {
        return Err(Error::DimensionMismatch {
            expected: (m.rows, b.cols),
            got: b.shape(),
        });
    }
    let l = cholesky(m)?;
    let n = m.rows;
    let mut x = b.clone();
    for c in 0..b.cols {
        for i in 0..n {
            let mut s = x[(i, c)];
            for k in 0..i {
                s -= l[(i, k)] * x[(k, c)];
            }
            x[(i, c)] = s / l[(i, i)];
        }
        for i in (0..n).rev() {
            let mut s = x[(i, c)];
            for k in i + 1..n {
                s -= l[(k, i)] * x[(k, c)];
            }
            x[(i, c)] = s / l[(i, i)];
        }
    }
    Ok(x)
}

/// Eigenvalues of a symmetric matrix (cyclic Jacobi), ascending.
pub fn symmetric_eigenvalues(m: &Matrix) -> Result<Vec<f64>> {
    require_square(m)?;
    if !m.is_symmetric(1e-9 * m.max_abs().max(1.0)) {
        return Err(Error::NotSymmetric);
    }
    let n = m.rows;
    let mut a = m.symmetrize()?;
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[(i, j)] * a[(i, j)])
            .sum();
        let diag: f64 = (0..n).map(|i| a[(i, i)] * a[(i, i)]).sum();
        if off <= 1e-30 * diag.max(f64::MIN_POSITIVE) || off == 0.0 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
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
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| a[(i, i)]).collect();
    ev.sort_by(f64::total_cmp);
    Ok(ev)
}

/// Spectral norm `|||M|||` (largest singular value).
pub fn operator_norm(m: &Matrix) -> f64 {
    if m.rows == 0 || m.cols == 0 {
        return 0.0;
    }
    let mtm = m.tr_matmul(m).expect("shapes agree");
    symmetric_eigenvalues(&mtm)
        .ok()
        .and_then(|ev| ev.last().copied())
        .unwrap_or(0.0)
        .max(0.0)
        .sqrt()
}
