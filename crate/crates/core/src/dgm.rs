//! Data-generating mechanisms and their population targets.
//!
//! Five processes are supported: Gaussian VAR(d), VAR(d) with arbitrary iid
//! innovations (subweibull), a VAR(1) observed with one coordinate dropped,
//! a multivariate ARCH recursion with clipped volatility, and the
//! copy-with-probability-rho regression used to dial in dependence. Each
//! simulates into a [`TimeSeriesSample`] of regressor/response rows, and
//! [`population_theta`] returns the best linear predictor the lasso targets.

use std::io::{Read, Write};
use std::path::Path;

use rand::seq::index::sample as sample_indices;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matops::{
    l2, solve_discrete_lyapunov, solve_spd, spectral_radius, Matrix, SPECTRAL_MAX_ITER,
    SPECTRAL_TOL,
};
use crate::tails::{InnovationKind, InnovationSampler, InnovationSpec};

pub const DEFAULT_BURN_IN: usize = 1_000;
pub const LYAPUNOV_TOL: f64 = 1e-13;

const MAX_SUPPORT_REDRAWS: usize = 100_000;

/// A coefficient matrix together with its support.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientMatrix {
    values: Matrix,
    support: Vec<(usize, usize)>,
}

impl CoefficientMatrix {
    pub fn new(values: Matrix) -> Self {
        let support = (0..values.rows())
            .flat_map(|i| (0..values.cols()).map(move |j| (i, j)))
            .filter(|&(i, j)| values[(i, j)] != 0.0)
            .collect();
        Self { values, support }
    }

    pub fn values(&self) -> &Matrix {
        &self.values
    }

    pub fn into_values(self) -> Matrix {
        self.values
    }

    /// Row-major positions of the nonzero entries.
    pub fn support(&self) -> &[(usize, usize)] {
        &self.support
    }

    pub fn sparsity(&self) -> usize {
        self.support.len()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.values.shape()
    }

    pub fn transpose(&self) -> Self {
        Self::new(self.values.transpose())
    }
}

impl From<Matrix> for CoefficientMatrix {
    fn from(m: Matrix) -> Self {
        Self::new(m)
    }
}

fn one() -> f64 {
    1.0
}

/// Parameterization of a data-generating mechanism.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DgmSpec {
    /// `Z_t = sum_k A_k Z_{t-k} + E_t`, `E_t ~ N(0, noise_cov)`.
    GaussianVar {
        lags: Vec<Matrix>,
        noise_cov: Matrix,
    },
    /// Same recursion with `E_t = noise_scale * eps_t`, `eps_t` iid from `innovation`.
    SubweibullVar {
        lags: Vec<Matrix>,
        #[serde(default = "one")]
        noise_scale: f64,
        innovation: InnovationSpec,
    },
    /// VAR(1) in `(Z_t, Xi_t)` with scalar `Xi_t` unobserved. `full` is
    /// `(p+1) x (p+1)` with the omitted coordinate last.
    OmittedVar {
        full: Matrix,
        innovation: InnovationSpec,
    },
    /// `Z_t = A Z_{t-1} + c * clip(|Z_{t-1}|^m; a, b) * E_t`.
    Arch {
        coef: Matrix,
        c: f64,
        m: f64,
        a: f64,
        b: f64,
        innovation: InnovationSpec,
    },
    /// With probability `rho` the pair `(X_t, Y_t)` repeats the previous one,
    /// otherwise `X_t ~ N(0, I)` and `Y_t = A X_t + noise_scale * eps_t`.
    CopyDependence {
        coef: Matrix,
        noise_scale: f64,
        rho: f64,
        innovation: InnovationSpec,
    },
}

impl DgmSpec {
    pub fn name(&self) -> &'static str {
        match self {
            DgmSpec::GaussianVar { .. } => "gaussian_var",
            DgmSpec::SubweibullVar { .. } => "subweibull_var",
            DgmSpec::OmittedVar { .. } => "omitted_var",
            DgmSpec::Arch { .. } => "arch",
            DgmSpec::CopyDependence { .. } => "copy_dependence",
        }
    }

    /// Observed dimension `p` of the process (not of the regressor vector).
    pub fn dim(&self) -> usize {
        match self {
            DgmSpec::GaussianVar { lags, .. } | DgmSpec::SubweibullVar { lags, .. } => {
                lags.first().map_or(0, Matrix::rows)
            }
            DgmSpec::OmittedVar { full, .. } => full.rows().saturating_sub(1),
            DgmSpec::Arch { coef, .. } | DgmSpec::CopyDependence { coef, .. } => coef.rows(),
        }
    }

    /// `(columns of X, columns of Y)`.
    pub fn sample_dims(&self) -> (usize, usize) {
        let p = self.dim();
        match self {
            DgmSpec::GaussianVar { lags, .. } | DgmSpec::SubweibullVar { lags, .. } => {
                (lags.len() * p, p)
            }
            _ => (p, p),
        }
    }

    /// Checks shapes, parameter ranges and stability.
    pub fn validate(&self) -> Result<()> {
        match self {
            DgmSpec::GaussianVar { lags, noise_cov } => {
                let r = var_radius(lags)?;
                InnovationSpec::gaussian(noise_cov.clone()).validate()?;
                check_dim(noise_cov.rows(), lags[0].rows())?;
                stable(r)
            }
            DgmSpec::SubweibullVar {
                lags,
                noise_scale,
                innovation,
            } => {
                let r = var_radius(lags)?;
                innovation.validate()?;
                check_dim(innovation.dim, lags[0].rows())?;
                if !(*noise_scale >= 0.0 && noise_scale.is_finite()) {
                    return Err(Error::param("noise_scale must be >= 0"));
                }
                stable(r)
            }
            DgmSpec::OmittedVar { full, innovation } => {
                if !full.is_square() || full.rows() < 2 {
                    return Err(Error::param(
                        "omitted_var needs a square (p+1)x(p+1) matrix with p >= 1",
                    ));
                }
                innovation.validate()?;
                check_dim(innovation.dim, full.rows())?;
                stable(radius(full)?)
            }
            DgmSpec::Arch {
                coef,
                c,
                m,
                a,
                b,
                innovation,
            } => {
                if !coef.is_square() {
                    return Err(Error::NotSquare {
                        rows: coef.rows(),
                        cols: coef.cols(),
                    });
                }
                if !(*c > 0.0) {
                    return Err(Error::param(format!("arch c must be > 0, got {c}")));
                }
                if !(*m > 0.0 && *m < 1.0) {
                    return Err(Error::param(format!("arch m must lie in (0,1), got {m}")));
                }
                if !(*a > 0.0 && a < b && b.is_finite()) {
                    return Err(Error::param(format!(
                        "arch needs 0 < a < b, got a={a}, b={b}"
                    )));
                }
                innovation.validate()?;
                check_dim(innovation.dim, coef.rows())?;
                stable(radius(coef)?)
            }
            DgmSpec::CopyDependence {
                coef,
                noise_scale,
                rho,
                innovation,
            } => {
                if !coef.is_square() {
                    return Err(Error::NotSquare {
                        rows: coef.rows(),
                        cols: coef.cols(),
                    });
                }
                if !(*rho >= 0.0 && *rho < 1.0) {
                    return Err(Error::param(format!("rho must lie in [0,1), got {rho}")));
                }
                if !(*noise_scale >= 0.0 && noise_scale.is_finite()) {
                    return Err(Error::param("noise_scale must be >= 0"));
                }
                innovation.validate()?;
                check_dim(innovation.dim, coef.rows())
            }
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }
}

fn check_dim(got: usize, want: usize) -> Result<()> {
    if got == want {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            expected: (want, want),
            got: (got, got),
        })
    }
}

fn radius(m: &Matrix) -> Result<f64> {
    Ok(spectral_radius(m, SPECTRAL_TOL, SPECTRAL_MAX_ITER)?.radius)
}

fn stable(r: f64) -> Result<()> {
    if r < 1.0 {
        Ok(())
    } else {
        Err(Error::Unstable(r))
    }
}

fn var_radius(lags: &[Matrix]) -> Result<f64> {
    radius(&companion_form(lags)?)
}

/// Block companion matrix of a VAR(d): `A_1 .. A_d` across the top block
/// row, identities on the block sub-diagonal.
pub fn companion_form(lags: &[Matrix]) -> Result<Matrix> {
    let first = lags
        .first()
        .ok_or_else(|| Error::param("VAR needs at least one lag matrix"))?;
    let p = first.rows();
    for a in lags {
        if a.shape() != (p, p) {
            return Err(Error::DimensionMismatch {
                expected: (p, p),
                got: a.shape(),
            });
        }
    }
    let d = lags.len();
    let mut c = Matrix::zeros(d * p, d * p);
    for (k, a) in lags.iter().enumerate() {
        for i in 0..p {
            for j in 0..p {
                c[(i, k * p + j)] = a[(i, j)];
            }
        }
    }
    for i in p..d * p {
        c[(i, i - p)] = 1.0;
    }
    Ok(c)
}

/// Random `p x p` matrix with `s` nonzeros at uniformly chosen positions,
/// entries `U(0,1)`, rescaled to spectral radius `target_radius`.
///
/// Draws whose support carries no cycle are nilpotent (radius 0) and cannot
/// be rescaled; their support is redrawn.
pub fn generate_sparse_stable<R: Rng + ?Sized>(
    p: usize,
    s: usize,
    target_radius: f64,
    rng: &mut R,
) -> Result<CoefficientMatrix> {
    if !(target_radius > 0.0 && target_radius < 1.0) {
        return Err(Error::param(format!(
            "target radius must lie in (0,1), got {target_radius}"
        )));
    }
    if s == 0 {
        return Err(Error::param(
            "s = 0 gives the zero matrix, which cannot be rescaled",
        ));
    }
    if s > p * p {
        return Err(Error::param(format!("s = {s} exceeds p^2 = {}", p * p)));
    }
    for _ in 0..MAX_SUPPORT_REDRAWS {
        let mut a = Matrix::zeros(p, p);
        for idx in sample_indices(rng, p * p, s).into_iter() {
            // U(0,1) with zero excluded so the support has exactly s entries
            let mut v: f64 = rng.random();
            while v == 0.0 {
                v = rng.random();
            }
            a[(idx / p, idx % p)] = v;
        }
        let info = spectral_radius(&a, SPECTRAL_TOL, SPECTRAL_MAX_ITER)?;
        if info.radius > 1e-12 {
            return Ok(CoefficientMatrix::new(a.scale(target_radius / info.radius)));
        }
    }
    Err(Error::param(format!(
        "no non-nilpotent support found for p={p}, s={s} after {MAX_SUPPORT_REDRAWS} draws"
    )))
}

/// Regressor/response matrices plus how they were generated.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeriesSample {
    pub x: Matrix,
    pub y: Matrix,
    pub burn_in: usize,
    pub seed: Option<u64>,
    pub spec: Option<DgmSpec>,
}

impl TimeSeriesSample {
    /// Wraps externally supplied data.
    pub fn from_xy(x: Matrix, y: Matrix) -> Result<Self> {
        if x.rows() != y.rows() {
            return Err(Error::DimensionMismatch {
                expected: (x.rows(), y.cols()),
                got: y.shape(),
            });
        }
        Ok(Self {
            x,
            y,
            burn_in: 0,
            seed: None,
            spec: None,
        })
    }

    pub fn len(&self) -> usize {
        self.x.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.x.rows() == 0
    }

    pub fn p(&self) -> usize {
        self.x.cols()
    }

    pub fn q(&self) -> usize {
        self.y.cols()
    }

    /// CSV with header `t,x_1..x_p,y_1..y_q`, one row per observation.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(w);
        let mut header = vec!["t".to_string()];
        header.extend((1..=self.p()).map(|i| format!("x_{i}")));
        header.extend((1..=self.q()).map(|j| format!("y_{j}")));
        wr.write_record(&header)?;
        for t in 0..self.len() {
            let mut rec = vec![(t + 1).to_string()];
            rec.extend(self.x.row(t).iter().map(|v| v.to_string()));
            rec.extend(self.y.row(t).iter().map(|v| v.to_string()));
            wr.write_record(&rec)?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }

    /// Reads the format written by [`Self::write_csv`]; columns are matched by
    /// their `x_`/`y_` prefix.
    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(r);
        let header = rd.headers()?.clone();
        let xs: Vec<usize> = header
            .iter()
            .enumerate()
            .filter(|(_, h)| h.starts_with("x_"))
            .map(|(i, _)| i)
            .collect();
        let ys: Vec<usize> = header
            .iter()
            .enumerate()
            .filter(|(_, h)| h.starts_with("y_"))
            .map(|(i, _)| i)
            .collect();
        if xs.is_empty() || ys.is_empty() {
            return Err(Error::Parse("sample CSV needs x_* and y_* columns".into()));
        }
        let (mut xd, mut yd, mut n) = (Vec::new(), Vec::new(), 0);
        for rec in rd.records() {
            let rec = rec?;
            let field = |i: usize| -> Result<f64> {
                rec[i]
                    .trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Parse(format!("row {}: {e}", n + 1)))
            };
            for &i in &xs {
                xd.push(field(i)?);
            }
            for &i in &ys {
                yd.push(field(i)?);
            }
            n += 1;
        }
        Self::from_xy(Matrix::new(n, xs.len(), xd)?, Matrix::new(n, ys.len(), yd)?)
    }

    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_csv(std::fs::File::open(path)?)
    }
}

/// ARCH volatility multiplier `c * min(max(|z|^m, a), b)`.
pub fn arch_multiplier(z: &[f64], c: f64, m: f64, a: f64, b: f64) -> f64 {
    c * l2(z).powf(m).max(a).min(b)
}

/// Simulates `t` observations after discarding `burn_in` steps from a zero
/// initial state. The stream is `ChaCha8` seeded with `seed`.
pub fn simulate(spec: &DgmSpec, t: usize, burn_in: usize, seed: u64) -> Result<TimeSeriesSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sample = simulate_with_rng(spec, t, burn_in, &mut rng)?;
    sample.seed = Some(seed);
    Ok(sample)
}

pub fn simulate_with_rng<R: Rng + ?Sized>(
    spec: &DgmSpec,
    t: usize,
    burn_in: usize,
    rng: &mut R,
) -> Result<TimeSeriesSample> {
    if t == 0 {
        return Err(Error::param("sample length must be positive"));
    }
    spec.validate()?;
    let (x, y) = match spec {
        DgmSpec::GaussianVar { lags, noise_cov } => {
            let sampler = InnovationSampler::new(&InnovationSpec::gaussian(noise_cov.clone()))?;
            simulate_var(lags, 1.0, &sampler, t, burn_in, rng)
        }
        DgmSpec::SubweibullVar {
            lags,
            noise_scale,
            innovation,
        } => {
            let sampler = InnovationSampler::new(innovation)?;
            simulate_var(lags, *noise_scale, &sampler, t, burn_in, rng)
        }
        DgmSpec::OmittedVar { full, innovation } => {
            let sampler = InnovationSampler::new(innovation)?;
            let z = run_recursion(full, &sampler, t + 1, burn_in, rng, |_| 1.0);
            let p = full.rows() - 1;
            let x = z.block(0, t, 0, p);
            let y = z.block(1, t + 1, 0, p);
            (x, y)
        }
        DgmSpec::Arch {
            coef,
            c,
            m,
            a,
            b,
            innovation,
        } => {
            let sampler = InnovationSampler::new(innovation)?;
            let z = run_recursion(coef, &sampler, t + 1, burn_in, rng, |prev| {
                arch_multiplier(prev, *c, *m, *a, *b)
            });
            let p = coef.rows();
            (z.block(0, t, 0, p), z.block(1, t + 1, 0, p))
        }
        DgmSpec::CopyDependence {
            coef,
            noise_scale,
            rho,
            innovation,
        } => {
            let sampler = InnovationSampler::new(innovation)?;
            simulate_copy(coef, *noise_scale, *rho, &sampler, t, burn_in, rng)
        }
    };
    Ok(TimeSeriesSample {
        x,
        y,
        burn_in,
        seed: None,
        spec: Some(spec.clone()),
    })
}

/// Runs `z_t = A z_{t-1} + vol(z_{t-1}) e_t` from zero and returns the last
/// `keep` states as rows.
fn run_recursion<R: Rng + ?Sized>(
    a: &Matrix,
    sampler: &InnovationSampler,
    keep: usize,
    burn_in: usize,
    rng: &mut R,
    vol: impl Fn(&[f64]) -> f64,
) -> Matrix {
    let p = a.rows();
    let mut out = Matrix::zeros(keep, p);
    let mut prev = vec![0.0; p];
    let mut eps = vec![0.0; p];
    for step in 0..burn_in + keep {
        sampler.fill(rng, &mut eps);
        let scale = vol(&prev);
        let mut next = a.mul_vec(&prev).expect("square");
        for (n, e) in next.iter_mut().zip(&eps) {
            *n += scale * e;
        }
        if step >= burn_in {
            out.row_mut(step - burn_in).copy_from_slice(&next);
        }
        prev = next;
    }
    out
}

fn simulate_var<R: Rng + ?Sized>(
    lags: &[Matrix],
    noise_scale: f64,
    sampler: &InnovationSampler,
    t: usize,
    burn_in: usize,
    rng: &mut R,
) -> (Matrix, Matrix) {
    let d = lags.len();
    let p = lags[0].rows();
    let comp = companion_form(lags).expect("validated");
    // companion state (Z_t, Z_{t-1}, ..., Z_{t-d+1}); only the top block is noisy
    let keep = t + 1;
    let mut states = Matrix::zeros(keep, d * p);
    let mut state = vec![0.0; d * p];
    let mut eps = vec![0.0; p];
    for step in 0..burn_in + keep {
        sampler.fill(rng, &mut eps);
        let mut next = comp.mul_vec(&state).expect("square");
        for (n, e) in next[..p].iter_mut().zip(&eps) {
            *n += noise_scale * e;
        }
        if step >= burn_in {
            states.row_mut(step - burn_in).copy_from_slice(&next);
        }
        state = next;
    }
    let x = states.block(0, t, 0, d * p);
    let y = states.block(1, t + 1, 0, p);
    (x, y)
}

fn simulate_copy<R: Rng + ?Sized>(
    coef: &Matrix,
    noise_scale: f64,
    rho: f64,
    sampler: &InnovationSampler,
    t: usize,
    burn_in: usize,
    rng: &mut R,
) -> (Matrix, Matrix) {
    let p = coef.rows();
    let mut x = Matrix::zeros(t, p);
    let mut y = Matrix::zeros(t, p);
    let mut xt = vec![0.0; p];
    let mut yt = vec![0.0; p];
    let mut eps = vec![0.0; p];
    let mut fresh = |rng: &mut R, xt: &mut Vec<f64>, yt: &mut Vec<f64>| {
        xt.iter_mut().for_each(|v| *v = rng.sample(StandardNormal));
        sampler.fill(rng, &mut eps);
        *yt = coef.mul_vec(xt).expect("square");
        for (v, e) in yt.iter_mut().zip(&eps) {
            *v += noise_scale * e;
        }
    };
    fresh(rng, &mut xt, &mut yt);
    for step in 0..burn_in + t {
        if step > 0 {
            let copy = rng.random::<f64>() < rho;
            if !copy {
                fresh(rng, &mut xt, &mut yt);
            }
        }
        if step >= burn_in {
            x.row_mut(step - burn_in).copy_from_slice(&xt);
            y.row_mut(step - burn_in).copy_from_slice(&yt);
        }
    }
    (x, y)
}

/// Covariance of one innovation draw.
pub fn innovation_covariance(spec: &InnovationSpec) -> Matrix {
    match &spec.kind {
        InnovationKind::Gaussian { cov } => cov.clone(),
        _ => Matrix::identity(spec.dim).scale(spec.coordinate_variance(0)),
    }
}

/// Stationary covariance `Sigma_Z(0)` of the full state of a linear spec
/// (VAR companion state or the unreduced omitted-variable system).
pub fn stationary_covariance(spec: &DgmSpec) -> Result<Matrix> {
    spec.validate()?;
    match spec {
        DgmSpec::GaussianVar { lags, noise_cov } => var_covariance(lags, noise_cov),
        DgmSpec::SubweibullVar {
            lags,
            noise_scale,
            innovation,
        } => var_covariance(
            lags,
            &innovation_covariance(innovation).scale(noise_scale * noise_scale),
        ),
        DgmSpec::OmittedVar { full, innovation } => {
            solve_discrete_lyapunov(full, &innovation_covariance(innovation), LYAPUNOV_TOL)
        }
        _ => Err(Error::param(format!(
            "{} has no closed-form stationary covariance",
            spec.name()
        ))),
    }
}

fn var_covariance(lags: &[Matrix], noise: &Matrix) -> Result<Matrix> {
    let comp = companion_form(lags)?;
    let p = lags[0].rows();
    let mut q = Matrix::zeros(comp.rows(), comp.rows());
    for i in 0..p {
        for j in 0..p {
            q[(i, j)] = noise[(i, j)];
        }
    }
    solve_discrete_lyapunov(&comp, &q, LYAPUNOV_TOL)
}

/// Best linear predictor `Theta*` of `Y_t` given `X_t` (a `p x q` matrix).
pub fn population_theta(spec: &DgmSpec) -> Result<CoefficientMatrix> {
    spec.validate()?;
    let theta = match spec {
        DgmSpec::GaussianVar { lags, .. } | DgmSpec::SubweibullVar { lags, .. } => {
            let p = lags[0].rows();
            let mut theta = Matrix::zeros(lags.len() * p, p);
            for (k, a) in lags.iter().enumerate() {
                for i in 0..p {
                    for j in 0..p {
                        theta[(k * p + i, j)] = a[(j, i)];
                    }
                }
            }
            theta
        }
        DgmSpec::Arch { coef, .. } | DgmSpec::CopyDependence { coef, .. } => coef.transpose(),
        DgmSpec::OmittedVar { full, .. } => {
            let p = full.rows() - 1;
            let sigma = stationary_covariance(spec)?;
            let sigma_z = sigma.block(0, p, 0, p);
            let sigma_xi_z = sigma.block(p, p + 1, 0, p);
            let a_zz = full.block(0, p, 0, p);
            let a_zxi = full.block(0, p, p, p + 1);
            // (Theta*)' = A_ZZ + A_ZXi Sigma_XiZ Sigma_Z^{-1}; Sigma_Z symmetric, so
            // Theta* = A_ZZ' + Sigma_Z^{-1} (A_ZXi Sigma_XiZ)'
            let m = a_zxi.matmul(&sigma_xi_z)?;
            let correction = solve_spd(&sigma_z, &m.transpose()).map_err(|e| match e {
                Error::NotPositiveDefinite => Error::param("Sigma_Z is singular"),
                other => other,
            })?;
            a_zz.transpose().add(&correction)?
        }
    };
    Ok(CoefficientMatrix::new(theta))
}
