//! Empirical checks of the restricted-eigenvalue (RE) and deviation-bound
//! (DB) conditions, the resulting error bounds, and Monte-Carlo validators
//! for the two concentration inequalities behind them.
//!
//! The RE check is randomized falsification over a fixed family of probe
//! directions. A pass means no probe found a negative margin, not that the
//! condition holds on all of `R^p`.

use rand::seq::index::sample as sample_indices;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::dgm::{simulate, CoefficientMatrix, DgmSpec, TimeSeriesSample, DEFAULT_BURN_IN};
use crate::error::{Error, Result};
use crate::lasso::deviation_statistic;
use crate::matops::{dot, l1, l2, symmetric_eigenvalues, Matrix};
use crate::seed::derive_seed;
use crate::tails::compose_gamma;

/// `v' G v - alpha |v|_2^2 + tau |v|_1^2`.
pub fn re_margin(gamma_hat: &Matrix, v: &[f64], alpha: f64, tau: f64) -> f64 {
    let gv = gamma_hat
        .mul_vec(v)
        .expect("probe length matches Gram matrix");
    let n1 = l1(v);
    let n2 = l2(v);
    dot(v, &gv) - alpha * n2 * n2 + tau * n1 * n1
}

/// Same margin from the design directly: `(1/T)|Xv|^2 - alpha |v|_2^2 + tau |v|_1^2`.
pub fn re_margin_direct(x: &Matrix, v: &[f64], alpha: f64, tau: f64) -> f64 {
    let xv = x.mul_vec(v).expect("probe length matches design");
    let n1 = l1(v);
    let n2 = l2(v);
    dot(&xv, &xv) / x.rows() as f64 - alpha * n2 * n2 + tau * n1 * n1
}

/// Probe family for [`check_re_gram`].
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ReProbes {
    /// Random sparse probes and dense Gaussian probes, each.
    pub n_probes: usize,
    /// Sparse probes draw their sparsity from `1..=min(2 s_hint, p)`; `None` means up to `p`.
    pub s_hint: Option<usize>,
    /// Regressor indices carrying signal; adds `n_probes` random sign patterns on them.
    pub support: Option<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReCertificate {
    pub alpha: f64,
    pub tau: f64,
    /// Total number of probe vectors evaluated.
    pub n_probes: usize,
    pub min_margin: f64,
    /// The minimizing probe when its margin is negative.
    pub falsified_by: Option<Vec<f64>>,
}

impl ReCertificate {
    pub fn pass(&self) -> bool {
        self.min_margin >= 0.0
    }
}

/// Rows of `theta` with a nonzero entry: the regressors that matter.
pub fn support_rows(theta: &CoefficientMatrix) -> Vec<usize> {
    let mut rows: Vec<usize> = theta.support().iter().map(|&(i, _)| i).collect();
    rows.dedup();
    rows
}

pub fn check_re<R: Rng + ?Sized>(
    sample: &TimeSeriesSample,
    alpha: f64,
    tau: f64,
    n_probes: usize,
    rng: &mut R,
) -> Result<ReCertificate> {
    let probes = ReProbes {
        n_probes,
        ..ReProbes::default()
    };
    check_re_gram(&sample.x.gram(), alpha, tau, &probes, rng)
}

/// Evaluates the RE margin on basis vectors, random sparse unit vectors,
/// dense Gaussian unit vectors and sign patterns on the support.
pub fn check_re_gram<R: Rng + ?Sized>(
    gamma_hat: &Matrix,
    alpha: f64,
    tau: f64,
    probes: &ReProbes,
    rng: &mut R,
) -> Result<ReCertificate> {
    if !(alpha > 0.0) {
        return Err(Error::param(format!("alpha must be > 0, got {alpha}")));
    }
    if !(tau >= 0.0) {
        return Err(Error::param(format!("tau must be >= 0, got {tau}")));
    }
    if probes.n_probes == 0 {
        return Err(Error::param("n_probes must be >= 1"));
    }
    if !gamma_hat.is_square() {
        return Err(Error::NotSquare {
            rows: gamma_hat.rows(),
            cols: gamma_hat.cols(),
        });
    }
    let p = gamma_hat.rows();
    if let Some(bad) = probes.support.iter().flatten().find(|&&j| j >= p) {
        return Err(Error::param(format!(
            "support index {bad} out of range for p = {p}"
        )));
    }

    let mut best = (f64::INFINITY, Vec::new());
    let mut count = 0;
    let mut consider = |v: Vec<f64>| {
        count += 1;
        let m = re_margin(gamma_hat, &v, alpha, tau);
        if m < best.0 {
            best = (m, v);
        }
    };

    for j in 0..p {
        let mut v = vec![0.0; p];
        v[j] = 1.0;
        consider(v);
    }
    let max_sparsity = probes.s_hint.map_or(p, |s| (2 * s).clamp(1, p));
    for _ in 0..probes.n_probes {
        let k = rng.random_range(1..=max_sparsity);
        let mut v = vec![0.0; p];
        for j in sample_indices(rng, p, k).into_iter() {
            v[j] = rng.sample(StandardNormal);
        }
        if let Some(u) = unit(v) {
            consider(u);
        }
    }
    for _ in 0..probes.n_probes {
        let v: Vec<f64> = (0..p).map(|_| rng.sample(StandardNormal)).collect();
        if let Some(u) = unit(v) {
            consider(u);
        }
    }
    if let Some(support) = probes.support.as_ref().filter(|s| !s.is_empty()) {
        for _ in 0..probes.n_probes {
            let mut v = vec![0.0; p];
            for &j in support {
                v[j] = if rng.random::<bool>() { 1.0 } else { -1.0 };
            }
            consider(unit(v).expect("nonempty support"));
        }
    }

    let (min_margin, argmin) = best;
    Ok(ReCertificate {
        alpha,
        tau,
        n_probes: count,
        min_margin,
        falsified_by: (min_margin < 0.0).then_some(argmin),
    })
}

fn unit(mut v: Vec<f64>) -> Option<Vec<f64>> {
    let n = l2(&v);
    if n == 0.0 {
        return None;
    }
    v.iter_mut().for_each(|x| *x /= n);
    Some(v)
}

/// Which rate `R(p, q, T)` the DB bound uses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RateMode {
    /// `s_alpha * sqrt(log(pq)/T)`, with `s_alpha` a proxy for the summed
    /// alpha-mixing coefficients.
    Gaussian { s_alpha: f64 },
    /// `sqrt(log(pq)/T)`.
    Subweibull,
}

pub fn db_rate(p: usize, q: usize, t: usize, mode: RateMode) -> Result<f64> {
    if p == 0 || q == 0 || t == 0 {
        return Err(Error::param("p, q and T must be >= 1"));
    }
    let base = ((p as f64 * q as f64).ln() / t as f64).sqrt();
    match mode {
        RateMode::Gaussian { s_alpha } if !(s_alpha > 0.0) => Err(Error::param(format!(
            "S_alpha proxy must be > 0, got {s_alpha}"
        ))),
        RateMode::Gaussian { s_alpha } => Ok(s_alpha * base),
        RateMode::Subweibull => Ok(base),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DbCertificate {
    /// `(1/T) |X'W|_inf`.
    pub lhs: f64,
    /// `q_mult * R(p, q, T)`.
    pub bound: f64,
    pub pass: bool,
}

pub fn check_db(
    sample: &TimeSeriesSample,
    theta_star: &CoefficientMatrix,
    q_mult: f64,
    rate_mode: RateMode,
) -> Result<DbCertificate> {
    if !(q_mult >= 0.0) {
        return Err(Error::param(format!("q_mult must be >= 0, got {q_mult}")));
    }
    let lhs = deviation_statistic(sample, theta_star)?;
    let bound = q_mult * db_rate(sample.p(), sample.q(), sample.len(), rate_mode)?;
    Ok(DbCertificate {
        lhs,
        bound,
        pass: lhs <= bound,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundReport {
    /// `4 sqrt(s) lambda / alpha`, bounding `|vec(theta_hat - theta_star)|_2`.
    pub l2_bound: f64,
    /// `32 lambda^2 s / alpha`, bounding the *squared* Frobenius norm of
    /// `D' Gamma_hat D`.
    pub pred_bound: f64,
    /// `alpha >= 32 s tau`.
    pub premise_ok: bool,
    /// `lambda >= 4 (1/T)|X'W|_inf`, once a deviation value is supplied.
    pub lambda_ok: Option<bool>,
}

impl BoundReport {
    pub fn with_deviation(mut self, lambda: f64, deviation: f64) -> Self {
        self.lambda_ok = Some(lambda >= 4.0 * deviation);
        self
    }

    pub fn l2_holds(&self, l2_error: f64) -> bool {
        l2_error <= self.l2_bound
    }

    pub fn pred_holds(&self, pred_error: f64) -> bool {
        pred_error * pred_error <= self.pred_bound
    }
}

pub fn master_bounds(s: usize, lambda: f64, alpha: f64, tau: f64) -> Result<BoundReport> {
    if !(alpha > 0.0) {
        return Err(Error::param(format!("alpha must be > 0, got {alpha}")));
    }
    let s_f = s as f64;
    Ok(BoundReport {
        l2_bound: 4.0 * s_f.sqrt() * lambda / alpha,
        pred_bound: 32.0 * lambda * lambda * s_f / alpha,
        premise_ok: alpha >= 32.0 * s_f * tau,
        lambda_ok: None,
    })
}

/// Inputs to the Gaussian, alpha-mixing guarantee. `c_re` and `c_tilde` are
/// the unnamed universal constants; nothing here supplies values for them.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianCorollaryInput {
    pub sigma_x_op: f64,
    pub sigma_y_op: f64,
    /// `max_i |Theta*_{:i}|_2^2`.
    pub max_col_theta_sq: f64,
    pub s_alpha: f64,
    pub b: f64,
    pub c_tilde: f64,
    pub c_re: f64,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub s: usize,
    pub p: usize,
    pub q: usize,
    pub t: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GaussianCorollary {
    pub q_mult: f64,
    pub rate: f64,
    pub lambda: f64,
    pub alpha: f64,
    pub eta: f64,
    /// `alpha / ceil(c T min(1, eta^2) / (4 log p))`.
    pub tau: f64,
    /// `log p / (c min(1, eta^2)) * max(42e, 128 s)`.
    pub t_min_re: f64,
    /// `log(pq) sqrt((b+1)/c_tilde)`.
    pub t_min_db: f64,
    pub t_ok: bool,
}

pub fn corollary_gaussian(inp: &GaussianCorollaryInput) -> Result<GaussianCorollary> {
    let positive = [
        ("sigma_x_op", inp.sigma_x_op),
        ("sigma_y_op", inp.sigma_y_op),
        ("s_alpha", inp.s_alpha),
        ("b", inp.b),
        ("c_tilde", inp.c_tilde),
        ("c_re", inp.c_re),
        ("lambda_min", inp.lambda_min),
        ("lambda_max", inp.lambda_max),
    ];
    for (name, v) in positive {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::param(format!("{name} must be positive, got {v}")));
        }
    }
    if !(inp.max_col_theta_sq >= 0.0) {
        return Err(Error::param("max_col_theta_sq must be >= 0"));
    }
    let root = ((inp.b + 1.0) / inp.c_tilde).sqrt();
    let q_mult = 8.0
        * std::f64::consts::PI
        * root
        * (inp.sigma_x_op * (1.0 + inp.max_col_theta_sq) + inp.sigma_y_op);
    let rate = db_rate(
        inp.p,
        inp.q,
        inp.t,
        RateMode::Gaussian {
            s_alpha: inp.s_alpha,
        },
    )?;
    let alpha = 0.5 * inp.lambda_min;
    let eta = inp.lambda_min / (108.0 * std::f64::consts::PI * inp.s_alpha * inp.lambda_max);
    let shrink = eta.powi(2).min(1.0);
    let log_p = (inp.p as f64).ln();
    let t = inp.t as f64;
    let t_min_re =
        log_p / (inp.c_re * shrink) * (42.0 * std::f64::consts::E).max(128.0 * inp.s as f64);
    let t_min_db = (inp.p as f64 * inp.q as f64).ln() * root;
    let tau = if log_p > 0.0 {
        alpha / (inp.c_re * t * shrink / (4.0 * log_p)).ceil().max(1.0)
    } else {
        0.0
    };
    Ok(GaussianCorollary {
        q_mult,
        rate,
        lambda: 4.0 * q_mult * rate,
        alpha,
        eta,
        tau,
        t_min_re,
        t_min_db,
        t_ok: t >= t_min_re.max(t_min_db),
    })
}

/// Inputs to the subweibull, beta-mixing guarantee.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubweibullCorollaryInput {
    pub k_x: f64,
    pub k_y: f64,
    /// Operator norm of `Theta*`.
    pub theta_op: f64,
    pub gamma1: f64,
    pub gamma2: f64,
    /// Mixing-rate constant; the other constants depend on it but no formula
    /// uses it directly.
    pub c_mix: f64,
    pub c1: f64,
    pub c2: f64,
    pub lambda_min: f64,
    pub s: usize,
    pub p: usize,
    pub q: usize,
    pub t: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SubweibullCorollary {
    /// `2^(2/gamma2) (K_Y + K_X (1 + |Theta*|))^2`.
    pub k: f64,
    /// `(1/gamma1 + 2/gamma2)^-1`.
    pub gamma: f64,
    pub gamma_below_one: bool,
    /// `4 C2 K sqrt(log(pq)/T)`.
    pub lambda: f64,
    pub alpha: f64,
    /// `lambda_min^gamma / ((54 K_re)^gamma 2 C1)` with `K_re = 2^(2/gamma2) K_X^2`.
    pub c_tilde: f64,
    /// `alpha / (2 c_tilde) * log p / T^gamma`.
    pub tau: f64,
    pub thresholds: [f64; 3],
    pub thresholds_ok: [bool; 3],
}

pub fn corollary_subweibull(inp: &SubweibullCorollaryInput) -> Result<SubweibullCorollary> {
    let positive = [
        ("gamma1", inp.gamma1),
        ("gamma2", inp.gamma2),
        ("c_mix", inp.c_mix),
        ("c1", inp.c1),
        ("c2", inp.c2),
        ("lambda_min", inp.lambda_min),
    ];
    for (name, v) in positive {
        if !(v > 0.0) {
            return Err(Error::param(format!("{name} must be positive, got {v}")));
        }
    }
    for (name, v) in [
        ("k_x", inp.k_x),
        ("k_y", inp.k_y),
        ("theta_op", inp.theta_op),
    ] {
        if !(v >= 0.0 && v.is_finite()) {
            return Err(Error::param(format!("{name} must be >= 0, got {v}")));
        }
    }
    let gamma = compose_gamma(inp.gamma1, inp.gamma2)?.gamma;
    if gamma >= 1.0 {
        log::warn!("composite gamma = {gamma} >= 1; the subweibull guarantee assumes gamma < 1");
    }
    let scale = 2f64.powf(2.0 / inp.gamma2);
    let k = scale * (inp.k_y + inp.k_x * (1.0 + inp.theta_op)).powi(2);
    let k_re = scale * inp.k_x * inp.k_x;
    let (p, q, t) = (inp.p as f64, inp.q as f64, inp.t as f64);
    let rate = db_rate(inp.p, inp.q, inp.t, RateMode::Subweibull)?;
    let alpha = 0.5 * inp.lambda_min;
    let c_tilde = inp.lambda_min.powf(gamma) / ((54.0 * k_re).powf(gamma) * 2.0 * inp.c1);
    let tau = alpha / (2.0 * c_tilde) * p.ln() / t.powf(gamma);
    let t1 = inp.c1 * (p * q).ln().powf(2.0 / gamma - 1.0);
    let t2 =
        54.0 * k * (2.0 * (8.0 * inp.s as f64 / c_tilde).max(inp.c1) * p.ln()).powf(1.0 / gamma)
            / inp.lambda_min;
    // the third threshold only exists for gamma < 1
    let t3 = if gamma < 1.0 {
        (54.0 * k / inp.lambda_min).powf((2.0 - gamma) / (1.0 - gamma))
            * (inp.c2 / inp.c1).powf(1.0 / (1.0 - gamma))
    } else {
        f64::INFINITY
    };
    let thresholds = [t1, t2, t3];
    Ok(SubweibullCorollary {
        k,
        gamma,
        gamma_below_one: gamma < 1.0,
        lambda: 4.0 * inp.c2 * k * rate,
        alpha,
        c_tilde,
        tau,
        thresholds,
        thresholds_ok: thresholds.map(|v| t >= v),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HansonWrightRow {
    pub eta: f64,
    pub empirical: f64,
    pub bound: f64,
    pub slack: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HansonWrightTable {
    pub n: usize,
    pub n_mc: usize,
    /// Largest `c` in `{0.01 k}` with the bound above every empirical
    /// frequency; 0 when even `c = 0.01` fails.
    pub c_hat: f64,
    pub rows: Vec<HansonWrightRow>,
}

impl HansonWrightTable {
    pub fn dominated(&self) -> bool {
        self.c_hat > 0.0 && self.rows.iter().all(|r| r.slack >= 0.0)
    }
}

const HW_C_STEPS: usize = 10_000;
const MC_CHUNK: usize = 1_000;

fn hw_bound(c: f64, n: usize, eta: f64) -> f64 {
    2.0 * (-c * n as f64 * eta.min(eta * eta)).exp()
}

/// Monte-Carlo exceedance of `(1/n)|Y'Y - E Y'Y| > eta |Q|` for
/// `Y ~ N(0, Q)` against `2 exp(-c n min(eta, eta^2))`.
///
/// `Y'Y` has the law of `sum_i mu_i z_i^2` with `mu` the eigenvalues of `Q`,
/// which is what is simulated.
pub fn validate_hanson_wright(
    q_cov: &Matrix,
    eta_grid: &[f64],
    n_mc: usize,
    seed: u64,
) -> Result<HansonWrightTable> {
    if n_mc == 0 || eta_grid.is_empty() {
        return Err(Error::param("need n_mc >= 1 and a nonempty eta grid"));
    }
    if let Some(e) = eta_grid.iter().find(|e| !(**e > 0.0)) {
        return Err(Error::param(format!("eta must be > 0, got {e}")));
    }
    let mu = symmetric_eigenvalues(q_cov)?;
    let top = mu.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
    if let Some(&neg) = mu.iter().find(|&&m| m < -1e-10 * top.max(1.0)) {
        return Err(Error::NotPsd(neg));
    }
    let mu: Vec<f64> = mu.into_iter().map(|m| m.max(0.0)).collect();
    let n = mu.len();
    let trace: f64 = mu.iter().sum();
    let op = mu.iter().cloned().fold(0.0, f64::max);
    if op == 0.0 {
        return Err(Error::param("Q is zero"));
    }

    let deviations: Vec<f64> = chunks(n_mc)
        .into_par_iter()
        .flat_map_iter(|(chunk, len)| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, chunk as u64, 0));
            let mu = &mu;
            (0..len)
                .map(move |_| {
                    let s: f64 = mu
                        .iter()
                        .map(|m| {
                            let z: f64 = rng.sample(StandardNormal);
                            m * z * z
                        })
                        .sum();
                    (s - trace).abs() / (n as f64 * op)
                })
                .collect::<Vec<_>>()
        })
        .collect();
    let empirical: Vec<f64> = eta_grid
        .iter()
        .map(|&eta| deviations.iter().filter(|&&d| d > eta).count() as f64 / n_mc as f64)
        .collect();

    let holds = |c: f64| {
        eta_grid
            .iter()
            .zip(&empirical)
            .all(|(&eta, &e)| e <= hw_bound(c, n, eta))
    };
    let mut c_hat = 0.0;
    for k in 1..=HW_C_STEPS {
        let c = 0.01 * k as f64;
        if !holds(c) {
            break;
        }
        c_hat = c;
    }
    let rows = eta_grid
        .iter()
        .zip(&empirical)
        .map(|(&eta, &e)| {
            let bound = if c_hat > 0.0 {
                hw_bound(c_hat, n, eta)
            } else {
                f64::NAN
            };
            HansonWrightRow {
                eta,
                empirical: e,
                bound,
                slack: bound - e,
            }
        })
        .collect();
    Ok(HansonWrightTable {
        n,
        n_mc,
        c_hat,
        rows,
    })
}

fn chunks(n: usize) -> Vec<(usize, usize)> {
    (0..n.div_ceil(MC_CHUNK))
        .map(|i| (i, MC_CHUNK.min(n - i * MC_CHUNK)))
        .collect()
}

/// Setup for [`validate_beta_bernstein`].
#[derive(Debug, Clone, PartialEq)]
pub struct BernsteinSetup {
    pub spec: DgmSpec,
    /// Summands are `projection' X_t`.
    pub projection: Vec<f64>,
    pub t: usize,
    pub t_grid: Vec<f64>,
    pub n_mc: usize,
    pub gamma1: f64,
    pub gamma2: f64,
    pub k: f64,
    pub burn_in: usize,
    pub seed: u64,
}

impl BernsteinSetup {
    /// First-coordinate projection with the default burn-in.
    pub fn new(
        spec: DgmSpec,
        t: usize,
        t_grid: Vec<f64>,
        n_mc: usize,
        gammas: (f64, f64),
        k: f64,
        seed: u64,
    ) -> Self {
        let mut projection = vec![0.0; spec.sample_dims().0];
        if let Some(first) = projection.first_mut() {
            *first = 1.0;
        }
        Self {
            spec,
            projection,
            t,
            t_grid,
            n_mc,
            gamma1: gammas.0,
            gamma2: gammas.1,
            k,
            burn_in: DEFAULT_BURN_IN,
            seed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BernsteinRow {
    pub t: f64,
    pub empirical: f64,
    pub term1: f64,
    pub term2: f64,
    pub bound: f64,
    pub slack: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BernsteinTable {
    /// `(1/gamma1 + 1/gamma2)^-1`.
    pub gamma: f64,
    pub c1_hat: f64,
    pub c2_hat: f64,
    pub max_abs_mean: f64,
    pub rows: Vec<BernsteinRow>,
}

impl BernsteinTable {
    pub fn dominated(&self) -> bool {
        self.c1_hat.is_finite()
            && self.c2_hat.is_finite()
            && self.rows.iter().all(|r| r.slack >= 0.0)
    }
}

const C1_GRID: (f64, f64, usize) = (1e-4, 1e8, 241);
const C2_FLOOR: f64 = 1e-12;

fn bernstein_terms(t: f64, n: usize, gamma: f64, k: f64, c1: f64, c2: f64) -> (f64, f64) {
    let n = n as f64;
    let term1 = n * (-(t * n).powf(gamma) / (k.powf(gamma) * c1)).exp();
    let term2 = (-t * t * n / (k * k * c2)).exp();
    (term1, term2)
}

/// Monte-Carlo exceedance of `|S_T / T| > t` for `S_T = sum_t v'X_t` against
/// `T exp(-(tT)^g / (K^g C1)) + exp(-t^2 T / (K^2 C2))`.
///
/// `(C1, C2)` are fitted: for each `C1` on a log grid the smallest `C2`
/// making the bound hold at every grid point has a closed form; the pair
/// with the smallest summed bound wins.
pub fn validate_beta_bernstein(setup: &BernsteinSetup) -> Result<BernsteinTable> {
    let t_len = setup.t;
    if t_len <= 4 {
        return Err(Error::param(format!("T must exceed 4, got {t_len}")));
    }
    if setup.n_mc == 0 || setup.t_grid.is_empty() {
        return Err(Error::param("need n_mc >= 1 and a nonempty t grid"));
    }
    if let Some(bad) = setup.t_grid.iter().find(|&&t| !(t > 1.0 / t_len as f64)) {
        return Err(Error::param(format!(
            "grid value {bad} must exceed 1/T = {}",
            1.0 / t_len as f64
        )));
    }
    if !(setup.k > 0.0) {
        return Err(Error::param("K must be > 0"));
    }
    if setup.projection.len() != setup.spec.sample_dims().0 {
        return Err(Error::DimensionMismatch {
            expected: (setup.spec.sample_dims().0, 1),
            got: (setup.projection.len(), 1),
        });
    }
    setup.spec.validate()?;
    let gamma = compose_gamma(setup.gamma1, setup.gamma2)?.gamma_sum;

    let means: Vec<f64> = (0..setup.n_mc)
        .into_par_iter()
        .map(|rep| {
            let sample = simulate(
                &setup.spec,
                t_len,
                setup.burn_in,
                derive_seed(setup.seed, 0, rep as u64),
            )?;
            let total: f64 = (0..t_len)
                .map(|i| dot(sample.x.row(i), &setup.projection))
                .sum();
            Ok((total / t_len as f64).abs())
        })
        .collect::<Result<_>>()?;
    let max_abs_mean = means.iter().cloned().fold(0.0, f64::max);
    let empirical: Vec<f64> = setup
        .t_grid
        .iter()
        .map(|&t| means.iter().filter(|&&m| m > t).count() as f64 / setup.n_mc as f64)
        .collect();

    let (lo, hi, steps) = C1_GRID;
    let mut best: Option<(f64, f64, f64)> = None;
    for i in 0..steps {
        let c1 = lo * (hi / lo).powf(i as f64 / (steps - 1) as f64);
        let mut c2 = C2_FLOOR;
        for (&t, &e) in setup.t_grid.iter().zip(&empirical) {
            let (term1, _) = bernstein_terms(t, t_len, gamma, setup.k, c1, 1.0);
            let need = e - term1;
            if need > 0.0 {
                // exp(-t^2 T / (K^2 C2)) >= need
                let req = t * t * t_len as f64 / (setup.k * setup.k * -need.ln());
                c2 = c2.max(req * (1.0 + 1e-12));
            }
        }
        let total: f64 = setup
            .t_grid
            .iter()
            .map(|&t| {
                let (a, b) = bernstein_terms(t, t_len, gamma, setup.k, c1, c2);
                a + b
            })
            .sum();
        if best.is_none_or(|(_, _, b)| total < b) {
            best = Some((c1, c2, total));
        }
    }
    let (c1_hat, c2_hat, _) = best.expect("nonempty C1 grid");
    let rows = setup
        .t_grid
        .iter()
        .zip(&empirical)
        .map(|(&t, &e)| {
            let (term1, term2) = bernstein_terms(t, t_len, gamma, setup.k, c1_hat, c2_hat);
            BernsteinRow {
                t,
                empirical: e,
                term1,
                term2,
                bound: term1 + term2,
                slack: term1 + term2 - e,
            }
        })
        .collect();
    Ok(BernsteinTable {
        gamma,
        c1_hat,
        c2_hat,
        max_abs_mean,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn gaussian(rows: usize, cols: usize, r: &mut ChaCha8Rng) -> Matrix {
        Matrix::new(
            rows,
            cols,
            (0..rows * cols).map(|_| r.sample(StandardNormal)).collect(),
        )
        .unwrap()
    }

    fn probes(n: usize) -> ReProbes {
        ReProbes {
            n_probes: n,
            ..ReProbes::default()
        }
    }

    #[test]
    fn re_identity_and_zero() {
        let c = check_re_gram(&Matrix::identity(6), 0.5, 0.0, &probes(50), &mut rng(1)).unwrap();
        assert!(c.pass());
        assert!((c.min_margin - 0.5).abs() < 1e-12);
        assert_eq!(c.n_probes, 6 + 100);

        let c = check_re_gram(&Matrix::zeros(6, 6), 0.5, 0.0, &probes(50), &mut rng(1)).unwrap();
        assert!(!c.pass());
        assert!((c.min_margin + 0.5).abs() < 1e-12);
        assert!(c.falsified_by.is_some());

        assert!(check_re_gram(&Matrix::identity(2), 0.0, 0.0, &probes(1), &mut rng(1)).is_err());
        assert!(check_re_gram(&Matrix::identity(2), 1.0, 0.0, &probes(0), &mut rng(1)).is_err());
    }

    #[test]
    fn re_support_probes_find_cancellation() {
        // Gram with a near-null direction (1, -1, 0, 0) that basis and sparse-1 probes miss
        let mut g = Matrix::identity(4);
        g[(0, 1)] = 0.99;
        g[(1, 0)] = 0.99;
        let p = ReProbes {
            n_probes: 20,
            s_hint: Some(1),
            support: Some(vec![0, 1]),
        };
        let c = check_re_gram(&g, 0.5, 0.0, &p, &mut rng(2)).unwrap();
        assert!(!c.pass());
        let v = c.falsified_by.unwrap();
        assert!((v[0] + v[1]).abs() < 1e-12);
        assert_eq!(c.n_probes, 4 + 20 + 20 + 20);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn margin_two_paths_agree(seed in 0u64..100_000, alpha in 0.01f64..2.0, tau in 0.0f64..1.0) {
            let mut r = rng(seed);
            let x = gaussian(30, 6, &mut r);
            let v: Vec<f64> = (0..6).map(|_| r.sample(StandardNormal)).collect();
            let a = re_margin(&x.gram(), &v, alpha, tau);
            let b = re_margin_direct(&x, &v, alpha, tau);
            let scale = dot(&v, &v) * (1.0 + alpha) + tau * l1(&v).powi(2) + 1.0;
            prop_assert!((a - b).abs() <= 1e-10 * scale, "{} vs {}", a, b);
        }

        #[test]
        fn master_bounds_homogeneous(s in 1usize..50, lambda in 0.001f64..1.0, alpha in 0.01f64..2.0, k in 0.1f64..10.0) {
            let a = master_bounds(s, lambda, alpha, 0.0).unwrap();
            let b = master_bounds(s, k * lambda, alpha, 0.0).unwrap();
            prop_assert!((b.l2_bound - k * a.l2_bound).abs() <= 1e-12 * b.l2_bound);
            prop_assert!((b.pred_bound - k * k * a.pred_bound).abs() <= 1e-12 * b.pred_bound);
        }

        #[test]
        fn db_lhs_row_permutation_invariant(seed in 0u64..100_000) {
            let mut r = rng(seed);
            let x = gaussian(25, 4, &mut r);
            let y = gaussian(25, 3, &mut r);
            let theta = CoefficientMatrix::new(gaussian(4, 3, &mut r));
            let mut order: Vec<usize> = (0..25).collect();
            for i in (1..25).rev() {
                order.swap(i, r.random_range(0..=i));
            }
            let permute = |m: &Matrix| Matrix::from_rows(&order.iter().map(|&i| m.row(i).to_vec()).collect::<Vec<_>>()).unwrap();
            let a = check_db(&TimeSeriesSample::from_xy(x.clone(), y.clone()).unwrap(), &theta, 1.0, RateMode::Subweibull).unwrap();
            let b = check_db(&TimeSeriesSample::from_xy(permute(&x), permute(&y)).unwrap(), &theta, 1.0, RateMode::Subweibull).unwrap();
            prop_assert!((a.lhs - b.lhs).abs() <= 1e-12 * a.lhs.max(1.0));
        }
    }

    #[test]
    fn db_cases() {
        let mut r = rng(3);
        let x = gaussian(40, 3, &mut r);
        let theta = CoefficientMatrix::new(gaussian(3, 2, &mut r));
        let exact =
            TimeSeriesSample::from_xy(x.clone(), x.matmul(theta.values()).unwrap()).unwrap();
        let c = check_db(&exact, &theta, 0.0, RateMode::Subweibull).unwrap();
        assert!(c.lhs < 1e-12 && c.pass);

        let noisy = TimeSeriesSample::from_xy(x.clone(), gaussian(40, 2, &mut r)).unwrap();
        assert!(
            !check_db(&noisy, &theta, 0.0, RateMode::Subweibull)
                .unwrap()
                .pass
        );
        let g = check_db(&noisy, &theta, 1.0, RateMode::Gaussian { s_alpha: 2.0 }).unwrap();
        let s = check_db(&noisy, &theta, 1.0, RateMode::Subweibull).unwrap();
        assert!((g.bound - 2.0 * s.bound).abs() < 1e-15);
        let bad = CoefficientMatrix::new(Matrix::zeros(2, 2));
        assert!(check_db(&noisy, &bad, 1.0, RateMode::Subweibull).is_err());
    }

    #[test]
    fn master_bound_values() {
        let b = master_bounds(1, 0.2, 0.8, 0.0).unwrap();
        assert!((b.l2_bound - 1.0).abs() < 1e-15);
        assert!((b.pred_bound - 1.6).abs() < 1e-14);
        assert!(b.premise_ok);
        assert!(!master_bounds(3, 0.2, 0.8, 0.8 / 48.0).unwrap().premise_ok);
        assert!((master_bounds(4, 0.1, 0.8, 0.0).unwrap().l2_bound - 1.0).abs() < 1e-15);
        assert!(master_bounds(1, 0.1, 0.0, 0.0).is_err());
        let b = b.with_deviation(0.2, 0.05);
        assert_eq!(b.lambda_ok, Some(true));
        assert!(b.pred_holds(1.2) && !b.pred_holds(1.3));
    }

    fn gauss_input() -> GaussianCorollaryInput {
        // b + 1 = c_tilde / (64 pi^2) makes 8 pi sqrt((b+1)/c_tilde) = 1
        let c_tilde = 128.0 * std::f64::consts::PI.powi(2);
        GaussianCorollaryInput {
            sigma_x_op: 1.0,
            sigma_y_op: 1.0,
            max_col_theta_sq: 0.0,
            s_alpha: 1.0,
            b: 1.0,
            c_tilde,
            c_re: 1.0,
            lambda_min: 0.5,
            lambda_max: 2.0,
            s: 3,
            p: 10,
            q: 10,
            t: 400,
        }
    }

    #[test]
    fn gaussian_corollary() {
        let base = corollary_gaussian(&gauss_input()).unwrap();
        assert!((base.q_mult - 2.0).abs() < 1e-12);
        assert!((base.rate - (100f64.ln() / 400.0).sqrt()).abs() < 1e-15);
        assert!((base.lambda - 4.0 * 2.0 * base.rate).abs() < 1e-14);
        assert_eq!(base.alpha, 0.25);

        let mut inp = gauss_input();
        inp.s_alpha = 2.0;
        let doubled = corollary_gaussian(&inp).unwrap();
        assert!((doubled.rate - 2.0 * base.rate).abs() < 1e-15);
        assert!((doubled.lambda - 2.0 * base.lambda).abs() < 1e-14);

        let mut inp = gauss_input();
        inp.t = 1600;
        assert!((corollary_gaussian(&inp).unwrap().rate - base.rate / 2.0).abs() < 1e-15);

        // eta is tiny for any realistic spectrum, so the RE threshold is huge
        assert!(!base.t_ok);
        assert!(base.t_min_re > 1e6);
        let mut inp = gauss_input();
        inp.c_re = 0.0;
        assert!(corollary_gaussian(&inp).is_err());
    }

    fn sw_input() -> SubweibullCorollaryInput {
        SubweibullCorollaryInput {
            k_x: 1.0,
            k_y: 1.0,
            theta_op: 0.0,
            gamma1: 1.0,
            gamma2: 2.0,
            c_mix: 1.0,
            c1: 1.0,
            c2: 1.0,
            lambda_min: 1.0,
            s: 2,
            p: 10,
            q: 10,
            t: 1000,
        }
    }

    #[test]
    fn subweibull_corollary() {
        let c = corollary_subweibull(&sw_input()).unwrap();
        assert!((c.k - 8.0).abs() < 1e-12);
        assert!((c.gamma - 0.5).abs() < 1e-15);
        assert!(c.gamma_below_one);
        assert!((c.lambda - 4.0 * 8.0 * (100f64.ln() / 1000.0).sqrt()).abs() < 1e-12);
        // c_tilde with K_re = 2: 1 / (108^0.5 * 2)
        assert!((c.c_tilde - 1.0 / (108f64.sqrt() * 2.0)).abs() < 1e-12);
        assert!((c.thresholds[0] - 100f64.ln().powi(3)).abs() < 1e-9);

        let mut inp = sw_input();
        inp.theta_op = 0.0;
        inp.k_x = 0.0;
        inp.k_y = 1.7;
        let c = corollary_subweibull(&inp).unwrap();
        assert!((c.k - 2.0 * 1.7 * 1.7).abs() < 1e-12);

        let mut inp = sw_input();
        inp.gamma1 = f64::INFINITY;
        let c = corollary_subweibull(&inp).unwrap();
        assert_eq!(c.gamma, 1.0);
        assert!(c.thresholds[2].is_infinite() && !c.thresholds_ok[2]);
    }

    #[test]
    fn hanson_wright_identity() {
        let q = Matrix::identity(100);
        let table = validate_hanson_wright(&q, &[0.2, 0.3, 0.5, 1.0, 5.0], 20_000, 9).unwrap();
        assert!(table.dominated());
        assert!(table.c_hat >= 0.1, "{}", table.c_hat);
        assert_eq!(table.rows[4].empirical, 0.0);
        let at_03 = table.rows[1];
        assert!(at_03.empirical <= 2.0 * (-table.c_hat * 100.0 * 0.09f64).exp());

        let scaled =
            validate_hanson_wright(&q.scale(4.0), &[0.2, 0.3, 0.5, 1.0, 5.0], 20_000, 9).unwrap();
        for (a, b) in table.rows.iter().zip(&scaled.rows) {
            assert_eq!(a.empirical, b.empirical);
        }
        assert!(matches!(
            validate_hanson_wright(&Matrix::diag(&[1.0, -1.0]).unwrap(), &[0.5], 10, 1),
            Err(Error::NotPsd(_))
        ));
    }

    #[test]
    fn hanson_wright_chi_square_oracle() {
        // Wilson-Hilferty approximation to the chi^2_100 tail
        let tail = |x: f64| {
            let k = 100.0;
            let z = ((x / k).powf(1.0 / 3.0) - (1.0 - 2.0 / (9.0 * k))) / (2.0 / (9.0 * k)).sqrt();
            0.5 * statrs::function::erf::erfc(z / 2f64.sqrt())
        };
        let table = validate_hanson_wright(&Matrix::identity(100), &[0.3], 100_000, 4).unwrap();
        let oracle = tail(130.0) + (1.0 - tail(70.0));
        assert!(
            (table.rows[0].empirical - oracle).abs() < 0.005,
            "{} vs {oracle}",
            table.rows[0].empirical
        );
    }

    fn ar_spec(a: f64) -> DgmSpec {
        DgmSpec::GaussianVar {
            lags: vec![Matrix::diag(&[a]).unwrap()],
            noise_cov: Matrix::identity(1),
        }
    }

    #[test]
    fn bernstein_iid_clt() {
        let t = 400;
        let cut = 3.0 / (t as f64).sqrt();
        let setup = BernsteinSetup::new(
            ar_spec(0.0),
            t,
            vec![cut, 1.0],
            4000,
            (f64::INFINITY, 2.0),
            1.0,
            5,
        );
        let table = validate_beta_bernstein(&setup).unwrap();
        assert!(
            table.rows[0].empirical < 0.01,
            "{}",
            table.rows[0].empirical
        );
        assert_eq!(table.rows[1].empirical, 0.0);
        assert!(table.dominated());
        assert_eq!(table.gamma, 2.0);
    }

    #[test]
    fn bernstein_ar1_fit() {
        let t = 500;
        let grid = vec![0.02, 0.05, 0.1, 0.15, 0.2, 0.3];
        let setup = BernsteinSetup::new(ar_spec(0.5), t, grid, 2000, (1.0, 2.0), 1.0, 6);
        let table = validate_beta_bernstein(&setup).unwrap();
        assert!(table.dominated());
        assert!(table.c1_hat.is_finite() && table.c2_hat.is_finite());
        let beyond = BernsteinSetup::new(
            ar_spec(0.5),
            t,
            vec![table.max_abs_mean * 1.01],
            2000,
            (1.0, 2.0),
            1.0,
            6,
        );
        assert_eq!(
            validate_beta_bernstein(&beyond).unwrap().rows[0].empirical,
            0.0
        );

        let bad = BernsteinSetup::new(
            ar_spec(0.5),
            t,
            vec![1.0 / t as f64],
            10,
            (1.0, 2.0),
            1.0,
            6,
        );
        assert!(validate_beta_bernstein(&bad).is_err());
        let short = BernsteinSetup::new(ar_spec(0.5), 4, vec![0.5], 10, (1.0, 2.0), 1.0, 6);
        assert!(validate_beta_bernstein(&short).is_err());
    }

    #[test]
    fn re_passes_on_var_sample() {
        let spec = DgmSpec::GaussianVar {
            lags: vec![Matrix::diag(&[0.5, 0.3, 0.0, 0.2, 0.4]).unwrap()],
            noise_cov: Matrix::identity(5),
        };
        let sigma = crate::dgm::stationary_covariance(&spec).unwrap();
        let alpha = 0.5 * symmetric_eigenvalues(&sigma).unwrap()[0];
        let s = simulate(&spec, 4000, 500, 7).unwrap();
        let tau = alpha * 5f64.ln() / 4000f64.sqrt();
        assert!(check_re(&s, alpha, tau, 100, &mut rng(8)).unwrap().pass());
    }
}
