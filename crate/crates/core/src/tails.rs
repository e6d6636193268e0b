//! Innovation samplers and subweibull calculus.
//!
//! Three innovation families are supported: correlated Gaussian, isotropic
//! uniform on `[-sqrt 3, sqrt 3]^p` and iid centered Weibull. The remaining
//! functions compute the subweibull quantities that enter the
//! concentration-based lasso guarantees: the composed exponent, a plug-in
//! estimate of the `psi_gamma` norm and the norm bounds for squares and
//! linear maps.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma as gamma_fn;

use crate::error::{Error, Result};
use crate::matops::{cholesky, symmetric_eigenvalues, Matrix};

/// Minimum sample size accepted by [`estimate_subweibull_norm`].
pub const MIN_NORM_SAMPLES: usize = 100;
pub const DEFAULT_P_MAX: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InnovationKind {
    /// `N(0, cov)`.
    Gaussian { cov: Matrix },
    /// Each coordinate `U(-sqrt 3, sqrt 3)`: mean zero, unit variance.
    UniformIsotropic,
    /// Each coordinate `Weibull(shape, 1) - Gamma(1 + 1/shape)`.
    CenteredWeibull { shape: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InnovationSpec {
    pub dim: usize,
    #[serde(flatten)]
    pub kind: InnovationKind,
}

impl InnovationSpec {
    pub fn gaussian(cov: Matrix) -> Self {
        Self {
            dim: cov.rows(),
            kind: InnovationKind::Gaussian { cov },
        }
    }

    pub fn standard_gaussian(dim: usize) -> Self {
        Self::gaussian(Matrix::identity(dim))
    }

    pub fn uniform(dim: usize) -> Self {
        Self {
            dim,
            kind: InnovationKind::UniformIsotropic,
        }
    }

    pub fn centered_weibull(dim: usize, shape: f64) -> Self {
        Self {
            dim,
            kind: InnovationKind::CenteredWeibull { shape },
        }
    }

    pub fn validate(&self) -> Result<()> {
        match &self.kind {
            InnovationKind::Gaussian { cov } => {
                if cov.shape() != (self.dim, self.dim) {
                    return Err(Error::DimensionMismatch {
                        expected: (self.dim, self.dim),
                        got: cov.shape(),
                    });
                }
                let ev = symmetric_eigenvalues(cov)?;
                if ev.first().is_some_and(|&l| l <= 0.0) {
                    return Err(Error::NotPositiveDefinite);
                }
                Ok(())
            }
            InnovationKind::UniformIsotropic => Ok(()),
            InnovationKind::CenteredWeibull { shape } => {
                if *shape > 0.0 && shape.is_finite() {
                    Ok(())
                } else {
                    Err(Error::param(format!(
                        "weibull shape must be > 0, got {shape}"
                    )))
                }
            }
        }
    }

    /// Per-coordinate variance for the isotropic families; the diagonal of
    /// the covariance for the Gaussian case.
    pub fn coordinate_variance(&self, i: usize) -> f64 {
        match &self.kind {
            InnovationKind::Gaussian { cov } => cov[(i, i)],
            InnovationKind::UniformIsotropic => 1.0,
            InnovationKind::CenteredWeibull { shape } => weibull_variance(*shape),
        }
    }
}

/// Mean of `Weibull(shape, 1)`.
pub fn weibull_mean(shape: f64) -> f64 {
    gamma_fn(1.0 + 1.0 / shape)
}

/// Variance of `Weibull(shape, 1)`.
pub fn weibull_variance(shape: f64) -> f64 {
    let m = weibull_mean(shape);
    gamma_fn(1.0 + 2.0 / shape) - m * m
}

/// Validated sampler with the Gaussian factor and Weibull mean precomputed.
#[derive(Debug, Clone)]
pub struct InnovationSampler {
    dim: usize,
    mode: SamplerMode,
}

#[derive(Debug, Clone)]
enum SamplerMode {
    Gaussian { chol: Matrix },
    Uniform,
    Weibull { inv_shape: f64, mean: f64 },
}

impl InnovationSampler {
    pub fn new(spec: &InnovationSpec) -> Result<Self> {
        spec.validate()?;
        let mode = match &spec.kind {
            InnovationKind::Gaussian { cov } => SamplerMode::Gaussian {
                chol: cholesky(cov)?,
            },
            InnovationKind::UniformIsotropic => SamplerMode::Uniform,
            InnovationKind::CenteredWeibull { shape } => SamplerMode::Weibull {
                inv_shape: 1.0 / shape,
                mean: weibull_mean(*shape),
            },
        };
        Ok(Self {
            dim: spec.dim,
            mode,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Writes one draw into `out` (length `dim`).
    pub fn fill<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.dim);
        match &self.mode {
            SamplerMode::Gaussian { chol } => {
                let z: Vec<f64> = (0..self.dim).map(|_| rng.sample(StandardNormal)).collect();
                for (i, o) in out.iter_mut().enumerate() {
                    *o = chol.row(i)[..=i].iter().zip(&z).map(|(l, z)| l * z).sum();
                }
            }
            SamplerMode::Uniform => {
                let h = 3f64.sqrt();
                out.iter_mut().for_each(|o| *o = rng.random_range(-h..h));
            }
            SamplerMode::Weibull { inv_shape, mean } => {
                for o in out.iter_mut() {
                    // inverse CDF; 1 - u lies in (0, 1]
                    let u: f64 = rng.random();
                    *o = (-(1.0 - u).ln()).powf(*inv_shape) - mean;
                }
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.fill(rng, &mut out);
        out
    }
}

/// One mean-zero innovation draw.
pub fn sample_innovation<R: Rng + ?Sized>(spec: &InnovationSpec, rng: &mut R) -> Result<Vec<f64>> {
    Ok(InnovationSampler::new(spec)?.sample(rng))
}

/// Exponents of a subweibull, geometrically mixing process.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComposedGamma {
    /// `(1/gamma1 + 2/gamma2)^-1`, the exponent governing products and squares.
    pub gamma: f64,
    /// `(1/gamma1 + 1/gamma2)^-1`, the exponent in the Bernstein-type bound
    /// for sums of the variables themselves.
    pub gamma_sum: f64,
}

pub fn compose_gamma(gamma1: f64, gamma2: f64) -> Result<ComposedGamma> {
    if !(gamma1 > 0.0 && gamma2 > 0.0) {
        return Err(Error::param(format!(
            "gamma1 and gamma2 must be positive, got ({gamma1}, {gamma2})"
        )));
    }
    Ok(ComposedGamma {
        gamma: 1.0 / (1.0 / gamma1 + 2.0 / gamma2),
        gamma_sum: 1.0 / (1.0 / gamma1 + 1.0 / gamma2),
    })
}

/// Tail/dependence description of a process.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubweibullProfile {
    pub gamma1: f64,
    pub gamma2: f64,
    pub gamma: f64,
    pub k_x: f64,
    pub k_y: f64,
    /// Whether `gamma < 1`; recorded, not enforced.
    pub gamma_below_one: bool,
}

impl SubweibullProfile {
    pub fn new(gamma1: f64, gamma2: f64, k_x: f64, k_y: f64) -> Result<Self> {
        if !(k_x > 0.0 && k_y > 0.0) {
            return Err(Error::param("norm bounds must be positive"));
        }
        let g = compose_gamma(gamma1, gamma2)?.gamma;
        Ok(Self {
            gamma1,
            gamma2,
            gamma: g,
            k_x,
            k_y,
            gamma_below_one: g < 1.0,
        })
    }
}

/// Plug-in estimate of `sup_p p^(-1/gamma) (E|X|^p)^(1/p)` restricted to
/// integer `p` in `[1, p_max]`, with empirical moments.
///
/// Both truncating the supremum and using sample moments bias the result
/// downward, the latter strongly so for heavy tails.
pub fn estimate_subweibull_norm(samples: &[f64], gamma: f64, p_max: usize) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::param("empty sample"));
    }
    if samples.len() < MIN_NORM_SAMPLES {
        return Err(Error::param(format!(
            "need at least {MIN_NORM_SAMPLES} samples, got {}",
            samples.len()
        )));
    }
    if !(gamma > 0.0) {
        return Err(Error::param(format!("gamma must be positive, got {gamma}")));
    }
    if p_max < 2 {
        return Err(Error::param("p_max must be at least 2"));
    }
    if samples.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("samples"));
    }
    // Moments of |x| / max|x| stay in [0, 1] for any p.
    let scale = samples.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    if scale == 0.0 {
        return Ok(0.0);
    }
    let n = samples.len() as f64;
    let best = (1..=p_max)
        .map(|p| {
            let pf = p as f64;
            let moment = samples
                .iter()
                .map(|x| (x.abs() / scale).powi(p as i32))
                .sum::<f64>()
                / n;
            moment.powf(1.0 / pf) * pf.powf(-1.0 / gamma)
        })
        .fold(0.0_f64, f64::max);
    Ok(best * scale)
}

/// `||X^2||_{psi_gamma} <= 2^(1/gamma) ||X||_{psi_{2 gamma}}^2`.
pub fn square_norm_bound(norm_2gamma: f64, gamma: f64) -> f64 {
    2f64.powf(1.0 / gamma) * norm_2gamma * norm_2gamma
}

/// `||A X||_{psi_gamma} <= |||A||| ||X||_{psi_gamma}`.
pub fn linear_map_norm_bound(op_norm: f64, vec_norm: f64) -> f64 {
    op_norm * vec_norm
}
