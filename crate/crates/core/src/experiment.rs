//! Monte-Carlo studies of lasso error against sample size.
//!
//! A study is a grid over dimension `p`, a level (innovation shape or copy
//! probability), and sample-size multiple `m` with `T = m * ceil(s ln p)`.
//! Every replicate draws a sparse transition matrix, simulates, fits, and
//! records the Frobenius error.
//!
//! Two seeds drive a replicate. The transition matrix comes from a design
//! seed keyed by `(p, rep)`, so all levels and multiples at the same `p` and
//! replicate index share it and differ only in the simulated data. The data
//! come from a seed keyed by `(cell, rep)`, unique to each cell. Both are
//! derived from the root seed, so results do not depend on scheduling.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dgm::{
    generate_sparse_stable, simulate_with_rng, CoefficientMatrix, DgmSpec, DEFAULT_BURN_IN,
};
use crate::error::{Error, Result};
use crate::lasso::{estimate_errors, fit, lambda_oracle, lambda_theory, LassoConfig};
use crate::matops::Matrix;
use crate::seed::derive_seed;
use crate::tails::InnovationSpec;

pub const CSV_HEADER: &str =
    "study,p,s,T,m,shape_or_rho,rep,seed,lambda,frob_error,pred_error,fit_sweeps,wall_ms";
pub const SIGNIFICANT_DIGITS: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Study {
    /// Subweibull VAR(1) with centered Weibull innovations; level = shape.
    HeavyTail,
    /// Copy-with-probability-rho regression; level = rho.
    Dependence,
    /// Gaussian VAR(1); no level (reported as 0).
    RescaledAlignment,
}

impl Study {
    pub fn as_str(&self) -> &'static str {
        match self {
            Study::HeavyTail => "heavy_tail",
            Study::Dependence => "dependence",
            Study::RescaledAlignment => "rescaled_alignment",
        }
    }
}

impl fmt::Display for Study {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Study {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "heavy_tail" | "heavy-tail" => Ok(Study::HeavyTail),
            "dependence" => Ok(Study::Dependence),
            "rescaled_alignment" | "alignment" => Ok(Study::RescaledAlignment),
            other => Err(Error::Parse(format!("unknown study {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum LambdaPolicy {
    /// `4 (1/T)|X'W|_inf` with the known `Theta*`.
    Oracle,
    /// `c_lambda sqrt(log(p^2)/T)`.
    Theory {
        c_lambda: f64,
    },
    Fixed {
        lambda: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SparsityRule {
    /// `s = floor(sqrt(p))`.
    Sqrt,
    /// `s = p`.
    Linear,
}

impl SparsityRule {
    pub fn sparsity(&self, p: usize) -> usize {
        match self {
            SparsityRule::Sqrt => p.isqrt(),
            SparsityRule::Linear => p,
        }
    }
}

/// `ceil(s ln p)`, the unit of sample size.
pub fn sample_unit(p: usize, s: usize) -> usize {
    (s as f64 * (p as f64).ln()).ceil() as usize
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentGrid {
    pub study: Study,
    pub p_list: Vec<usize>,
    /// Innovation shapes (heavy-tail study).
    pub shape_list: Vec<f64>,
    /// Copy probabilities (dependence study).
    pub rho_list: Vec<f64>,
    /// Innovation shape used by the dependence study.
    pub shape: f64,
    pub m_multiples: Vec<usize>,
    pub reps: usize,
    pub root_seed: u64,
    /// Spectral radius of the generated transition matrices.
    pub spectral_c: f64,
    /// Innovation multiplier `c` in `X_{t+1} = A X_t + c eps_t`.
    pub noise_scale: f64,
    pub sparsity: SparsityRule,
    pub burn_in: usize,
    pub lambda_policy: LambdaPolicy,
}

/// Partial grid as read from a config file; missing keys keep the defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub study: Option<Study>,
    /// Start from the full-size protocol instead of the desk-scale one.
    pub full_scale: Option<bool>,
    pub p_list: Option<Vec<usize>>,
    pub shape_list: Option<Vec<f64>>,
    pub rho_list: Option<Vec<f64>>,
    pub shape: Option<f64>,
    pub m_multiples: Option<Vec<usize>>,
    pub reps: Option<usize>,
    pub root_seed: Option<u64>,
    pub spectral_c: Option<f64>,
    pub noise_scale: Option<f64>,
    pub sparsity: Option<SparsityRule>,
    pub burn_in: Option<usize>,
    pub lambda_policy: Option<LambdaPolicy>,
}

impl GridConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }
}

impl ExperimentGrid {
    /// Desk-scale defaults: `p in {20, 40}`, 5 replicates. With `full_scale`
    /// the heavy-tail and dependence studies use `p in {50, 100, 150, 200}`
    /// and 10 replicates.
    pub fn defaults(study: Study, full_scale: bool) -> Self {
        let p_list = match (study, full_scale) {
            (Study::RescaledAlignment, false) => vec![20, 40, 80],
            (Study::RescaledAlignment, true) => vec![20, 40, 80, 160],
            (_, false) => vec![20, 40],
            (_, true) => vec![50, 100, 150, 200],
        };
        Self {
            study,
            p_list,
            shape_list: vec![0.4, 0.5, 1.0, 1.9],
            rho_list: vec![0.2, 0.4, 0.6, 0.8],
            shape: 1.0,
            m_multiples: (1..=19).step_by(2).collect(),
            reps: if full_scale { 10 } else { 5 },
            root_seed: 20_190_101,
            spectral_c: 0.5,
            noise_scale: 0.5,
            sparsity: SparsityRule::Sqrt,
            burn_in: DEFAULT_BURN_IN,
            lambda_policy: LambdaPolicy::Oracle,
        }
    }

    /// Defaults for `study` overridden by the keys present in `config`.
    pub fn from_config(study: Study, config: &GridConfig) -> Result<Self> {
        if let Some(s) = config.study {
            if s != study {
                return Err(Error::param(format!(
                    "config is for study {s}, not {study}"
                )));
            }
        }
        let mut g = Self::defaults(study, config.full_scale.unwrap_or(false));
        let c = config.clone();
        g.p_list = c.p_list.unwrap_or(g.p_list);
        g.shape_list = c.shape_list.unwrap_or(g.shape_list);
        g.rho_list = c.rho_list.unwrap_or(g.rho_list);
        g.shape = c.shape.unwrap_or(g.shape);
        g.m_multiples = c.m_multiples.unwrap_or(g.m_multiples);
        g.reps = c.reps.unwrap_or(g.reps);
        g.root_seed = c.root_seed.unwrap_or(g.root_seed);
        g.spectral_c = c.spectral_c.unwrap_or(g.spectral_c);
        g.noise_scale = c.noise_scale.unwrap_or(g.noise_scale);
        g.sparsity = c.sparsity.unwrap_or(g.sparsity);
        g.burn_in = c.burn_in.unwrap_or(g.burn_in);
        g.lambda_policy = c.lambda_policy.unwrap_or(g.lambda_policy);
        g.validate()?;
        Ok(g)
    }

    pub fn from_toml(study: Study, text: &str) -> Result<Self> {
        Self::from_config(study, &GridConfig::from_toml(text)?)
    }

    pub fn load(study: Study, path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml(study, &std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse(e.to_string()))
    }

    /// Grid-wide checks. Per-cell problems (such as an invalid shape) are
    /// reported as skipped cells instead.
    pub fn validate(&self) -> Result<()> {
        if self.p_list.is_empty() || self.m_multiples.is_empty() || self.levels().is_empty() {
            return Err(Error::param(
                "p_list, m_multiples and the level list must be nonempty",
            ));
        }
        if self.reps == 0 {
            return Err(Error::param("reps must be >= 1"));
        }
        if !(self.spectral_c > 0.0 && self.spectral_c < 1.0) {
            return Err(Error::param(format!(
                "spectral_c must lie in (0,1), got {}",
                self.spectral_c
            )));
        }
        if !(self.noise_scale > 0.0 && self.noise_scale.is_finite()) {
            return Err(Error::param("noise_scale must be > 0"));
        }
        match self.lambda_policy {
            LambdaPolicy::Theory { c_lambda } if !(c_lambda > 0.0) => {
                Err(Error::param("c_lambda must be > 0"))
            }
            LambdaPolicy::Fixed { lambda } if !(lambda >= 0.0) => {
                Err(Error::param("lambda must be >= 0"))
            }
            _ => Ok(()),
        }
    }

    /// The per-study level values written to `shape_or_rho`.
    pub fn levels(&self) -> Vec<f64> {
        match self.study {
            Study::HeavyTail => self.shape_list.clone(),
            Study::Dependence => self.rho_list.clone(),
            Study::RescaledAlignment => vec![0.0],
        }
    }

    /// Grid cells in canonical order: `p`, then level, then `m`.
    pub fn cells(&self) -> Vec<Cell> {
        let levels = self.levels();
        let mut out = Vec::new();
        for &p in &self.p_list {
            for &level in &levels {
                for &m in &self.m_multiples {
                    let s = self.sparsity.sparsity(p);
                    out.push(Cell {
                        index: out.len(),
                        study: self.study,
                        p,
                        s,
                        t: m * sample_unit(p, s),
                        m,
                        level,
                        shape: match self.study {
                            Study::HeavyTail => level,
                            _ => self.shape,
                        },
                        spectral_c: self.spectral_c,
                        noise_scale: self.noise_scale,
                        burn_in: self.burn_in,
                        lambda_policy: self.lambda_policy,
                    });
                }
            }
        }
        out
    }
}

/// One grid point, fully specified.
#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub index: usize,
    pub study: Study,
    pub p: usize,
    pub s: usize,
    pub t: usize,
    pub m: usize,
    pub level: f64,
    /// Innovation shape (Weibull studies).
    pub shape: f64,
    pub spectral_c: f64,
    pub noise_scale: f64,
    pub burn_in: usize,
    pub lambda_policy: LambdaPolicy,
}

impl Cell {
    /// Data-generating spec around a drawn transition matrix `a`.
    pub fn spec(&self, a: &Matrix) -> DgmSpec {
        let c = self.noise_scale;
        match self.study {
            Study::HeavyTail => DgmSpec::SubweibullVar {
                lags: vec![a.clone()],
                noise_scale: c,
                innovation: InnovationSpec::centered_weibull(self.p, self.shape),
            },
            Study::Dependence => DgmSpec::CopyDependence {
                coef: a.clone(),
                noise_scale: c,
                rho: self.level,
                innovation: InnovationSpec::centered_weibull(self.p, self.shape),
            },
            Study::RescaledAlignment => DgmSpec::GaussianVar {
                lags: vec![a.clone()],
                noise_cov: Matrix::identity(self.p).scale(c * c),
            },
        }
    }

    fn burn_in(&self) -> usize {
        // the copy process starts in its stationary law
        match self.study {
            Study::Dependence => 0,
            _ => self.burn_in,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentRow {
    pub study: Study,
    pub p: usize,
    pub s: usize,
    pub t: usize,
    pub m: usize,
    pub shape_or_rho: f64,
    pub rep: usize,
    pub seed: u64,
    pub lambda: f64,
    pub frob_error: f64,
    pub pred_error: f64,
    pub fit_sweeps: usize,
    pub wall_ms: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SkippedCell {
    pub cell: usize,
    pub p: usize,
    pub m: usize,
    pub shape_or_rho: f64,
    pub rep: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExperimentResult {
    pub rows: Vec<ExperimentRow>,
    pub skipped: Vec<SkippedCell>,
}

/// Fitted outcome of one replicate, with the truth for further checks.
#[derive(Debug, Clone)]
pub struct Replicate {
    pub row: ExperimentRow,
    pub theta_star: CoefficientMatrix,
    pub theta_hat: CoefficientMatrix,
    pub converged: bool,
}

/// Seeds of one replicate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReplicateSeeds {
    /// Drives the transition-matrix draw.
    pub design: u64,
    /// Drives the simulated data; reported in the `seed` column.
    pub data: u64,
}

impl ReplicateSeeds {
    /// Design stream keyed by `(p, rep)`, data stream keyed by `(cell, rep)`.
    pub fn derive(root: u64, p: usize, cell: usize, rep: usize) -> Self {
        // design streams live at the top of the index space, away from cells
        Self {
            design: derive_seed(root, u64::MAX - p as u64, rep as u64),
            data: derive_seed(root, cell as u64, rep as u64),
        }
    }
}

/// Draws `A`, simulates the cell's process, fits the lasso and scores it.
pub fn run_replicate(cell: &Cell, rep: usize, seeds: ReplicateSeeds) -> Result<Replicate> {
    let start = Instant::now();
    if cell.p == 0 || cell.t == 0 {
        return Err(Error::param(format!(
            "empty cell: p = {}, T = {}",
            cell.p, cell.t
        )));
    }
    let mut design = ChaCha8Rng::seed_from_u64(seeds.design);
    let a = generate_sparse_stable(cell.p, cell.s, cell.spectral_c, &mut design)?;
    let spec = cell.spec(a.values());
    let mut rng = ChaCha8Rng::seed_from_u64(seeds.data);
    let sample = simulate_with_rng(&spec, cell.t, cell.burn_in(), &mut rng)?;
    let theta_star = a.transpose();
    let lambda = match cell.lambda_policy {
        LambdaPolicy::Oracle => lambda_oracle(&sample, &theta_star)?,
        LambdaPolicy::Theory { c_lambda } => lambda_theory(cell.p, cell.p, cell.t, c_lambda)?,
        LambdaPolicy::Fixed { lambda } => lambda,
    };
    let lasso = fit(&sample, &LassoConfig::new(lambda))?;
    let report = estimate_errors(lasso.theta_hat.values(), theta_star.values(), &sample.x)?;
    let row = ExperimentRow {
        study: cell.study,
        p: cell.p,
        s: cell.s,
        t: cell.t,
        m: cell.m,
        shape_or_rho: cell.level,
        rep,
        seed: seeds.data,
        lambda,
        frob_error: report.frobenius_error(),
        pred_error: report.in_sample_pred_error(),
        fit_sweeps: lasso.sweeps_used,
        wall_ms: start.elapsed().as_millis() as u64,
    };
    Ok(Replicate {
        row,
        theta_star,
        theta_hat: lasso.theta_hat,
        converged: lasso.converged,
    })
}

/// Runs every (cell, replicate) on the current rayon pool. Failing cells are
/// collected in `skipped` and the run continues.
pub fn run_experiment(grid: &ExperimentGrid) -> Result<ExperimentResult> {
    grid.validate()?;
    let tasks: Vec<(Cell, usize)> = grid
        .cells()
        .into_iter()
        .flat_map(|c| (0..grid.reps).map(move |r| (c.clone(), r)))
        .collect();
    let outcomes: Vec<std::result::Result<ExperimentRow, SkippedCell>> = tasks
        .par_iter()
        .map(|(cell, rep)| {
            let seeds = ReplicateSeeds::derive(grid.root_seed, cell.p, cell.index, *rep);
            run_replicate(cell, *rep, seeds)
                .map(|r| r.row)
                .map_err(|e| SkippedCell {
                    cell: cell.index,
                    p: cell.p,
                    m: cell.m,
                    shape_or_rho: cell.level,
                    rep: *rep,
                    reason: e.to_string(),
                })
        })
        .collect();
    let mut result = ExperimentResult::default();
    for o in outcomes {
        match o {
            Ok(row) => result.rows.push(row),
            Err(skip) => result.skipped.push(skip),
        }
    }
    Ok(result)
}

/// Same as [`run_experiment`] on a dedicated pool of `jobs` threads.
pub fn run_experiment_with_jobs(
    grid: &ExperimentGrid,
    jobs: Option<usize>,
) -> Result<ExperimentResult> {
    match jobs {
        None => run_experiment(grid),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| Error::param(e.to_string()))?
            .install(|| run_experiment(grid)),
    }
}

/// Gaussian VAR(1) study with oracle lambda for checking that error curves
/// against `T / (s log p)` line up across `p`.
pub fn run_alignment_study(
    p_list: &[usize],
    m_multiples: &[usize],
    reps: usize,
    root_seed: u64,
) -> Result<ExperimentResult> {
    let mut grid = ExperimentGrid::defaults(Study::RescaledAlignment, false);
    grid.p_list = p_list.to_vec();
    grid.m_multiples = m_multiples.to_vec();
    grid.reps = reps;
    grid.root_seed = root_seed;
    run_experiment(&grid)
}

/// Decimal rendering with `digits` significant digits, trailing zeros removed.
pub fn format_significant(v: f64, digits: usize) -> String {
    if v == 0.0 || !v.is_finite() {
        return if v == 0.0 { "0".into() } else { v.to_string() };
    }
    // round in scientific form first so the exponent reflects any carry
    let sci = format!("{:.*e}", digits.saturating_sub(1), v);
    let exp: i32 = sci
        .split('e')
        .nth(1)
        .and_then(|e| e.parse().ok())
        .unwrap_or(0);
    let rounded: f64 = sci.parse().unwrap_or(v);
    let decimals = (digits as i32 - 1 - exp).max(0) as usize;
    let mut s = format!("{rounded:.decimals$}");
    if s.contains('.') {
        s = s.trim_end_matches('0').trim_end_matches('.').to_string();
    }
    s
}

fn fmt12(v: f64) -> String {
    format_significant(v, SIGNIFICANT_DIGITS)
}

impl ExperimentRow {
    fn record(&self) -> Vec<String> {
        vec![
            self.study.to_string(),
            self.p.to_string(),
            self.s.to_string(),
            self.t.to_string(),
            self.m.to_string(),
            fmt12(self.shape_or_rho),
            self.rep.to_string(),
            self.seed.to_string(),
            fmt12(self.lambda),
            fmt12(self.frob_error),
            fmt12(self.pred_error),
            self.fit_sweeps.to_string(),
            self.wall_ms.to_string(),
        ]
    }
}

pub fn write_csv<W: Write>(result: &ExperimentResult, w: W) -> Result<()> {
    let mut wr = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(w);
    wr.write_record(CSV_HEADER.split(','))?;
    for row in &result.rows {
        wr.write_record(row.record())?;
    }
    wr.flush()?;
    Ok(())
}

pub fn emit_csv(result: &ExperimentResult, path: impl AsRef<Path>) -> Result<()> {
    write_csv(result, std::fs::File::create(path)?)
}

pub fn read_csv<R: Read>(r: R) -> Result<Vec<ExperimentRow>> {
    let mut rd = csv::Reader::from_reader(r);
    let header: Vec<String> = rd.headers()?.iter().map(str::to_string).collect();
    if header.join(",") != CSV_HEADER {
        return Err(Error::Parse(format!(
            "unexpected header {:?}",
            header.join(",")
        )));
    }
    let mut rows = Vec::new();
    for (i, rec) in rd.records().enumerate() {
        let rec = rec?;
        let bad = |what: &str| Error::Parse(format!("row {}: bad {what}", i + 1));
        let int = |j: usize, what: &str| rec[j].parse::<u64>().map_err(|_| bad(what));
        let real = |j: usize, what: &str| rec[j].parse::<f64>().map_err(|_| bad(what));
        rows.push(ExperimentRow {
            study: rec[0].parse()?,
            p: int(1, "p")? as usize,
            s: int(2, "s")? as usize,
            t: int(3, "T")? as usize,
            m: int(4, "m")? as usize,
            shape_or_rho: real(5, "shape_or_rho")?,
            rep: int(6, "rep")? as usize,
            seed: int(7, "seed")?,
            lambda: real(8, "lambda")?,
            frob_error: real(9, "frob_error")?,
            pred_error: real(10, "pred_error")?,
            fit_sweeps: int(11, "fit_sweeps")? as usize,
            wall_ms: int(12, "wall_ms")?,
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum XAxis {
    /// `sqrt(s log p / T)`.
    RescaledSqrt,
    /// `T / (s log p)`.
    TOverSLogP,
}

impl XAxis {
    pub fn value(&self, row: &ExperimentRow) -> f64 {
        let unit = row.s as f64 * (row.p as f64).ln();
        match self {
            XAxis::RescaledSqrt => (unit / row.t as f64).sqrt(),
            XAxis::TOverSLogP => row.t as f64 / unit,
        }
    }

    fn label(&self) -> &'static str {
        match self {
            XAxis::RescaledSqrt => "sqrt(s log p / T)",
            XAxis::TOverSLogP => "T / (s log p)",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GroupBy {
    P,
    ShapeOrRho,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Curve {
    pub label: String,
    /// `(x, mean frob_error)` sorted by `x`.
    pub points: Vec<(f64, f64)>,
}

/// Running `(x, error sum, count)` per x bit pattern.
type XSums = BTreeMap<u64, (f64, f64, usize)>;

/// Mean Frobenius error per (group, x), averaged over replicates and any
/// dimension not grouped on.
pub fn mean_curves(rows: &[ExperimentRow], x_axis: XAxis, group_by: GroupBy) -> Vec<Curve> {
    let study = rows.first().map(|r| r.study);
    let mut groups: BTreeMap<(u64, String), XSums> = BTreeMap::new();
    for r in rows {
        let (key, label) = match group_by {
            GroupBy::P => (r.p as f64, format!("p = {}", r.p)),
            GroupBy::ShapeOrRho => {
                let name = match study {
                    Some(Study::Dependence) => "rho",
                    Some(Study::HeavyTail) => "shape",
                    _ => "level",
                };
                (
                    r.shape_or_rho,
                    format!("{name} = {}", fmt12(r.shape_or_rho)),
                )
            }
        };
        let x = x_axis.value(r);
        let e = groups
            .entry((key.to_bits(), label))
            .or_default()
            .entry(x.to_bits())
            .or_insert((x, 0.0, 0));
        e.1 += r.frob_error;
        e.2 += 1;
    }
    let mut curves: Vec<(f64, Curve)> = groups
        .into_iter()
        .map(|((key, label), pts)| {
            let mut points: Vec<(f64, f64)> = pts
                .into_values()
                .map(|(x, sum, n)| (x, sum / n as f64))
                .collect();
            points.sort_by(|a, b| a.0.total_cmp(&b.0));
            (f64::from_bits(key), Curve { label, points })
        })
        .collect();
    curves.sort_by(|a, b| a.0.total_cmp(&b.0));
    curves.into_iter().map(|(_, c)| c).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlignmentGap {
    /// Largest spread between curves at a shared grid point.
    pub max_gap: f64,
    /// Max minus min over all curve points.
    pub range: f64,
    pub ratio: f64,
    pub grid_points: usize,
}

fn interpolate(points: &[(f64, f64)], x: f64) -> f64 {
    let i = points.partition_point(|p| p.0 < x);
    if i == 0 {
        return points[0].1;
    }
    if i == points.len() {
        return points[i - 1].1;
    }
    let (x0, y0) = points[i - 1];
    let (x1, y1) = points[i];
    if x1 == x0 {
        y1
    } else {
        y0 + (y1 - y0) * (x - x0) / (x1 - x0)
    }
}

/// Spread of the curves on the union of their x-values inside the common
/// x-range, with linear interpolation between each curve's own points.
pub fn alignment_gap(curves: &[Curve]) -> Result<AlignmentGap> {
    if curves.len() < 2 || curves.iter().any(|c| c.points.is_empty()) {
        return Err(Error::param("need at least two nonempty curves"));
    }
    let lo = curves
        .iter()
        .map(|c| c.points[0].0)
        .fold(f64::NEG_INFINITY, f64::max);
    let hi = curves
        .iter()
        .map(|c| c.points[c.points.len() - 1].0)
        .fold(f64::INFINITY, f64::min);
    if lo > hi {
        return Err(Error::param("curves share no x-range"));
    }
    let mut grid: Vec<f64> = curves
        .iter()
        .flat_map(|c| c.points.iter().map(|p| p.0))
        .filter(|&x| x >= lo && x <= hi)
        .collect();
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    let mut max_gap: f64 = 0.0;
    for &x in &grid {
        let vals: Vec<f64> = curves.iter().map(|c| interpolate(&c.points, x)).collect();
        let spread = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
            - vals.iter().cloned().fold(f64::INFINITY, f64::min);
        max_gap = max_gap.max(spread);
    }
    let all = curves.iter().flat_map(|c| c.points.iter().map(|p| p.1));
    let (min, max) = all.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), y| {
        (a.min(y), b.max(y))
    });
    let range = max - min;
    Ok(AlignmentGap {
        max_gap,
        range,
        ratio: if range > 0.0 { max_gap / range } else { 0.0 },
        grid_points: grid.len(),
    })
}

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];
const WIDTH: f64 = 760.0;
const HEIGHT: f64 = 500.0;
const MARGIN: (f64, f64, f64, f64) = (70.0, 170.0, 50.0, 60.0); // left, right, top, bottom

fn padded(lo: f64, hi: f64) -> (f64, f64) {
    if hi > lo {
        let pad = 0.05 * (hi - lo);
        (lo - pad, hi + pad)
    } else {
        let pad = if lo == 0.0 { 1.0 } else { 0.1 * lo.abs() };
        (lo - pad, hi + pad)
    }
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

/// Standalone SVG line chart of mean Frobenius error per group.
pub fn render_svg(rows: &[ExperimentRow], x_axis: XAxis, group_by: GroupBy) -> Result<String> {
    if rows.is_empty() {
        return Err(Error::param("cannot plot an empty result"));
    }
    let curves = mean_curves(rows, x_axis, group_by);
    let pts = curves.iter().flat_map(|c| c.points.iter());
    let (xmin, xmax, ymin, ymax) = pts.fold(
        (
            f64::INFINITY,
            f64::NEG_INFINITY,
            f64::INFINITY,
            f64::NEG_INFINITY,
        ),
        |(a, b, c, d), &(x, y)| (a.min(x), b.max(x), c.min(y), d.max(y)),
    );
    let (x0, x1) = padded(xmin, xmax);
    let (y0, y1) = padded(ymin.min(0.0), ymax);
    let (ml, mr, mt, mb) = MARGIN;
    let pw = WIDTH - ml - mr;
    let ph = HEIGHT - mt - mb;
    let sx = |x: f64| ml + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| mt + ph - (y - y0) / (y1 - y0) * ph;

    let mut svg = String::new();
    let mut line = |s: String| {
        svg.push_str(&s);
        svg.push('\n');
    };
    line(format!(
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    ));
    line(format!(
        r#"<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#
    ));
    line(format!(
        r##"<rect x="{ml}" y="{mt}" width="{pw}" height="{ph}" fill="none" stroke="#444" stroke-width="1"/>"##
    ));
    for i in 0..=5 {
        let fx = x0 + (x1 - x0) * i as f64 / 5.0;
        let fy = y0 + (y1 - y0) * i as f64 / 5.0;
        let (px, py) = (sx(fx), sy(fy));
        line(format!(
            r##"<line x1="{px:.2}" y1="{:.2}" x2="{px:.2}" y2="{:.2}" stroke="#444"/>"##,
            mt + ph,
            mt + ph + 5.0
        ));
        line(format!(
            r#"<text x="{px:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            mt + ph + 20.0,
            format_significant(fx, 3)
        ));
        line(format!(
            r##"<line x1="{:.2}" y1="{py:.2}" x2="{ml}" y2="{py:.2}" stroke="#444"/>"##,
            ml - 5.0
        ));
        line(format!(
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            ml - 8.0,
            py + 4.0,
            format_significant(fy, 3)
        ));
    }
    line(format!(
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
        ml + pw / 2.0,
        HEIGHT - 15.0,
        x_axis.label()
    ));
    line(format!(
        r#"<text x="18" y="{:.2}" text-anchor="middle" transform="rotate(-90 18 {:.2})">mean Frobenius error</text>"#,
        mt + ph / 2.0,
        mt + ph / 2.0
    ));
    line(format!(
        r#"<text x="{:.2}" y="28" text-anchor="middle" font-size="15">{}</text>"#,
        ml + pw / 2.0,
        rows[0].study
    ));
    for (i, c) in curves.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let coords: Vec<String> = c
            .points
            .iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
            .collect();
        if coords.len() > 1 {
            line(format!(
                r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
                coords.join(" ")
            ));
        }
        for &(x, y) in &c.points {
            line(format!(
                r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}"/>"#,
                sx(x),
                sy(y)
            ));
        }
        let ly = mt + 10.0 + 20.0 * i as f64;
        let lx = WIDTH - mr + 15.0;
        line(format!(
            r#"<rect x="{lx:.2}" y="{:.2}" width="14" height="4" fill="{color}"/>"#,
            ly - 2.0
        ));
        line(format!(
            r#"<text x="{:.2}" y="{:.2}">{}</text>"#,
            lx + 20.0,
            ly + 4.0,
            xml_escape(&c.label)
        ));
    }
    line("</svg>".to_string());
    Ok(svg)
}

pub fn emit_figure(
    result: &ExperimentResult,
    x_axis: XAxis,
    group_by: GroupBy,
    path: impl AsRef<Path>,
) -> Result<()> {
    std::fs::write(path, render_svg(&result.rows, x_axis, group_by)?)?;
    Ok(())
}
