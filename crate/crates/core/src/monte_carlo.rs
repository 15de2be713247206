//! Replicated OLS experiments.
//!
//! Replication `r` of an experiment draws its design and errors from stream
//! `(seed, r)`, so sweeps that share a seed reuse the same innovations
//! (common random numbers) and results are identical at any thread count.
//! Replications with a rank-deficient design or a numerically zero residual
//! variance are discarded and counted rather than redrawn, which keeps every
//! other replication on its own stream.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::asymptotics::EmpiricalPower;
use crate::error::{Error, Result};
use crate::linalg::{ols_fit, t_statistic, RegressionFit};
use crate::rng::RngStream;
use crate::sampling::{Design, DesignSpec, ErrorModel, ErrorSpec};

pub const MIN_REPS: usize = 100;
/// Discard fraction above which a result is flagged.
pub const DISCARD_FLAG_RATIO: f64 = 0.001;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sidedness {
    TwoSided,
    RightSided,
}

impl Sidedness {
    pub fn rejects(self, t: f64, critical_value: f64) -> bool {
        match self {
            Sidedness::TwoSided => t.abs() > critical_value,
            Sidedness::RightSided => t > critical_value,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestSpec {
    pub coef_index: usize,
    pub level: f64,
    pub critical_value: f64,
    pub sidedness: Sidedness,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub n: usize,
    pub reps: usize,
    pub seed: u64,
    pub design: DesignSpec,
    pub error: ErrorSpec,
    pub beta_true: Vec<f64>,
    pub test: TestSpec,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::ConfigInvalid(msg));
        let d = self.design.d();
        if self.reps < MIN_REPS {
            return bad(format!("reps must be at least {MIN_REPS}, got {}", self.reps));
        }
        if d == 0 {
            return bad("design needs at least one column".into());
        }
        if self.n <= d {
            return bad(format!("n must exceed the number of columns ({d}), got {}", self.n));
        }
        if self.beta_true.len() != d {
            return bad(format!("beta_true has length {} but the design has {d} columns", self.beta_true.len()));
        }
        if self.test.coef_index >= d {
            return bad(format!("coef_index {} out of range for {d} columns", self.test.coef_index));
        }
        if !(self.test.level > 0.0 && self.test.level < 1.0) {
            return bad(format!("level must lie in (0, 1), got {}", self.test.level));
        }
        if !(self.test.critical_value > 0.0 && self.test.critical_value.is_finite()) {
            return bad(format!("critical_value must be positive, got {}", self.test.critical_value));
        }
        if !(self.error.sigma > 0.0 && self.error.sigma.is_finite()) {
            return bad(format!("sigma must be positive, got {}", self.error.sigma));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultMetadata {
    pub config: ExperimentConfig,
    pub version: String,
}

impl ResultMetadata {
    fn new(config: &ExperimentConfig) -> Self {
        let version = match option_env!("ROBUST_OLS_GIT_HASH") {
            Some(hash) => format!("{}+{hash}", env!("CARGO_PKG_VERSION")),
            None => env!("CARGO_PKG_VERSION").to_string(),
        };
        Self { config: config.clone(), version }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub estimate: f64,
    pub mc_std_error: f64,
    pub discarded: usize,
    pub effective_reps: usize,
    /// Too many discarded replications for the estimate to be trusted.
    pub flagged: bool,
    pub metadata: ResultMetadata,
}

impl ExperimentResult {
    fn from_counts(hits: usize, discarded: usize, config: &ExperimentConfig) -> Self {
        let effective_reps = config.reps - discarded;
        let (estimate, mc_std_error) = rate_with_error(hits, effective_reps);
        Self {
            estimate,
            mc_std_error,
            discarded,
            effective_reps,
            flagged: discarded as f64 / config.reps as f64 >= DISCARD_FLAG_RATIO,
            metadata: ResultMetadata::new(config),
        }
    }
}

/// `p = hits / total` and `sqrt(p (1 - p) / total)`.
pub fn rate_with_error(hits: usize, total: usize) -> (f64, f64) {
    if total == 0 {
        return (f64::NAN, f64::NAN);
    }
    let p = hits as f64 / total as f64;
    (p, (p * (1.0 - p) / total as f64).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Standardization {
    /// `T_j`, scaled by the estimated standard error.
    EstimatedSe,
    /// `T'_j`, scaled by the standard error under the true `sigma`.
    TrueSe,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TstatSamples {
    pub values: Vec<f64>,
    pub discarded: usize,
}

/// One replication's data.
struct Draw {
    x: DMatrix<f64>,
    eps: DVector<f64>,
}

struct Engine<'a> {
    config: &'a ExperimentConfig,
    design: Design,
    errors: ErrorModel,
}

impl<'a> Engine<'a> {
    fn new(config: &'a ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let design = config.design.realize(config.n)?;
        let errors = config.error.build(config.n)?;
        Ok(Self { config, design, errors })
    }

    /// `None` when the design draw is rank deficient.
    fn draw(&self, r: u64) -> Option<Draw> {
        let mut rng = RngStream::new(self.config.seed, r).rng();
        let x = self.design.draw(&mut rng).ok()?;
        let eps = self.errors.draw(&mut rng).eps;
        Some(Draw { x, eps })
    }

    fn fit(draw: &Draw, beta: &[f64]) -> Option<RegressionFit> {
        let y = &draw.x * DVector::from_column_slice(beta) + &draw.eps;
        ols_fit(&draw.x, &y).ok().filter(|f| !f.degenerate)
    }

    /// Per-replication map, collected in replication order.
    fn map<T: Send>(&self, f: impl Fn(Option<Draw>) -> T + Sync) -> Vec<T> {
        (0..self.config.reps as u64).into_par_iter().map(|r| f(self.draw(r))).collect()
    }
}

fn count(outcomes: &[Option<bool>]) -> (usize, usize) {
    let discarded = outcomes.iter().filter(|o| o.is_none()).count();
    let hits = outcomes.iter().filter(|o| **o == Some(true)).count();
    (hits, discarded)
}

/// Non-coverage of `beta_hat_j +/- c L_j`, i.e. the rate of `|T_j| > c`
/// against the true coefficient.
pub fn run_coverage(config: &ExperimentConfig) -> Result<ExperimentResult> {
    let engine = Engine::new(config)?;
    let j = config.test.coef_index;
    let c = config.test.critical_value;
    let outcomes = engine.map(|draw| {
        let fit = Engine::fit(&draw?, &config.beta_true)?;
        t_statistic(&fit, j, config.beta_true[j]).ok().map(|t| t.abs() > c)
    });
    let (hits, discarded) = count(&outcomes);
    Ok(ExperimentResult::from_counts(hits, discarded, config))
}

/// `beta_j = h (sigma^2 (Sigma^{-1})_jj / (n - d))^{1/2}`.
pub fn local_alternative(h: f64, sigma: f64, sigma_mix: &DMatrix<f64>, j: usize, n: usize, d: usize) -> Result<f64> {
    let inv = sigma_mix
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::ConfigInvalid("mixing matrix is singular".into()))?;
    Ok(h * (sigma * sigma * inv[(j, j)] / (n - d) as f64).sqrt())
}

/// Right-sided rejection rate of `T_j > c` (null value 0) at each local
/// alternative in `h_grid`. All grid points share replication streams.
pub fn run_power(config: &ExperimentConfig, h_grid: &[f64], sigma_mix: &DMatrix<f64>) -> Result<EmpiricalPower> {
    let engine = Engine::new(config)?;
    if h_grid.iter().any(|h| !(*h >= 0.0)) || h_grid.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::ConfigInvalid("h_grid must be nonnegative and ascending".into()));
    }
    let d = config.design.d();
    if sigma_mix.shape() != (d, d) {
        return Err(Error::ConfigInvalid(format!("sigma_mix must be {d} x {d}")));
    }
    let j = config.test.coef_index;
    let c = config.test.critical_value;
    let betas = h_grid
        .iter()
        .map(|&h| {
            let mut beta = config.beta_true.clone();
            beta[j] = local_alternative(h, config.error.sigma, sigma_mix, j, config.n, d)?;
            Ok(beta)
        })
        .collect::<Result<Vec<_>>>()?;

    let outcomes: Vec<Vec<Option<bool>>> = engine.map(|draw| match draw {
        None => vec![None; betas.len()],
        Some(draw) => betas
            .iter()
            .map(|beta| {
                let fit = Engine::fit(&draw, beta)?;
                t_statistic(&fit, j, 0.0).ok().map(|t| t > c)
            })
            .collect(),
    });

    let mut power = Vec::with_capacity(h_grid.len());
    let mut mc_std_error = Vec::with_capacity(h_grid.len());
    let mut discarded = Vec::with_capacity(h_grid.len());
    for k in 0..h_grid.len() {
        let column: Vec<Option<bool>> = outcomes.iter().map(|o| o[k]).collect();
        let (hits, dropped) = count(&column);
        let (p, se) = rate_with_error(hits, config.reps - dropped);
        power.push(p);
        mc_std_error.push(se);
        discarded.push(dropped);
    }
    Ok(EmpiricalPower { h_grid: h_grid.to_vec(), power, mc_std_error, discarded })
}

/// The `reps` draws of `T_j` or `T'_j`, centred at the true coefficient.
pub fn run_tstat_samples(config: &ExperimentConfig, standardization: Standardization) -> Result<TstatSamples> {
    let engine = Engine::new(config)?;
    let j = config.test.coef_index;
    let beta_j = config.beta_true[j];
    let sigma = config.error.sigma;
    let draws = engine.map(|draw| {
        let fit = Engine::fit(&draw?, &config.beta_true)?;
        match standardization {
            Standardization::EstimatedSe => t_statistic(&fit, j, beta_j).ok(),
            Standardization::TrueSe => Some((fit.coefficients[j] - beta_j) / fit.true_standard_error(j, sigma)),
        }
    });
    let discarded = draws.iter().filter(|v| v.is_none()).count();
    Ok(TstatSamples { values: draws.into_iter().flatten().collect(), discarded })
}

/// Coverage of every coefficient in a design mixing fixed and random columns.
pub fn run_mixed_design(config: &ExperimentConfig) -> Result<Vec<ExperimentResult>> {
    if !config.design.has_fixed() || !config.design.has_random() {
        return Err(Error::ConfigInvalid(
            "mixed design needs at least one fixed and one random column".into(),
        ));
    }
    let engine = Engine::new(config)?;
    let d = config.design.d();
    let c = config.test.critical_value;
    let outcomes: Vec<Option<Vec<bool>>> = engine.map(|draw| {
        let fit = Engine::fit(&draw?, &config.beta_true)?;
        (0..d)
            .map(|j| t_statistic(&fit, j, config.beta_true[j]).ok().map(|t| t.abs() > c))
            .collect()
    });
    let discarded = outcomes.iter().filter(|o| o.is_none()).count();
    Ok((0..d)
        .map(|j| {
            let hits = outcomes.iter().flatten().filter(|o| o[j]).count();
            let mut per_coef = config.clone();
            per_coef.test.coef_index = j;
            ExperimentResult::from_counts(hits, discarded, &per_coef)
        })
        .collect())
}
