//! Limiting power functions of the right-sided t-test.
//!
//! Under the local alternative the power of `T_j > z_alpha` tends to
//! `E Phi(h delta^{-1/2} - z_alpha)`, where `delta = w^T V w / n`. For
//! exchangeable errors `delta` converges to `rho Z^2 + 1 - rho`, so the power
//! is a one-dimensional expectation over a standard normal `Z`.
//!
//! Writing the chi-square variable as `Z^2` keeps the integrand smooth, but
//! for `rho` near one it varies on the scale `sqrt((1 - rho) / rho)` near
//! `Z = 0`. The quadrature maps `z = s sinh(u)` with `s` set to that scale and
//! applies the trapezoid rule in `u`, which converges geometrically for
//! integrands analytic in a strip and resolves the narrow feature without
//! wasting nodes in the tails.

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::correlation::CorrelationMatrix;
use crate::error::{Error, Result};
use crate::normal;
use crate::rng::RngStream;
use crate::sampling::{sample_delta, Innovation};

pub const DEFAULT_ORDER: usize = 200;
pub const CONVERGENCE_TOLERANCE: f64 = 1e-6;

/// Beyond this `|z|` the normal weight is below `1e-340` and ignored.
const Z_MAX: f64 = 40.0;

/// Quadrature nodes `z_k >= 0` and weights for `E f(Z)`, `f` even.
#[derive(Debug, Clone)]
pub struct HalfLineRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl HalfLineRule {
    /// Trapezoid rule in `u` for `z = scale * sinh(u)` with `order + 1`
    /// nodes on `[0, asinh(Z_MAX / scale)]`. Weights are normalized to sum
    /// to one so constants integrate exactly.
    pub fn new(scale: f64, order: usize) -> Self {
        assert!(scale > 0.0 && order >= 1);
        let upper = (Z_MAX / scale).asinh();
        let step = upper / order as f64;
        let mut nodes = Vec::with_capacity(order + 1);
        let mut weights = Vec::with_capacity(order + 1);
        for k in 0..=order {
            let u = k as f64 * step;
            let z = scale * u.sinh();
            let mut w = normal::pdf(z) * scale * u.cosh() * step;
            if k > 0 {
                w *= 2.0;
            }
            nodes.push(z);
            weights.push(w);
        }
        let total: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= total);
        Self { nodes, weights }
    }

    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&z, &w)| w * f(z)).sum()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct QuadratureOptions {
    pub order: usize,
    pub tolerance: f64,
}

impl Default for QuadratureOptions {
    fn default() -> Self {
        Self { order: DEFAULT_ORDER, tolerance: CONVERGENCE_TOLERANCE }
    }
}

fn check_level(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::ConfigInvalid(format!("level must lie in (0, 1), got {alpha}")))
    }
}

fn check_signal(h: f64) -> Result<()> {
    if h >= 0.0 && h.is_finite() {
        Ok(())
    } else {
        Err(Error::ConfigInvalid(format!("signal h must be finite and nonnegative, got {h}")))
    }
}

/// Power under independent errors, `Phi(h - z_alpha)`.
pub fn reference_power(h: f64, alpha: f64) -> f64 {
    normal::cdf(h - normal::z_alpha(alpha))
}

/// Limiting power under exchangeable correlation `rho`:
/// `E Phi(h / sqrt(rho Z^2 + 1 - rho) - z_alpha)`.
pub fn power_exchangeable(h: f64, rho: f64, alpha: f64) -> Result<f64> {
    power_exchangeable_with(h, rho, alpha, QuadratureOptions::default())
}

pub fn power_exchangeable_with(h: f64, rho: f64, alpha: f64, options: QuadratureOptions) -> Result<f64> {
    check_signal(h)?;
    check_level(alpha)?;
    if !(0.0..1.0).contains(&rho) {
        return Err(Error::ConfigInvalid(format!("exchangeable rho must lie in [0, 1), got {rho}")));
    }
    let z = normal::z_alpha(alpha);
    if rho == 0.0 {
        return Ok(normal::cdf(h - z));
    }
    let integrand = |x: f64| normal::cdf(h / (rho * x * x + 1.0 - rho).sqrt() - z);
    let scale = ((1.0 - rho) / rho).sqrt().min(1.0);
    let coarse = HalfLineRule::new(scale, options.order).integrate(integrand);
    let fine = HalfLineRule::new(scale, 2 * options.order).integrate(integrand);
    let difference = (fine - coarse).abs();
    if difference > options.tolerance {
        return Err(Error::QuadratureNotConverged { difference });
    }
    Ok(fine)
}

/// `pi(h, rho) - Phi(h - z_alpha)`.
pub fn power_difference(h: f64, rho: f64, alpha: f64) -> Result<f64> {
    Ok(power_exchangeable(h, rho, alpha)? - reference_power(h, alpha))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub value: f64,
    pub mc_std_error: f64,
}

impl McEstimate {
    pub fn from_samples(samples: &[f64]) -> Self {
        let count = samples.len() as f64;
        let mean = samples.iter().sum::<f64>() / count;
        let var = if samples.len() > 1 {
            samples.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (count - 1.0)
        } else {
            0.0
        };
        Self { value: mean, mc_std_error: (var / count).sqrt() }
    }
}

/// Monte Carlo evaluation of `E Phi(h delta^{-1/2} - z_alpha)` with `delta`
/// drawn at the finite `n` of `m`.
pub fn power_general(
    h: f64,
    m: &CorrelationMatrix,
    innovation: Innovation,
    draws: usize,
    alpha: f64,
    stream: RngStream,
) -> Result<McEstimate> {
    check_signal(h)?;
    check_level(alpha)?;
    if draws < 2 {
        return Err(Error::ConfigInvalid("power_general needs at least two draws".into()));
    }
    let z = normal::z_alpha(alpha);
    let values: Vec<f64> = sample_delta(m, innovation, draws, stream)
        .into_iter()
        .map(|delta| normal::cdf(h / delta.sqrt() - z))
        .collect();
    Ok(McEstimate::from_samples(&values))
}

/// Limiting power under block-exchangeable correlation with block
/// correlations `rhos` and block proportions `shares`:
/// `E Phi(h / sqrt(sum_k r_k (rho_k Z_k^2 + 1 - rho_k)) - z_alpha)`.
///
/// Uses tensor quadrature when at most two blocks are correlated, Monte Carlo
/// over `draws` samples otherwise.
pub fn power_blocks(
    h: f64,
    rhos: &[f64],
    shares: &[f64],
    alpha: f64,
    draws: usize,
    stream: RngStream,
) -> Result<f64> {
    check_signal(h)?;
    check_level(alpha)?;
    if rhos.is_empty() || rhos.len() != shares.len() {
        return Err(Error::ConfigInvalid(format!(
            "need matching nonempty block lists, got {} correlations and {} shares",
            rhos.len(),
            shares.len()
        )));
    }
    if rhos.iter().any(|r| !(0.0..1.0).contains(r)) {
        return Err(Error::ConfigInvalid("block correlations must lie in [0, 1)".into()));
    }
    if shares.iter().any(|r| !(*r > 0.0)) || (shares.iter().sum::<f64>() - 1.0).abs() > 1e-10 {
        return Err(Error::ConfigInvalid("block shares must be positive and sum to 1".into()));
    }
    let z = normal::z_alpha(alpha);
    let offset: f64 = rhos.iter().zip(shares).map(|(rho, r)| r * (1.0 - rho)).sum();
    let loads: Vec<f64> = rhos.iter().zip(shares).map(|(rho, r)| r * rho).filter(|&c| c > 0.0).collect();
    let integrand = |quad: f64| normal::cdf(h / (offset + quad).sqrt() - z);

    match loads.as_slice() {
        [] => Ok(integrand(0.0)),
        [c] => {
            let rule = |order| HalfLineRule::new((offset / c).sqrt().min(1.0), order);
            converged(|order| rule(order).integrate(|x| integrand(c * x * x)))
        }
        [c1, c2] => {
            let tensor = |order| {
                let r1 = HalfLineRule::new((offset / c1).sqrt().min(1.0), order);
                let r2 = HalfLineRule::new((offset / c2).sqrt().min(1.0), order);
                r1.integrate(|x1| r2.integrate(|x2| integrand(c1 * x1 * x1 + c2 * x2 * x2)))
            };
            converged(tensor)
        }
        _ => {
            if draws < 2 {
                return Err(Error::ConfigInvalid("Monte Carlo block power needs draws >= 2".into()));
            }
            let values: Vec<f64> = (0..draws as u64)
                .into_par_iter()
                .map(|i| {
                    let mut rng = stream.child(i).rng();
                    let quad: f64 = loads
                        .iter()
                        .map(|c| {
                            let g: f64 = StandardNormal.sample(&mut rng);
                            c * g * g
                        })
                        .sum();
                    integrand(quad)
                })
                .collect();
            Ok(McEstimate::from_samples(&values).value)
        }
    }
}

fn converged(eval: impl Fn(usize) -> f64) -> Result<f64> {
    let coarse = eval(DEFAULT_ORDER);
    let fine = eval(2 * DEFAULT_ORDER);
    let difference = (fine - coarse).abs();
    if difference > CONVERGENCE_TOLERANCE {
        return Err(Error::QuadratureNotConverged { difference });
    }
    Ok(fine)
}

/// Largest `h` below which correlated errors are guaranteed to gain power:
/// `0.5 sqrt(1 - rho) (z_alpha + sqrt(z_alpha^2 + 12))`.
pub fn gain_threshold(rho: f64, alpha: f64) -> f64 {
    let z = normal::z_alpha(alpha);
    0.5 * (1.0 - rho).sqrt() * (z + (z * z + 12.0).sqrt())
}

/// Bisection tolerance on `h` for [`gain_boundary`].
pub const BOUNDARY_TOLERANCE: f64 = 1e-9;

/// Sign change of `h -> power_difference(h, rho, alpha)` on
/// `[gain_threshold / 2, h_max]`.
pub fn gain_boundary(rho: f64, alpha: f64, h_max: f64) -> Result<f64> {
    if !(rho > 0.0 && rho < 1.0) {
        return Err(Error::ConfigInvalid(format!("gain boundary needs rho in (0, 1), got {rho}")));
    }
    let mut lo = 0.5 * gain_threshold(rho, alpha);
    let mut hi = h_max;
    let no_bracket = Error::NoBracket { lower: lo, upper: hi };
    if !(hi > lo) {
        return Err(no_bracket);
    }
    let f_lo = power_difference(lo, rho, alpha)?;
    let f_hi = power_difference(hi, rho, alpha)?;
    if !(f_lo > 0.0 && f_hi < 0.0) {
        return Err(no_bracket);
    }
    while hi - lo > BOUNDARY_TOLERANCE {
        let mid = 0.5 * (lo + hi);
        if power_difference(mid, rho, alpha)? > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Draws from `sum_i a_i Z_i^2 + residual_mass`.
pub fn delta_limit_sampler(weights: &[f64], residual_mass: f64, count: usize, stream: RngStream) -> Result<Vec<f64>> {
    if weights.iter().any(|a| !(*a >= 0.0)) || !(residual_mass >= 0.0) {
        return Err(Error::ConfigInvalid("limit weights and residual mass must be nonnegative".into()));
    }
    let total = weights.iter().sum::<f64>() + residual_mass;
    if (total - 1.0).abs() > 1e-10 {
        return Err(Error::ConfigInvalid(format!("limit weights plus residual mass sum to {total}, expected 1")));
    }
    Ok((0..count as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream.child(i).rng();
            weights
                .iter()
                .map(|a| {
                    let g: f64 = StandardNormal.sample(&mut rng);
                    a * g * g
                })
                .sum::<f64>()
                + residual_mass
        })
        .collect())
}

/// Empirical rejection rates over a grid of local alternatives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalPower {
    pub h_grid: Vec<f64>,
    pub power: Vec<f64>,
    pub mc_std_error: Vec<f64>,
    pub discarded: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerCurve {
    pub h_grid: Vec<f64>,
    pub empirical_power: Option<Vec<f64>>,
    pub mc_std_error: Option<Vec<f64>>,
    pub asymptotic_power: Vec<f64>,
    pub reference_power: Vec<f64>,
    pub difference: Vec<f64>,
    pub level: f64,
    pub critical_value: f64,
}

impl PowerCurve {
    pub fn from_asymptotic(h_grid: Vec<f64>, asymptotic_power: Vec<f64>, level: f64) -> Self {
        assert_eq!(h_grid.len(), asymptotic_power.len());
        let reference_power: Vec<f64> = h_grid.iter().map(|&h| reference_power(h, level)).collect();
        let difference = asymptotic_power.iter().zip(&reference_power).map(|(a, r)| a - r).collect();
        Self {
            h_grid,
            empirical_power: None,
            mc_std_error: None,
            asymptotic_power,
            reference_power,
            difference,
            level,
            critical_value: normal::z_alpha(level),
        }
    }

    /// Curve of `pi(h, rho)` under exchangeable correlation.
    pub fn exchangeable(h_grid: &[f64], rho: f64, level: f64) -> Result<Self> {
        let asymptotic = h_grid
            .iter()
            .map(|&h| power_exchangeable(h, rho, level))
            .collect::<Result<Vec<f64>>>()?;
        Ok(Self::from_asymptotic(h_grid.to_vec(), asymptotic, level))
    }

    pub fn with_empirical(mut self, empirical: &EmpiricalPower) -> Self {
        assert_eq!(empirical.h_grid, self.h_grid, "grids must agree");
        self.empirical_power = Some(empirical.power.clone());
        self.mc_std_error = Some(empirical.mc_std_error.clone());
        self
    }

    /// Table with columns `h, empirical, asymptotic, reference, difference, mc_se`.
    pub fn to_table(&self) -> crate::table::Table {
        use crate::table::{Cell, Table};
        let mut table = Table::new(["h", "empirical", "asymptotic", "reference", "difference", "mc_se"]);
        for i in 0..self.h_grid.len() {
            let opt = |v: &Option<Vec<f64>>| v.as_ref().map_or(Cell::Empty, |v| Cell::Float(v[i]));
            table.push(vec![
                Cell::Float(self.h_grid[i]),
                opt(&self.empirical_power),
                Cell::Float(self.asymptotic_power[i]),
                Cell::Float(self.reference_power[i]),
                Cell::Float(self.difference[i]),
                opt(&self.mc_std_error),
            ]);
        }
        table
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const ALPHA: f64 = 0.05;

    #[test]
    fn rule_integrates_normal_moments() {
        let rule = HalfLineRule::new(0.3, 200);
        assert!((rule.integrate(|_| 1.0) - 1.0).abs() < 1e-15);
        assert!((rule.integrate(|z| z * z) - 1.0).abs() < 1e-13);
        assert!((rule.integrate(|z| z.powi(4)) - 3.0).abs() < 1e-12);
    }

    #[test]
    fn independent_errors_reduce_to_reference() {
        let z = normal::z_alpha(ALPHA);
        assert_eq!(power_exchangeable(z, 0.0, ALPHA).unwrap(), 0.5);
        for &h in &[0.0, 0.5, 1.0, 2.0, 4.0, 8.0] {
            assert_eq!(power_exchangeable(h, 0.0, ALPHA).unwrap(), reference_power(h, ALPHA));
        }
    }

    #[test]
    fn null_power_is_level() {
        for &rho in &[0.0, 0.1, 0.5, 0.9, 0.99] {
            assert!((power_exchangeable(0.0, rho, ALPHA).unwrap() - ALPHA).abs() < 1e-14);
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(power_exchangeable(-1.0, 0.5, ALPHA).is_err());
        assert!(power_exchangeable(1.0, 1.0, ALPHA).is_err());
        assert!(power_exchangeable(1.0, 0.5, 1.5).is_err());
    }

    #[test]
    fn unconverged_quadrature_reported() {
        let tiny = QuadratureOptions { order: 2, tolerance: 1e-12 };
        assert!(matches!(
            power_exchangeable_with(1.0, 0.99, ALPHA, tiny),
            Err(Error::QuadratureNotConverged { .. })
        ));
    }

    #[test]
    fn gain_threshold_values() {
        // 0.5 * sqrt(0.1) * (1.6448536 + sqrt(1.6448536^2 + 12)).
        assert!((gain_threshold(0.9, ALPHA) - 0.866406).abs() < 1e-5);
        assert!((gain_threshold(0.75, ALPHA) - 1.369909).abs() < 1e-5);
        for &rho in &[0.9, 0.75] {
            let h = gain_threshold(rho, ALPHA);
            assert!(power_difference(h, rho, ALPHA).unwrap() > 0.0);
        }
    }

    #[test]
    fn boundary_brackets() {
        let b = gain_boundary(0.9, ALPHA, 10.0).unwrap();
        assert!(b > gain_threshold(0.9, ALPHA) && b < 8.0);
        assert!(power_difference(b - 1e-6, 0.9, ALPHA).unwrap() > 0.0);
        assert!(power_difference(b + 1e-6, 0.9, ALPHA).unwrap() < 0.0);
        assert!(gain_boundary(0.05, ALPHA, 10.0).is_ok());
        assert!(matches!(gain_boundary(0.9, ALPHA, 0.5), Err(Error::NoBracket { .. })));
    }

    #[test]
    fn difference_vanishes_for_large_signal() {
        assert!(power_difference(12.0, 0.9, ALPHA).unwrap().abs() < 1e-3);
    }

    #[test]
    fn block_power_reductions() {
        let s = RngStream::new(0, 0);
        for &h in &[0.5, 2.0, 5.0] {
            let single = power_blocks(h, &[0.7], &[1.0], ALPHA, 0, s).unwrap();
            assert!((single - power_exchangeable(h, 0.7, ALPHA).unwrap()).abs() < 1e-6);
            let flat = power_blocks(h, &[0.0, 0.0, 0.0], &[0.2, 0.3, 0.5], ALPHA, 0, s).unwrap();
            assert!((flat - reference_power(h, ALPHA)).abs() < 1e-15);
        }
        assert!(power_blocks(1.0, &[0.5, 0.5], &[0.5, 0.4], ALPHA, 0, s).is_err());
        assert!(power_blocks(1.0, &[0.5], &[0.5, 0.5], ALPHA, 0, s).is_err());
    }

    #[test]
    fn limit_sampler_cases() {
        let s = RngStream::new(3, 1);
        assert!(delta_limit_sampler(&[], 1.0, 20, s).unwrap().iter().all(|&v| v == 1.0));
        let chi = delta_limit_sampler(&[1.0], 0.0, 20_000, s).unwrap();
        assert!(chi.iter().all(|&v| v >= 0.0));
        let mean = chi.iter().sum::<f64>() / 20_000.0;
        assert!((mean - 1.0).abs() < 3.0 * (2.0_f64 / 20_000.0).sqrt());
        assert!(delta_limit_sampler(&[0.9], 0.2, 10, s).is_err());
        assert!(delta_limit_sampler(&[-0.1], 1.1, 10, s).is_err());
    }

    #[test]
    fn curve_difference_is_elementwise() {
        let grid = [0.0, 1.0, 2.0, 4.0];
        let curve = PowerCurve::exchangeable(&grid, 0.6, ALPHA).unwrap();
        for i in 0..grid.len() {
            assert_eq!(curve.difference[i], curve.asymptotic_power[i] - curve.reference_power[i]);
        }
        assert_eq!(curve.to_table().len(), 4);
    }
}
