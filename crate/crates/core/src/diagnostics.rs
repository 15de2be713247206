//! Distributional distances and rate tracking.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::correlation::{CorrelationMatrix, CorrelationSpec};
use crate::error::{Error, Result};
use crate::monte_carlo::{run_tstat_samples, ExperimentConfig, Standardization};
use crate::normal;
use crate::rng::RngStream;
use crate::sampling::{self_normalize, ErrorSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KolmogorovReport {
    pub distance: f64,
    pub sample_size: usize,
    pub reference: String,
}

/// Exact sup-distance between the empirical CDF of `samples` and `cdf`:
/// `max_i max(i/R - F(x_(i)), F(x_(i)) - (i-1)/R)` over the sorted sample.
pub fn kolmogorov_distance(samples: &[f64], cdf: impl Fn(f64) -> f64, reference: &str) -> Result<KolmogorovReport> {
    if samples.is_empty() {
        return Err(Error::EmptySample);
    }
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteSample);
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let r = sorted.len() as f64;
    let distance = sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            ((i + 1) as f64 / r - f).max(f - i as f64 / r)
        })
        .fold(0.0_f64, f64::max);
    Ok(KolmogorovReport { distance, sample_size: samples.len(), reference: reference.to_string() })
}

/// Kolmogorov distance to the standard normal.
pub fn ks_to_normal(samples: &[f64]) -> Result<KolmogorovReport> {
    kolmogorov_distance(samples, normal::cdf, "N(0,1)")
}

/// Two-sample Kolmogorov distance `sup |F_a - F_b|`.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptySample);
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0, 0, 0.0_f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    Ok(d)
}

/// `lambda_min(V)^{-3/2} max(d, ln n) / sqrt(n)`, the shape of the
/// Berry-Esseen bound for `T_j` without its constant.
pub fn berry_esseen_rate(m: &CorrelationMatrix, d: usize) -> f64 {
    berry_esseen_shape(m.lambda_min(), m.n() as f64, d)
}

/// The same bound shape for a real-valued `n`.
pub fn berry_esseen_shape(lambda_min: f64, n: f64, d: usize) -> f64 {
    lambda_min.powf(-1.5) * (d as f64).max(n.ln()) / n.sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatePoint {
    pub n: usize,
    pub ks_distance: f64,
    pub rate: f64,
    pub reps: usize,
    pub discarded: usize,
}

fn same_kind(a: &CorrelationSpec, b: &CorrelationSpec) -> bool {
    std::mem::discriminant(a) == std::mem::discriminant(b)
}

/// Kolmogorov distance of `T_j` to `N(0, 1)` along a family of configs with
/// ascending `n`.
pub fn rate_decay_check(configs: &[ExperimentConfig]) -> Result<Vec<RatePoint>> {
    if configs.is_empty() {
        return Err(Error::ConfigInvalid("rate check needs at least one config".into()));
    }
    if configs.windows(2).any(|w| w[1].n <= w[0].n) {
        return Err(Error::ConfigInvalid("rate check configs must have strictly ascending n".into()));
    }
    if configs.iter().any(|c| !same_kind(&c.error.correlation, &configs[0].error.correlation)) {
        return Err(Error::ConfigInvalid("rate check configs must share a correlation kind".into()));
    }
    configs
        .iter()
        .map(|config| {
            let samples = run_tstat_samples(config, Standardization::EstimatedSe)?;
            let ks = ks_to_normal(&samples.values)?;
            let m = CorrelationMatrix::build(&config.error.correlation, config.n)?;
            Ok(RatePoint {
                n: config.n,
                ks_distance: ks.distance,
                rate: berry_esseen_rate(&m, config.design.d()),
                reps: config.reps,
                discarded: samples.discarded,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailPoint {
    pub t: f64,
    /// Pooled frequency of `sqrt(n) |v_i| >= t`.
    pub exceedance: f64,
    /// Standard error from the spread of per-replication frequencies.
    pub mc_std_error: f64,
    /// Normal-shape reference `2 (1 - Phi(t))`.
    pub reference: f64,
}

pub const MIN_TAIL_COORDINATES: usize = 100_000;

/// Empirical tail of the self-normalized coordinates `sqrt(n) |v_i|`,
/// pooled over coordinates and replications.
pub fn selfnorm_tail_curve(
    spec: &ErrorSpec,
    n: usize,
    reps: usize,
    t_grid: &[f64],
    stream: RngStream,
) -> Result<Vec<TailPoint>> {
    if reps < 2 || reps * n < MIN_TAIL_COORDINATES {
        return Err(Error::ConfigInvalid(format!(
            "tail curve needs reps * n >= {MIN_TAIL_COORDINATES} and reps >= 2, got reps = {reps}, n = {n}"
        )));
    }
    let model = spec.build(n)?;
    let scale = (n as f64).sqrt();
    let per_rep: Vec<Vec<f64>> = (0..reps as u64)
        .into_par_iter()
        .map(|r| {
            let draw = model.draw(&mut stream.child(r).rng());
            let v = self_normalize(draw.eps.as_slice())?;
            let mut scaled: Vec<f64> = v.iter().map(|x| scale * x.abs()).collect();
            scaled.sort_by(f64::total_cmp);
            Ok(t_grid
                .iter()
                .map(|&t| {
                    let below = scaled.partition_point(|&x| x < t);
                    (n - below) as f64 / n as f64
                })
                .collect())
        })
        .collect::<Result<_>>()?;
    let reps_f = reps as f64;
    Ok(t_grid
        .iter()
        .enumerate()
        .map(|(k, &t)| {
            let mean = per_rep.iter().map(|f| f[k]).sum::<f64>() / reps_f;
            let var = per_rep.iter().map(|f| (f[k] - mean).powi(2)).sum::<f64>() / (reps_f - 1.0);
            TailPoint { t, exceedance: mean, mc_std_error: (var / reps_f).sqrt(), reference: 2.0 * normal::sf(t) }
        })
        .collect())
}

/// Least-squares slope of `ln(exceedance)` against `t^2` over points with
/// positive exceedance.
pub fn tail_log_slope(points: &[TailPoint]) -> Option<f64> {
    let xy: Vec<(f64, f64)> =
        points.iter().filter(|p| p.exceedance > 0.0).map(|p| (p.t * p.t, p.exceedance.ln())).collect();
    if xy.len() < 2 {
        return None;
    }
    let k = xy.len() as f64;
    let mx = xy.iter().map(|p| p.0).sum::<f64>() / k;
    let my = xy.iter().map(|p| p.1).sum::<f64>() / k;
    let sxy: f64 = xy.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = xy.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Some(sxy / sxx)
}

/// `sqrt(n) max_i |v_i|` for a self-normalized vector `v`.
pub fn max_scaled_coordinate(v: &[f64]) -> f64 {
    (v.len() as f64).sqrt() * v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute_force_ks(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
        // Evaluate |F_R - F| just before and at every sample point.
        let r = samples.len() as f64;
        let mut d = 0.0_f64;
        for &x in samples {
            let at = samples.iter().filter(|&&s| s <= x).count() as f64 / r;
            let before = samples.iter().filter(|&&s| s < x).count() as f64 / r;
            d = d.max((at - cdf(x)).abs()).max((before - cdf(x)).abs());
        }
        d
    }

    #[test]
    fn one_point_sample() {
        assert_eq!(ks_to_normal(&[0.0]).unwrap().distance, 0.5);
    }

    #[test]
    fn quantile_grid_sample() {
        let r = 100;
        let samples: Vec<f64> = (0..r).map(|i| normal::quantile((i as f64 + 0.5) / r as f64)).collect();
        assert!((ks_to_normal(&samples).unwrap().distance - 0.005).abs() < 1e-12);
    }

    #[test]
    fn errors() {
        assert_eq!(ks_to_normal(&[]), Err(Error::EmptySample));
        assert_eq!(ks_to_normal(&[f64::NAN]), Err(Error::NonFiniteSample));
    }

    #[test]
    fn agrees_with_brute_force_including_ties() {
        let mut rng = RngStream::new(1, 1).rng();
        use rand::Rng;
        for size in [1, 2, 7, 50, 311, 500] {
            let samples: Vec<f64> = (0..size).map(|_| (rng.random::<f64>() * 8.0).round() / 2.0 - 2.0).collect();
            let fast = ks_to_normal(&samples).unwrap().distance;
            let slow = brute_force_ks(&samples, normal::cdf);
            assert!((fast - slow).abs() <= 1e-15, "size {size}: {fast} vs {slow}");
        }
    }

    #[test]
    fn two_sample_distance() {
        assert_eq!(ks_two_sample(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(ks_two_sample(&[0.0], &[1.0]).unwrap(), 1.0);
        assert!((ks_two_sample(&[0.0, 2.0], &[1.0, 3.0]).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn rate_arithmetic() {
        let e2 = std::f64::consts::E.powi(2);
        assert!((berry_esseen_shape(1.0, e2, 1) - 2.0 / std::f64::consts::E).abs() < 1e-15);
        let id = CorrelationMatrix::build(&CorrelationSpec::Identity, 100).unwrap();
        assert!((berry_esseen_rate(&id, 1) - 100f64.ln() / 10.0).abs() < 1e-15);
        assert!((berry_esseen_rate(&id, 7) - 0.7).abs() < 1e-15);
        let ex = CorrelationMatrix::build(&CorrelationSpec::Exchangeable { rho: 0.9 }, 100).unwrap();
        let expected = 0.1_f64.powf(-1.5) * 100f64.ln() / 10.0;
        assert!((berry_esseen_rate(&ex, 1) - expected).abs() < 1e-9);
    }

    #[test]
    fn rate_is_decreasing_in_n() {
        // ln(n) / sqrt(n) peaks at n = e^2, so monotonicity starts at n = 8.
        assert!(berry_esseen_shape(1.0, 4.0, 1) > berry_esseen_shape(1.0, 3.0, 1));
        for spec in [CorrelationSpec::Identity, CorrelationSpec::Exchangeable { rho: 0.5 }] {
            let rates: Vec<f64> = (8..200)
                .map(|n| berry_esseen_rate(&CorrelationMatrix::build(&spec, n).unwrap(), 1))
                .collect();
            assert!(rates.windows(2).all(|w| w[1] < w[0]));
        }
        let r50 = berry_esseen_rate(&CorrelationMatrix::build(&CorrelationSpec::Identity, 400).unwrap(), 10);
        let r200 = berry_esseen_rate(&CorrelationMatrix::build(&CorrelationSpec::Identity, 1600).unwrap(), 10);
        assert!((r200 / r50 - 0.5).abs() < 1e-12);
    }

    #[test]
    fn tail_validation() {
        let spec = ErrorSpec::new(CorrelationSpec::Identity);
        assert!(selfnorm_tail_curve(&spec, 100, 10, &[1.0], RngStream::new(0, 0)).is_err());
    }

    #[test]
    fn slope_of_exact_gaussian_shape() {
        let points: Vec<TailPoint> = (1..8)
            .map(|k| {
                let t = k as f64 * 0.5;
                TailPoint { t, exceedance: 3.0 * (-0.5 * t * t).exp(), mc_std_error: 0.0, reference: 0.0 }
            })
            .collect();
        assert!((tail_log_slope(&points).unwrap() + 0.5).abs() < 1e-12);
    }
}
