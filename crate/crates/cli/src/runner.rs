//! Executes a manifest and collects its output tables.

use std::fmt;

use robust_ols::asymptotics::{delta_limit_sampler, gain_boundary, PowerCurve};
use robust_ols::correlation::CorrelationMatrix;
use robust_ols::diagnostics::{
    kolmogorov_distance, ks_to_normal, ks_two_sample, rate_decay_check, selfnorm_tail_curve, tail_log_slope,
};
use robust_ols::monte_carlo::{
    run_coverage, run_mixed_design, run_power, run_tstat_samples, ExperimentConfig, Sidedness, Standardization,
    TestSpec,
};
use robust_ols::table::{Cell, Table};
use robust_ols::{normal, sampling, ColumnSpec, CorrelationSpec, DesignSpec, ErrorSpec, RngStream};
use serde_json::json;

use crate::manifest::*;

/// Stream-key tag for seeds derived from the manifest seed.
const DERIVED_SEED: u64 = 0x5EED;

#[derive(Debug, Clone, PartialEq)]
pub struct Artifact {
    pub file_name: String,
    pub table: Table,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub artifacts: Vec<Artifact>,
    /// Counts worth surfacing in the metadata, such as discarded replications.
    pub summary: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq)]
pub enum RunError {
    /// The manifest parsed but describes an invalid experiment.
    Config(String),
    Numerical { component: &'static str, message: String },
    Io(String),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 2,
            RunError::Numerical { .. } => 3,
            RunError::Io(_) => 1,
        }
    }
}

impl fmt::Display for RunError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RunError::Config(m) => write!(f, "invalid manifest: params: {m}"),
            RunError::Numerical { component, message } => write!(f, "numerical failure in {component}: {message}"),
            RunError::Io(m) => write!(f, "i/o error: {m}"),
        }
    }
}

impl std::error::Error for RunError {}

impl From<robust_ols::Error> for RunError {
    fn from(e: robust_ols::Error) -> Self {
        use robust_ols::Error as E;
        match e {
            E::ConfigInvalid(m) | E::SpecInvalid(m) => RunError::Config(m),
            E::Io(m) => RunError::Io(m),
            other => RunError::Numerical { component: other.component(), message: other.to_string() },
        }
    }
}

type Result<T> = std::result::Result<T, RunError>;

fn config_error(msg: impl Into<String>) -> RunError {
    RunError::Config(msg.into())
}

fn non_empty<T>(field: &str, v: &[T]) -> Result<()> {
    if v.is_empty() {
        return Err(config_error(format!("{field} must not be empty")));
    }
    Ok(())
}

fn ascending(field: &str, v: &[usize]) -> Result<()> {
    non_empty(field, v)?;
    if v.windows(2).any(|w| w[1] <= w[0]) {
        return Err(config_error(format!("{field} must be strictly ascending")));
    }
    Ok(())
}

fn validate_all(configs: &[ExperimentConfig]) -> Result<()> {
    for c in configs {
        c.validate()?;
        c.error.correlation.validate(c.n)?;
    }
    Ok(())
}

/// Seed for point `index` of a sweep.
fn point_seed(seed: u64, index: usize, coupling: Coupling) -> u64 {
    match coupling {
        Coupling::Common => seed,
        Coupling::Independent => RngStream::new(seed, index as u64).child(DERIVED_SEED).seed,
    }
}

/// Short label used in the `correlation` column of tables.
pub fn correlation_label(spec: &CorrelationSpec) -> String {
    match spec {
        CorrelationSpec::Identity => "identity".into(),
        CorrelationSpec::Ar1 { rho } => format!("ar1({rho})"),
        CorrelationSpec::Exchangeable { rho } => format!("exchangeable({rho})"),
        CorrelationSpec::BlockExchangeable { block_sizes, rhos } => {
            let parts: Vec<String> = block_sizes.iter().zip(rhos).map(|(b, r)| format!("{b}:{r}")).collect();
            format!("block_exchangeable({})", parts.join(" "))
        }
        CorrelationSpec::Custom { rows } => format!("custom({})", rows.len()),
    }
}

fn rho_file(prefix: &str, rho: f64) -> String {
    format!("{prefix}_rho{rho:.2}.csv")
}

fn single_column_config(
    n: usize,
    reps: usize,
    seed: u64,
    column: ColumnSpec,
    error: ErrorSpec,
    beta: f64,
    test: TestSpec,
) -> ExperimentConfig {
    ExperimentConfig { n, reps, seed, design: DesignSpec::new(vec![column]), error, beta_true: vec![beta], test }
}

fn two_sided(critical_value: f64) -> TestSpec {
    TestSpec { coef_index: 0, level: 2.0 * normal::sf(critical_value), critical_value, sidedness: Sidedness::TwoSided }
}

fn error_spec(correlation: CorrelationSpec, innovation: robust_ols::Innovation) -> ErrorSpec {
    ErrorSpec { innovation, ..ErrorSpec::new(correlation) }
}

pub fn execute(manifest: &RunManifest) -> Result<RunOutput> {
    let seed = manifest.seed;
    match &manifest.params {
        Params::AsymptoticPower(p) => asymptotic_power(p),
        Params::Coverage(p) => coverage(p, seed),
        Params::DeltaDist(p) => delta_dist(p, seed),
        Params::GainBoundary(p) => gain_boundaries(p),
        Params::MixedDesign(p) => mixed_design(p, seed),
        Params::Power(p) => power(p, seed),
        Params::RateDecay(p) => rate_decay(p, seed),
        Params::SelfnormTail(p) => selfnorm_tail(p, seed),
        Params::TstatDensity(p) => tstat_density(p, seed),
    }
}

fn coverage(p: &CoverageParams, seed: u64) -> Result<RunOutput> {
    non_empty("rhos", &p.rhos)?;
    non_empty("design_modes", &p.design_modes)?;
    if p.fixed_draws == 0 {
        return Err(config_error("fixed_draws must be at least 1"));
    }
    let config = |rho_index: usize, column: ColumnSpec| {
        single_column_config(
            p.n,
            p.reps,
            point_seed(seed, rho_index, p.coupling),
            column,
            error_spec(p.correlation.spec(p.rhos[rho_index]), p.innovation),
            p.beta,
            two_sided(p.critical_value),
        )
    };
    let mut plans: Vec<(DesignMode, usize, Vec<ExperimentConfig>)> = Vec::new();
    for &mode in &p.design_modes {
        let draws = if mode == DesignMode::Fixed { p.fixed_draws } else { 1 };
        for k in 0..draws {
            let column = match mode {
                DesignMode::Random => ColumnSpec::random(p.column),
                DesignMode::Fixed => ColumnSpec::fixed(p.column, p.fixed_seed.wrapping_add(k as u64)),
            };
            plans.push((mode, k, (0..p.rhos.len()).map(|i| config(i, column)).collect()));
        }
    }
    for (_, _, configs) in &plans {
        validate_all(configs)?;
    }

    let header = ["rho", "design_mode", "noncoverage", "mc_se"];
    let mut random = Table::new(header);
    let mut fixed = Table::new(header);
    let mut sweep = Table::new(["rho", "fixed_draw", "noncoverage", "mc_se"]);
    let mut discarded = 0;
    let mut flagged = Vec::new();
    for (mode, k, configs) in &plans {
        for (rho, config) in p.rhos.iter().zip(configs) {
            let r = run_coverage(config)?;
            discarded += r.discarded;
            if r.flagged {
                flagged.push(json!({ "rho": rho, "design_mode": mode.name(), "fixed_draw": k }));
            }
            let row = vec![(*rho).into(), mode.name().into(), r.estimate.into(), r.mc_std_error.into()];
            match mode {
                DesignMode::Random => random.push(row),
                DesignMode::Fixed => {
                    if *k == 0 {
                        fixed.push(row);
                    }
                    sweep.push(vec![(*rho).into(), (*k).into(), r.estimate.into(), r.mc_std_error.into()]);
                }
            }
        }
    }
    let mut artifacts = Vec::new();
    if p.design_modes.contains(&DesignMode::Random) {
        artifacts.push(Artifact { file_name: "coverage_random.csv".into(), table: random });
    }
    if p.design_modes.contains(&DesignMode::Fixed) {
        artifacts.push(Artifact { file_name: "coverage_fixed.csv".into(), table: fixed });
        if p.fixed_draws > 1 {
            artifacts.push(Artifact { file_name: "coverage_fixed_draws.csv".into(), table: sweep });
        }
    }
    Ok(RunOutput { artifacts, summary: json!({ "discarded": discarded, "flagged": flagged }) })
}

fn power(p: &PowerParams, seed: u64) -> Result<RunOutput> {
    non_empty("rhos", &p.rhos)?;
    non_empty("h_grid", &p.h_grid)?;
    if let Some(rho) = p.rhos.iter().find(|r| !(**r >= 0.0 && **r < 1.0)) {
        return Err(config_error(format!("rhos must lie in [0, 1), got {rho}")));
    }
    let test = TestSpec {
        coef_index: 0,
        level: p.level,
        critical_value: normal::z_alpha(p.level),
        sidedness: Sidedness::RightSided,
    };
    let configs: Vec<ExperimentConfig> = p
        .rhos
        .iter()
        .enumerate()
        .map(|(i, &rho)| {
            single_column_config(
                p.n,
                p.reps,
                point_seed(seed, i, p.coupling),
                ColumnSpec::random(p.column),
                error_spec(CorrelationSpec::Exchangeable { rho }, p.innovation),
                0.0,
                test,
            )
        })
        .collect();
    validate_all(&configs)?;
    let mut artifacts = Vec::new();
    let mut discarded = Vec::new();
    for (&rho, config) in p.rhos.iter().zip(&configs) {
        let empirical = run_power(config, &p.h_grid, &config.design.mixing_matrix())?;
        discarded.push(json!({ "rho": rho, "discarded": empirical.discarded }));
        let curve = PowerCurve::exchangeable(&p.h_grid, rho, p.level)?.with_empirical(&empirical);
        artifacts.push(Artifact { file_name: rho_file("power", rho), table: curve.to_table() });
    }
    Ok(RunOutput { artifacts, summary: json!({ "discarded": discarded }) })
}

fn tstat_density(p: &TstatDensityParams, seed: u64) -> Result<RunOutput> {
    non_empty("rhos", &p.rhos)?;
    let configs: Vec<ExperimentConfig> = p
        .rhos
        .iter()
        .enumerate()
        .map(|(i, &rho)| {
            single_column_config(
                p.n,
                p.reps,
                point_seed(seed, i, p.coupling),
                ColumnSpec::random(p.column),
                error_spec(p.correlation.spec(rho), p.innovation),
                p.beta,
                two_sided(1.96),
            )
        })
        .collect();
    validate_all(&configs)?;
    let mut samples = Table::new(["rho", "standardization", "value"]);
    let mut ks = Table::new(["rho", "standardization", "ks_distance", "effective_reps", "discarded"]);
    for (&rho, config) in p.rhos.iter().zip(&configs) {
        for (label, standardization) in
            [("estimated_se", Standardization::EstimatedSe), ("true_se", Standardization::TrueSe)]
        {
            let draws = run_tstat_samples(config, standardization)?;
            let report = ks_to_normal(&draws.values)?;
            ks.push(vec![
                rho.into(),
                label.into(),
                report.distance.into(),
                draws.values.len().into(),
                draws.discarded.into(),
            ]);
            for v in draws.values {
                samples.push(vec![rho.into(), label.into(), v.into()]);
            }
        }
    }
    Ok(RunOutput {
        artifacts: vec![
            Artifact { file_name: "tstat_samples.csv".into(), table: samples },
            Artifact { file_name: "tstat_ks.csv".into(), table: ks },
        ],
        summary: json!({}),
    })
}

/// CDF of `a Z^2 + r`.
fn single_spike_cdf(a: f64, r: f64) -> impl Fn(f64) -> f64 {
    move |x| if x <= r { 0.0 } else { 2.0 * normal::cdf(((x - r) / a).sqrt()) - 1.0 }
}

fn delta_dist(p: &DeltaDistParams, seed: u64) -> Result<RunOutput> {
    non_empty("correlations", &p.correlations)?;
    ascending("n_grid", &p.n_grid)?;
    if p.draws < 2 {
        return Err(config_error("draws must be at least 2"));
    }
    if !(p.band > 0.0) {
        return Err(config_error("band must be positive"));
    }
    for spec in &p.correlations {
        for &n in &p.n_grid {
            spec.validate(n)?;
        }
    }
    let mut summary = Table::new(["correlation", "n", "mean", "variance", "ks_to_limit", "band_fraction"]);
    let mut samples = Table::new(["correlation", "n", "delta"]);
    for (ci, spec) in p.correlations.iter().enumerate() {
        let label = correlation_label(spec);
        for (ni, &n) in p.n_grid.iter().enumerate() {
            let m = CorrelationMatrix::build(spec, n)?;
            let stream = RngStream::new(seed, (ci * p.n_grid.len() + ni) as u64);
            let deltas = sampling::sample_delta(&m, p.innovation, p.draws, stream);
            let k = deltas.len() as f64;
            let mean = deltas.iter().sum::<f64>() / k;
            let variance = deltas.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (k - 1.0);
            let limit = m.delta_limit_weights(p.threshold);
            // A limit without spikes is the point mass at 1, for which the
            // band fraction is the meaningful summary.
            let ks = match limit.weights.as_slice() {
                [] => Cell::Empty,
                [a] => Cell::Float(
                    kolmogorov_distance(&deltas, single_spike_cdf(*a, limit.residual_mass), "limit")?.distance,
                ),
                weights => {
                    let reference = delta_limit_sampler(
                        weights,
                        limit.residual_mass,
                        p.draws,
                        stream.derive(DERIVED_SEED),
                    )?;
                    Cell::Float(ks_two_sample(&deltas, &reference)?)
                }
            };
            let band_fraction = deltas.iter().filter(|d| (*d - 1.0).abs() <= p.band).count() as f64 / k;
            summary.push(vec![
                label.as_str().into(),
                n.into(),
                mean.into(),
                variance.into(),
                ks,
                band_fraction.into(),
            ]);
            for d in deltas {
                samples.push(vec![label.as_str().into(), n.into(), d.into()]);
            }
        }
    }
    Ok(RunOutput {
        artifacts: vec![
            Artifact { file_name: "delta_summary.csv".into(), table: summary },
            Artifact { file_name: "delta_samples.csv".into(), table: samples },
        ],
        summary: json!({}),
    })
}

fn asymptotic_power(p: &AsymptoticPowerParams) -> Result<RunOutput> {
    non_empty("rhos", &p.rhos)?;
    non_empty("h_grid", &p.h_grid)?;
    let artifacts = p
        .rhos
        .iter()
        .map(|&rho| {
            let curve = PowerCurve::exchangeable(&p.h_grid, rho, p.level)?;
            Ok(Artifact { file_name: rho_file("asymptotic", rho), table: curve.to_table() })
        })
        .collect::<Result<_>>()?;
    Ok(RunOutput { artifacts, summary: json!({}) })
}

fn gain_boundaries(p: &GainBoundaryParams) -> Result<RunOutput> {
    non_empty("rhos", &p.rhos)?;
    let mut table = Table::new(["rho", "boundary_h"]);
    for &rho in &p.rhos {
        table.push(vec![rho.into(), gain_boundary(rho, p.level, p.h_max)?.into()]);
    }
    Ok(RunOutput { artifacts: vec![Artifact { file_name: "gain_boundary.csv".into(), table }], summary: json!({}) })
}

fn rate_decay(p: &RateDecayParams, seed: u64) -> Result<RunOutput> {
    ascending("n_grid", &p.n_grid)?;
    if p.seeds == 0 {
        return Err(config_error("seeds must be at least 1"));
    }
    let runs: Vec<Vec<ExperimentConfig>> = (0..p.seeds)
        .map(|s| {
            let seed_s = RngStream::new(seed, s as u64).child(DERIVED_SEED).seed;
            p.n_grid
                .iter()
                .map(|&n| {
                    single_column_config(
                        n,
                        p.reps,
                        seed_s,
                        ColumnSpec::random(p.column),
                        error_spec(p.correlation.clone(), p.innovation),
                        1.0,
                        two_sided(1.96),
                    )
                })
                .collect()
        })
        .collect();
    for configs in &runs {
        validate_all(configs)?;
    }
    let mut table = Table::new(["seed_index", "n", "ks_distance", "rate", "reps", "discarded"]);
    for (s, configs) in runs.iter().enumerate() {
        for point in rate_decay_check(configs)? {
            table.push(vec![
                s.into(),
                point.n.into(),
                point.ks_distance.into(),
                point.rate.into(),
                point.reps.into(),
                point.discarded.into(),
            ]);
        }
    }
    Ok(RunOutput {
        artifacts: vec![Artifact { file_name: "rate_decay.csv".into(), table }],
        summary: json!({ "correlation": correlation_label(&p.correlation) }),
    })
}

fn mixed_design(p: &MixedDesignParams, seed: u64) -> Result<RunOutput> {
    non_empty("rhos", &p.rhos)?;
    let design = DesignSpec::new(vec![
        ColumnSpec::intercept(),
        ColumnSpec::fixed(robust_ols::ColumnDist::Rademacher, p.fixed_seed),
        ColumnSpec::random(robust_ols::ColumnDist::Rademacher),
    ]);
    let config = |i: usize, rho: f64| ExperimentConfig {
        n: p.n,
        reps: p.reps,
        seed: point_seed(seed, i, p.coupling),
        design: design.clone(),
        error: error_spec(CorrelationSpec::Ar1 { rho }, p.innovation),
        beta_true: p.beta.clone(),
        test: two_sided(p.critical_value),
    };
    let sweep: Vec<ExperimentConfig> = p.rhos.iter().enumerate().map(|(i, &rho)| config(i, rho)).collect();
    let densities: Vec<ExperimentConfig> =
        p.density_rhos.iter().enumerate().map(|(i, &rho)| config(i, rho)).collect();
    validate_all(&sweep)?;
    validate_all(&densities)?;

    let mut coverage = Table::new(["rho", "coefficient", "noncoverage", "mc_se"]);
    let mut discarded = 0;
    for (&rho, config) in p.rhos.iter().zip(&sweep) {
        let results = run_mixed_design(config)?;
        discarded += results[0].discarded;
        for (j, r) in results.iter().enumerate() {
            coverage.push(vec![rho.into(), (j + 1).into(), r.estimate.into(), r.mc_std_error.into()]);
        }
    }
    let mut artifacts = vec![Artifact { file_name: "mixed_design.csv".into(), table: coverage }];
    if !densities.is_empty() {
        let mut samples = Table::new(["rho", "coefficient", "value"]);
        for (&rho, config) in p.density_rhos.iter().zip(&densities) {
            for j in 0..config.design.d() {
                let mut per_coef = config.clone();
                per_coef.test.coef_index = j;
                for v in run_tstat_samples(&per_coef, Standardization::EstimatedSe)?.values {
                    samples.push(vec![rho.into(), (j + 1).into(), v.into()]);
                }
            }
        }
        artifacts.push(Artifact { file_name: "mixed_tstat_samples.csv".into(), table: samples });
    }
    Ok(RunOutput { artifacts, summary: json!({ "discarded": discarded }) })
}

fn selfnorm_tail(p: &SelfnormTailParams, seed: u64) -> Result<RunOutput> {
    non_empty("correlations", &p.correlations)?;
    non_empty("t_grid", &p.t_grid)?;
    for spec in &p.correlations {
        spec.validate(p.n)?;
    }
    let mut tail = Table::new(["correlation", "t", "exceedance", "mc_se", "reference"]);
    let mut slopes = Table::new(["correlation", "log_slope", "lambda_min"]);
    for (ci, spec) in p.correlations.iter().enumerate() {
        let label = correlation_label(spec);
        let error = error_spec(spec.clone(), p.innovation);
        let points = selfnorm_tail_curve(&error, p.n, p.reps, &p.t_grid, RngStream::new(seed, ci as u64))?;
        for q in &points {
            tail.push(vec![
                label.as_str().into(),
                q.t.into(),
                q.exceedance.into(),
                q.mc_std_error.into(),
                q.reference.into(),
            ]);
        }
        let slope = tail_log_slope(&points).map_or(Cell::Empty, Cell::Float);
        let lambda_min = CorrelationMatrix::build(spec, p.n)?.lambda_min();
        slopes.push(vec![label.as_str().into(), slope, lambda_min.into()]);
    }
    Ok(RunOutput {
        artifacts: vec![
            Artifact { file_name: "selfnorm_tail.csv".into(), table: tail },
            Artifact { file_name: "selfnorm_slope.csv".into(), table: slopes },
        ],
        summary: json!({}),
    })
}
