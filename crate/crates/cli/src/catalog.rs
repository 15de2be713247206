//! Text listing of experiment kinds and their parameters.

use crate::manifest::ExperimentKind;

struct Entry {
    anchor: &'static str,
    summary: &'static str,
    params: &'static [&'static str],
}

fn entry(kind: ExperimentKind) -> Entry {
    match kind {
        ExperimentKind::AsymptoticPower => Entry {
            anchor: "figure 3a",
            summary: "limiting power pi(h, rho) under exchangeable correlation, with the independent-error reference",
            params: &["rhos: [float] in [0, 1)", "h_grid: [float] >= 0", "level: float = 0.05"],
        },
        ExperimentKind::Coverage => Entry {
            anchor: "figure 1a",
            summary: "two-sided non-coverage of one regressor over a rho sweep, random and fixed designs",
            params: &[
                "n: int",
                "reps: int >= 100",
                "rhos: [float]",
                "correlation: ar1 | exchangeable = ar1",
                "innovation: standard_normal | rademacher | scaled_uniform = standard_normal",
                "column: rademacher | standard_normal | constant_one = rademacher",
                "beta: float = 1",
                "critical_value: float = 1.96",
                "design_modes: [random | fixed] = [random, fixed]",
                "fixed_seed: int = 1",
                "fixed_draws: int = 1",
                "coupling: common | independent = common",
            ],
        },
        ExperimentKind::DeltaDist => Entry {
            anchor: "quadratic-form limit law",
            summary: "finite-n law of delta = w'Vw/n against its weighted chi-square limit",
            params: &[
                "correlations: [correlation table]",
                "n_grid: [int] ascending",
                "draws: int",
                "innovation: standard_normal | rademacher | scaled_uniform = standard_normal",
                "threshold: float = 0.05",
                "band: float = 0.06",
            ],
        },
        ExperimentKind::GainBoundary => Entry {
            anchor: "figure 3b",
            summary: "boundary h where correlated-error power falls below the independent-error power",
            params: &["rhos: [float] in (0, 1)", "level: float = 0.05", "h_max: float"],
        },
        ExperimentKind::MixedDesign => Entry {
            anchor: "figure 4",
            summary: "per-coefficient non-coverage for intercept, fixed and random regressors under AR(1) errors",
            params: &[
                "n: int",
                "reps: int >= 100",
                "rhos: [float]",
                "density_rhos: [float] = []",
                "fixed_seed: int = 1",
                "beta: [float; 3] = [1, 1, 1]",
                "critical_value: float = 1.96",
                "innovation: standard_normal | rademacher | scaled_uniform = standard_normal",
                "coupling: common | independent = common",
            ],
        },
        ExperimentKind::Power => Entry {
            anchor: "figure 1b",
            summary: "empirical right-sided power along local alternatives next to the limiting power curve",
            params: &[
                "n: int",
                "reps: int >= 100",
                "rhos: [float] in [0, 1)",
                "h_grid: [float] ascending, >= 0",
                "level: float = 0.05",
                "innovation: standard_normal | rademacher | scaled_uniform = standard_normal",
                "column: rademacher | standard_normal = rademacher",
                "coupling: common | independent = common",
            ],
        },
        ExperimentKind::RateDecay => Entry {
            anchor: "Berry-Esseen rate",
            summary: "Kolmogorov distance of the t-statistic to N(0, 1) along increasing n, over several seeds",
            params: &[
                "correlation: correlation table",
                "n_grid: [int] ascending",
                "reps: int >= 100",
                "seeds: int = 3",
                "innovation: standard_normal | rademacher | scaled_uniform = standard_normal",
                "column: rademacher | standard_normal = rademacher",
            ],
        },
        ExperimentKind::SelfnormTail => Entry {
            anchor: "self-normalized coordinates",
            summary: "tail of sqrt(n)|v_i| for v = eps/|eps| against the Gaussian tail",
            params: &[
                "n: int",
                "reps: int, reps * n >= 100000",
                "correlations: [correlation table]",
                "t_grid: [float]",
                "innovation: standard_normal | rademacher | scaled_uniform = standard_normal",
            ],
        },
        ExperimentKind::TstatDensity => Entry {
            anchor: "figure 2",
            summary: "samples and Kolmogorov distances of T (estimated SE) and T' (true SE)",
            params: &[
                "n: int",
                "reps: int >= 100",
                "rhos: [float]",
                "correlation: ar1 | exchangeable = exchangeable",
                "innovation: standard_normal | rademacher | scaled_uniform = standard_normal",
                "column: rademacher | standard_normal = rademacher",
                "beta: float = 1",
                "coupling: common | independent = common",
            ],
        },
    }
}

/// Alphabetical listing of every experiment kind with its parameter schema.
pub fn list_experiments() -> String {
    let mut out = String::new();
    for kind in ExperimentKind::ALL {
        let e = entry(kind);
        out.push_str(&format!("{kind} [{}]\n  {}\n", e.anchor, e.summary));
        for p in e.params {
            out.push_str(&format!("    {p}\n"));
        }
    }
    out.push_str(
        "\ncorrelation table: kind = identity | ar1 | exchangeable | block_exchangeable | custom,\n  \
         with rho (ar1, exchangeable), block_sizes and rhos (block_exchangeable) or rows (custom)\n",
    );
    out
}
