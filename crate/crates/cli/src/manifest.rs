//! Experiment manifests.
//!
//! A manifest is a TOML document with top-level `kind`, `seed` and
//! `output_dir` keys and a `[params]` table whose schema depends on `kind`.

use std::fmt;
use std::path::{Path, PathBuf};

use robust_ols::{ColumnDist, CorrelationSpec, Innovation};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    AsymptoticPower,
    Coverage,
    DeltaDist,
    GainBoundary,
    MixedDesign,
    Power,
    RateDecay,
    SelfnormTail,
    TstatDensity,
}

impl ExperimentKind {
    /// Every kind, in alphabetical order of its name.
    pub const ALL: [ExperimentKind; 9] = [
        ExperimentKind::AsymptoticPower,
        ExperimentKind::Coverage,
        ExperimentKind::DeltaDist,
        ExperimentKind::GainBoundary,
        ExperimentKind::MixedDesign,
        ExperimentKind::Power,
        ExperimentKind::RateDecay,
        ExperimentKind::SelfnormTail,
        ExperimentKind::TstatDensity,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::AsymptoticPower => "asymptotic-power",
            ExperimentKind::Coverage => "coverage",
            ExperimentKind::DeltaDist => "delta-dist",
            ExperimentKind::GainBoundary => "gain-boundary",
            ExperimentKind::MixedDesign => "mixed-design",
            ExperimentKind::Power => "power",
            ExperimentKind::RateDecay => "rate-decay",
            ExperimentKind::SelfnormTail => "selfnorm-tail",
            ExperimentKind::TstatDensity => "tstat-density",
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Correlation family swept over a grid of `rho` values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    #[default]
    Ar1,
    Exchangeable,
}

impl Family {
    pub fn spec(self, rho: f64) -> CorrelationSpec {
        match self {
            Family::Ar1 => CorrelationSpec::Ar1 { rho },
            Family::Exchangeable => CorrelationSpec::Exchangeable { rho },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DesignMode {
    Random,
    Fixed,
}

impl DesignMode {
    pub fn name(self) -> &'static str {
        match self {
            DesignMode::Random => "random",
            DesignMode::Fixed => "fixed",
        }
    }
}

/// How replication streams relate across the points of a `rho` sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Coupling {
    /// Every grid point reuses the same replication streams.
    #[default]
    Common,
    Independent,
}

fn one() -> f64 {
    1.0
}
fn two_sided_critical() -> f64 {
    1.96
}
fn level() -> f64 {
    0.05
}
fn rademacher() -> ColumnDist {
    ColumnDist::Rademacher
}
fn both_modes() -> Vec<DesignMode> {
    vec![DesignMode::Random, DesignMode::Fixed]
}
fn one_draw() -> usize {
    1
}
fn default_fixed_seed() -> u64 {
    1
}
fn exchangeable() -> Family {
    Family::Exchangeable
}
fn three() -> usize {
    3
}
fn band() -> f64 {
    0.06
}
fn delta_threshold() -> f64 {
    robust_ols::correlation::DEFAULT_DELTA_THRESHOLD
}
fn unit_betas() -> Vec<f64> {
    vec![1.0, 1.0, 1.0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoverageParams {
    pub n: usize,
    pub reps: usize,
    pub rhos: Vec<f64>,
    #[serde(default)]
    pub correlation: Family,
    #[serde(default)]
    pub innovation: Innovation,
    #[serde(default = "rademacher")]
    pub column: ColumnDist,
    #[serde(default = "one")]
    pub beta: f64,
    #[serde(default = "two_sided_critical")]
    pub critical_value: f64,
    #[serde(default = "both_modes")]
    pub design_modes: Vec<DesignMode>,
    #[serde(default = "default_fixed_seed")]
    pub fixed_seed: u64,
    /// Number of independent fixed designs; draw `k` uses `fixed_seed + k`.
    #[serde(default = "one_draw")]
    pub fixed_draws: usize,
    #[serde(default)]
    pub coupling: Coupling,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerParams {
    pub n: usize,
    pub reps: usize,
    /// Exchangeable correlations.
    pub rhos: Vec<f64>,
    pub h_grid: Vec<f64>,
    #[serde(default = "level")]
    pub level: f64,
    #[serde(default)]
    pub innovation: Innovation,
    #[serde(default = "rademacher")]
    pub column: ColumnDist,
    #[serde(default)]
    pub coupling: Coupling,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TstatDensityParams {
    pub n: usize,
    pub reps: usize,
    pub rhos: Vec<f64>,
    #[serde(default = "exchangeable")]
    pub correlation: Family,
    #[serde(default)]
    pub innovation: Innovation,
    #[serde(default = "rademacher")]
    pub column: ColumnDist,
    #[serde(default = "one")]
    pub beta: f64,
    #[serde(default)]
    pub coupling: Coupling,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeltaDistParams {
    pub correlations: Vec<CorrelationSpec>,
    pub n_grid: Vec<usize>,
    pub draws: usize,
    #[serde(default)]
    pub innovation: Innovation,
    /// Eigenvalue share below which a direction counts as vanishing.
    #[serde(default = "delta_threshold")]
    pub threshold: f64,
    /// Half-width of the band around 1 reported as `band_fraction`.
    #[serde(default = "band")]
    pub band: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AsymptoticPowerParams {
    pub rhos: Vec<f64>,
    pub h_grid: Vec<f64>,
    #[serde(default = "level")]
    pub level: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GainBoundaryParams {
    pub rhos: Vec<f64>,
    #[serde(default = "level")]
    pub level: f64,
    pub h_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RateDecayParams {
    pub correlation: CorrelationSpec,
    pub n_grid: Vec<usize>,
    pub reps: usize,
    /// Number of independent seeds derived from the manifest seed.
    #[serde(default = "three")]
    pub seeds: usize,
    #[serde(default)]
    pub innovation: Innovation,
    #[serde(default = "rademacher")]
    pub column: ColumnDist,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixedDesignParams {
    pub n: usize,
    pub reps: usize,
    /// AR(1) correlations for the coverage sweep.
    pub rhos: Vec<f64>,
    /// AR(1) correlations at which `T_j` samples are written.
    #[serde(default)]
    pub density_rhos: Vec<f64>,
    #[serde(default = "default_fixed_seed")]
    pub fixed_seed: u64,
    #[serde(default = "unit_betas")]
    pub beta: Vec<f64>,
    #[serde(default = "two_sided_critical")]
    pub critical_value: f64,
    #[serde(default)]
    pub innovation: Innovation,
    #[serde(default)]
    pub coupling: Coupling,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SelfnormTailParams {
    pub n: usize,
    pub reps: usize,
    pub correlations: Vec<CorrelationSpec>,
    pub t_grid: Vec<f64>,
    #[serde(default)]
    pub innovation: Innovation,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Params {
    AsymptoticPower(AsymptoticPowerParams),
    Coverage(CoverageParams),
    DeltaDist(DeltaDistParams),
    GainBoundary(GainBoundaryParams),
    MixedDesign(MixedDesignParams),
    Power(PowerParams),
    RateDecay(RateDecayParams),
    SelfnormTail(SelfnormTailParams),
    TstatDensity(TstatDensityParams),
}

impl Params {
    pub fn kind(&self) -> ExperimentKind {
        match self {
            Params::AsymptoticPower(_) => ExperimentKind::AsymptoticPower,
            Params::Coverage(_) => ExperimentKind::Coverage,
            Params::DeltaDist(_) => ExperimentKind::DeltaDist,
            Params::GainBoundary(_) => ExperimentKind::GainBoundary,
            Params::MixedDesign(_) => ExperimentKind::MixedDesign,
            Params::Power(_) => ExperimentKind::Power,
            Params::RateDecay(_) => ExperimentKind::RateDecay,
            Params::SelfnormTail(_) => ExperimentKind::SelfnormTail,
            Params::TstatDensity(_) => ExperimentKind::TstatDensity,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunManifest {
    pub seed: u64,
    pub output_dir: PathBuf,
    pub params: Params,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ManifestError {
    Read { path: PathBuf, message: String },
    /// Syntax or schema error; the message carries the line and field.
    Parse(String),
}

impl fmt::Display for ManifestError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ManifestError::Read { path, message } => write!(f, "cannot read manifest {}: {message}", path.display()),
            ManifestError::Parse(message) => write!(f, "invalid manifest: {message}"),
        }
    }
}

impl std::error::Error for ManifestError {}

#[derive(Deserialize)]
struct KindOnly {
    kind: ExperimentKind,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Document<P> {
    #[allow(dead_code)]
    kind: ExperimentKind,
    seed: u64,
    output_dir: Option<PathBuf>,
    params: P,
}

#[derive(Serialize)]
struct DocumentRef<'a, P> {
    kind: ExperimentKind,
    seed: u64,
    output_dir: &'a Path,
    params: &'a P,
}

fn typed<P: DeserializeOwned>(text: &str, wrap: fn(P) -> Params, kind: ExperimentKind) -> Result<RunManifest, ManifestError> {
    let doc: Document<P> = toml::from_str(text).map_err(|e| ManifestError::Parse(e.to_string()))?;
    Ok(RunManifest {
        seed: doc.seed,
        output_dir: doc.output_dir.unwrap_or_else(|| PathBuf::from("out").join(kind.name())),
        params: wrap(doc.params),
    })
}

impl RunManifest {
    pub fn kind(&self) -> ExperimentKind {
        self.params.kind()
    }

    pub fn from_toml_str(text: &str) -> Result<Self, ManifestError> {
        // The kind selects the schema for the rest of the document, so it is
        // read on its own first. Unknown keys are reported by the second pass.
        let head: toml::Table = toml::from_str(text).map_err(|e| ManifestError::Parse(e.to_string()))?;
        let mut only_kind = toml::Table::new();
        match head.get("kind") {
            Some(v) => only_kind.insert("kind".into(), v.clone()),
            None => return Err(ManifestError::Parse("missing field `kind`".into())),
        };
        let kind = only_kind
            .try_into::<KindOnly>()
            .map_err(|e| ManifestError::Parse(format!("field `kind`: {e}")))?
            .kind;
        match kind {
            ExperimentKind::AsymptoticPower => typed(text, Params::AsymptoticPower, kind),
            ExperimentKind::Coverage => typed(text, Params::Coverage, kind),
            ExperimentKind::DeltaDist => typed(text, Params::DeltaDist, kind),
            ExperimentKind::GainBoundary => typed(text, Params::GainBoundary, kind),
            ExperimentKind::MixedDesign => typed(text, Params::MixedDesign, kind),
            ExperimentKind::Power => typed(text, Params::Power, kind),
            ExperimentKind::RateDecay => typed(text, Params::RateDecay, kind),
            ExperimentKind::SelfnormTail => typed(text, Params::SelfnormTail, kind),
            ExperimentKind::TstatDensity => typed(text, Params::TstatDensity, kind),
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ManifestError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| ManifestError::Read { path: path.to_path_buf(), message: e.to_string() })?;
        Self::from_toml_str(&text)
    }

    fn with_document<R>(&self, f: impl FnOnce(&dyn erased::Doc) -> R) -> R {
        let kind = self.kind();
        let (seed, output_dir) = (self.seed, self.output_dir.as_path());
        macro_rules! doc {
            ($p:expr) => {
                f(&DocumentRef { kind, seed, output_dir, params: $p })
            };
        }
        match &self.params {
            Params::AsymptoticPower(p) => doc!(p),
            Params::Coverage(p) => doc!(p),
            Params::DeltaDist(p) => doc!(p),
            Params::GainBoundary(p) => doc!(p),
            Params::MixedDesign(p) => doc!(p),
            Params::Power(p) => doc!(p),
            Params::RateDecay(p) => doc!(p),
            Params::SelfnormTail(p) => doc!(p),
            Params::TstatDensity(p) => doc!(p),
        }
    }

    pub fn to_toml_string(&self) -> String {
        self.with_document(|d| d.toml())
    }

    pub fn to_json(&self) -> serde_json::Value {
        self.with_document(|d| d.json())
    }
}

mod erased {
    use super::DocumentRef;
    use serde::Serialize;

    pub trait Doc {
        fn toml(&self) -> String;
        fn json(&self) -> serde_json::Value;
    }

    impl<P: Serialize> Doc for DocumentRef<'_, P> {
        fn toml(&self) -> String {
            toml::to_string(self).expect("manifest parameters serialize to TOML")
        }

        fn json(&self) -> serde_json::Value {
            serde_json::to_value(self).expect("manifest parameters serialize to JSON")
        }
    }
}
