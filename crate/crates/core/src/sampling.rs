//! Random generation of innovations, errors, designs and quadratic forms.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::correlation::{CorrelationMatrix, CorrelationSpec, SquareRoot};
use crate::error::{Error, Result};
use crate::rng::RngStream;

/// Stream ids at or above this value are reserved for fixed design columns.
const FIXED_COLUMN_STREAM: u64 = 0xF1_0000_0000;

/// Zero-mean, unit-variance innovation laws.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Innovation {
    #[default]
    StandardNormal,
    Rademacher,
    /// Uniform on `(-sqrt 3, sqrt 3)`.
    ScaledUniform,
}

impl Innovation {
    #[inline]
    pub fn sample<R: Rng + ?Sized>(self, rng: &mut R) -> f64 {
        match self {
            Innovation::StandardNormal => StandardNormal.sample(rng),
            Innovation::Rademacher => {
                if rng.random::<bool>() {
                    1.0
                } else {
                    -1.0
                }
            }
            Innovation::ScaledUniform => 3.0_f64.sqrt() * (2.0 * rng.random::<f64>() - 1.0),
        }
    }

    pub fn fill<R: Rng + ?Sized>(self, rng: &mut R, out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = self.sample(rng));
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ErrorSpec {
    #[serde(default)]
    pub innovation: Innovation,
    #[serde(default = "one")]
    pub sigma: f64,
    pub correlation: CorrelationSpec,
    #[serde(default)]
    pub square_root: SquareRoot,
}

fn one() -> f64 {
    1.0
}

impl ErrorSpec {
    pub fn new(correlation: CorrelationSpec) -> Self {
        Self { innovation: Innovation::StandardNormal, sigma: 1.0, correlation, square_root: SquareRoot::Cholesky }
    }

    pub fn build(&self, n: usize) -> Result<ErrorModel> {
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::ConfigInvalid(format!("sigma must be positive, got {}", self.sigma)));
        }
        Ok(ErrorModel { spec: self.clone(), correlation: CorrelationMatrix::build(&self.correlation, n)? })
    }
}

/// An error spec with its correlation matrix realized at a fixed `n`.
#[derive(Debug)]
pub struct ErrorModel {
    pub spec: ErrorSpec,
    pub correlation: CorrelationMatrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorDraw {
    pub eps: DVector<f64>,
    pub w: DVector<f64>,
}

impl ErrorModel {
    pub fn n(&self) -> usize {
        self.correlation.n()
    }

    /// `eps = sigma R w` with `w` i.i.d. innovations.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> ErrorDraw {
        let n = self.n();
        let mut w = DVector::zeros(n);
        self.spec.innovation.fill(rng, w.as_mut_slice());
        let mut eps = DVector::zeros(n);
        self.correlation.apply_root_into(self.spec.square_root, w.as_slice(), eps.as_mut_slice());
        eps *= self.spec.sigma;
        ErrorDraw { eps, w }
    }
}

pub fn gen_errors(spec: &ErrorSpec, n: usize, stream: RngStream) -> Result<ErrorDraw> {
    let model = spec.build(n)?;
    Ok(model.draw(&mut stream.rng()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnDist {
    Rademacher,
    StandardNormal,
    ConstantOne,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum ColumnMode {
    RandomPerReplication,
    FixedAcrossReplications { fixed_seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub dist: ColumnDist,
    #[serde(flatten)]
    pub mode: ColumnMode,
}

impl ColumnSpec {
    pub fn random(dist: ColumnDist) -> Self {
        Self { dist, mode: ColumnMode::RandomPerReplication }
    }

    pub fn fixed(dist: ColumnDist, fixed_seed: u64) -> Self {
        Self { dist, mode: ColumnMode::FixedAcrossReplications { fixed_seed } }
    }

    pub fn intercept() -> Self {
        Self { dist: ColumnDist::ConstantOne, mode: ColumnMode::FixedAcrossReplications { fixed_seed: 0 } }
    }

    pub fn is_fixed(&self) -> bool {
        self.dist == ColumnDist::ConstantOne || matches!(self.mode, ColumnMode::FixedAcrossReplications { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignSpec {
    pub columns: Vec<ColumnSpec>,
    /// `Sigma`, applied as `X = Z Sigma^{1/2}` (symmetric root).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mixing: Option<Vec<Vec<f64>>>,
}

impl DesignSpec {
    pub fn new(columns: Vec<ColumnSpec>) -> Self {
        Self { columns, mixing: None }
    }

    pub fn d(&self) -> usize {
        self.columns.len()
    }

    /// Same spec with every fixed column re-keyed to `fixed_seed`.
    pub fn with_fixed_seed(&self, fixed_seed: u64) -> Self {
        let mut out = self.clone();
        for c in &mut out.columns {
            if let ColumnMode::FixedAcrossReplications { fixed_seed: s } = &mut c.mode {
                *s = fixed_seed;
            }
        }
        out
    }

    pub fn has_fixed(&self) -> bool {
        self.columns.iter().any(ColumnSpec::is_fixed)
    }

    pub fn has_random(&self) -> bool {
        self.columns.iter().any(|c| !c.is_fixed())
    }

    /// `Sigma` as a dense matrix, identity when absent.
    pub fn mixing_matrix(&self) -> DMatrix<f64> {
        let d = self.d();
        match &self.mixing {
            Some(rows) => DMatrix::from_fn(d, d, |i, j| rows[i][j]),
            None => DMatrix::identity(d, d),
        }
    }

    pub fn realize(&self, n: usize) -> Result<Design> {
        let d = self.d();
        if d == 0 {
            return Err(Error::ConfigInvalid("design needs at least one column".into()));
        }
        if n <= d {
            return Err(Error::ConfigInvalid(format!("design needs n > d, got n = {n}, d = {d}")));
        }
        let mixing_root = match &self.mixing {
            None => None,
            Some(rows) => {
                if rows.len() != d || rows.iter().any(|r| r.len() != d) {
                    return Err(Error::ConfigInvalid(format!("mixing matrix must be {d} x {d}")));
                }
                let sigma = self.mixing_matrix();
                if (&sigma - sigma.transpose()).abs().max() > 1e-12 * sigma.abs().max().max(1.0) {
                    return Err(Error::ConfigInvalid("mixing matrix must be symmetric".into()));
                }
                let eigen = SymmetricEigen::new(sigma);
                if eigen.eigenvalues.iter().any(|&v| v <= 0.0) {
                    return Err(Error::ConfigInvalid("mixing matrix must be positive definite".into()));
                }
                let q = &eigen.eigenvectors;
                Some(q * DMatrix::from_diagonal(&eigen.eigenvalues.map(f64::sqrt)) * q.transpose())
            }
        };
        let fixed = self
            .columns
            .iter()
            .enumerate()
            .map(|(j, c)| match (c.dist, c.mode) {
                (ColumnDist::ConstantOne, _) => Some(DVector::from_element(n, 1.0)),
                (dist, ColumnMode::FixedAcrossReplications { fixed_seed }) => {
                    let mut rng = RngStream::new(fixed_seed, FIXED_COLUMN_STREAM + j as u64).rng();
                    Some(DVector::from_fn(n, |_, _| sample_column_entry(dist, &mut rng)))
                }
                (_, ColumnMode::RandomPerReplication) => None,
            })
            .collect();
        let design = Design { spec: self.clone(), n, fixed, mixing_root };
        if !self.has_random() {
            // Redrawing cannot repair a rank-deficient all-fixed design.
            check_rank(&design.draw_once(&mut RngStream::new(0, 0).rng()))?;
        }
        Ok(design)
    }
}

fn sample_column_entry<R: Rng + ?Sized>(dist: ColumnDist, rng: &mut R) -> f64 {
    match dist {
        ColumnDist::Rademacher => Innovation::Rademacher.sample(rng),
        ColumnDist::StandardNormal => Innovation::StandardNormal.sample(rng),
        ColumnDist::ConstantOne => 1.0,
    }
}

/// A design spec realized at a fixed `n`: fixed columns drawn once.
#[derive(Debug, Clone)]
pub struct Design {
    spec: DesignSpec,
    n: usize,
    fixed: Vec<Option<DVector<f64>>>,
    mixing_root: Option<DMatrix<f64>>,
}

impl Design {
    pub fn spec(&self) -> &DesignSpec {
        &self.spec
    }

    fn draw_once<R: Rng + ?Sized>(&self, rng: &mut R) -> DMatrix<f64> {
        let d = self.spec.d();
        let mut z = DMatrix::zeros(self.n, d);
        for (j, col) in self.spec.columns.iter().enumerate() {
            match &self.fixed[j] {
                Some(v) => z.set_column(j, v),
                None => z.column_mut(j).iter_mut().for_each(|e| *e = sample_column_entry(col.dist, rng)),
            }
        }
        match &self.mixing_root {
            Some(root) => z * root,
            None => z,
        }
    }

    /// Draws `X`, regenerating once if the draw is numerically rank deficient.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<DMatrix<f64>> {
        let x = self.draw_once(rng);
        match check_rank(&x) {
            Ok(()) => Ok(x),
            Err(_) => {
                let x = self.draw_once(rng);
                check_rank(&x).map(|()| x)
            }
        }
    }
}

fn check_rank(x: &DMatrix<f64>) -> Result<()> {
    let n = x.nrows();
    let sv = x.clone().qr().r().singular_values();
    let tolerance = n as f64 * f64::EPSILON * sv.max();
    let smallest = sv.min();
    if smallest > tolerance {
        Ok(())
    } else {
        Err(Error::RankDeficient { smallest, tolerance })
    }
}

pub fn gen_design(spec: &DesignSpec, n: usize, stream: RngStream) -> Result<DMatrix<f64>> {
    spec.realize(n)?.draw(&mut stream.rng())
}

/// `eps / ||eps||_2`.
pub fn self_normalize(eps: &[f64]) -> Result<Vec<f64>> {
    let norm = eps.iter().map(|v| v * v).sum::<f64>().sqrt();
    if !(norm > 0.0) {
        return Err(Error::ZeroVector);
    }
    Ok(eps.iter().map(|v| v / norm).collect())
}

/// `count` draws of `||L w||^2 / n`, the realized `eps^T eps / (n sigma^2)`.
///
/// Draw `i` uses child stream `i`, so the result does not depend on the
/// thread count.
pub fn sample_delta(m: &CorrelationMatrix, innovation: Innovation, count: usize, stream: RngStream) -> Vec<f64> {
    let n = m.n();
    (0..count as u64)
        .into_par_iter()
        .map_init(
            || (vec![0.0; n], vec![0.0; n]),
            |(w, e), i| {
                let mut rng = stream.child(i).rng();
                innovation.fill(&mut rng, w);
                m.apply_root_into(SquareRoot::Cholesky, w, e);
                e.iter().map(|v| v * v).sum::<f64>() / n as f64
            },
        )
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_errors_equal_innovations() {
        let spec = ErrorSpec::new(CorrelationSpec::Identity);
        let draw = gen_errors(&spec, 50, RngStream::new(1, 2)).unwrap();
        assert_eq!(draw.eps, draw.w);
    }

    #[test]
    fn rademacher_support() {
        let mut spec = ErrorSpec::new(CorrelationSpec::Ar1 { rho: 0.3 });
        spec.innovation = Innovation::Rademacher;
        let draw = gen_errors(&spec, 200, RngStream::new(3, 0)).unwrap();
        assert!(draw.w.iter().all(|&v| v == 1.0 || v == -1.0));
    }

    #[test]
    fn scaled_uniform_support() {
        let mut rng = RngStream::new(4, 0).rng();
        let b = 3.0_f64.sqrt();
        assert!((0..10_000).all(|_| Innovation::ScaledUniform.sample(&mut rng).abs() < b));
    }

    #[test]
    fn errors_propagate_build_failure() {
        let spec = ErrorSpec::new(CorrelationSpec::Exchangeable { rho: 1.5 });
        assert!(matches!(gen_errors(&spec, 10, RngStream::new(0, 0)), Err(Error::SpecInvalid(_))));
    }

    #[test]
    fn constant_column() {
        let spec = DesignSpec::new(vec![ColumnSpec::intercept()]);
        let x = gen_design(&spec, 10, RngStream::new(0, 0)).unwrap();
        assert!(x.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn random_rademacher_column_fresh_per_replication() {
        let spec = DesignSpec::new(vec![ColumnSpec::random(ColumnDist::Rademacher)]);
        let a = gen_design(&spec, 100, RngStream::new(9, 0)).unwrap();
        let b = gen_design(&spec, 100, RngStream::new(9, 1)).unwrap();
        assert!(a.iter().all(|&v| v == 1.0 || v == -1.0));
        assert_ne!(a, b);
    }

    #[test]
    fn mixed_design_fixed_column_shared() {
        let spec = DesignSpec::new(vec![
            ColumnSpec::intercept(),
            ColumnSpec::fixed(ColumnDist::Rademacher, 42),
            ColumnSpec::random(ColumnDist::Rademacher),
        ]);
        let a = gen_design(&spec, 100, RngStream::new(5, 0)).unwrap();
        let b = gen_design(&spec, 100, RngStream::new(5, 1)).unwrap();
        assert_eq!(a.column(0), b.column(0));
        assert_eq!(a.column(1), b.column(1));
        assert_ne!(a.column(2), b.column(2));

        let other = gen_design(&spec.with_fixed_seed(43), 100, RngStream::new(5, 0)).unwrap();
        assert_ne!(a.column(1), other.column(1));
        assert_eq!(a.column(2), other.column(2));
    }

    #[test]
    fn design_requires_n_above_d() {
        let spec = DesignSpec::new(vec![ColumnSpec::intercept(), ColumnSpec::random(ColumnDist::StandardNormal)]);
        assert!(matches!(spec.realize(2), Err(Error::ConfigInvalid(_))));
    }

    #[test]
    fn duplicate_fixed_columns_rank_deficient() {
        let spec = DesignSpec::new(vec![ColumnSpec::intercept(), ColumnSpec::intercept()]);
        assert!(matches!(gen_design(&spec, 10, RngStream::new(0, 0)), Err(Error::RankDeficient { .. })));
    }

    #[test]
    fn mixing_applies_symmetric_root() {
        let mut spec = DesignSpec::new(vec![
            ColumnSpec::random(ColumnDist::StandardNormal),
            ColumnSpec::random(ColumnDist::StandardNormal),
        ]);
        spec.mixing = Some(vec![vec![4.0, 0.0], vec![0.0, 9.0]]);
        let x = gen_design(&spec, 20, RngStream::new(1, 1)).unwrap();
        let z = gen_design(&DesignSpec { mixing: None, ..spec.clone() }, 20, RngStream::new(1, 1)).unwrap();
        for i in 0..20 {
            assert!((x[(i, 0)] - 2.0 * z[(i, 0)]).abs() < 1e-12);
            assert!((x[(i, 1)] - 3.0 * z[(i, 1)]).abs() < 1e-12);
        }
        spec.mixing = Some(vec![vec![1.0, 2.0], vec![2.0, 1.0]]);
        assert!(matches!(spec.realize(20), Err(Error::ConfigInvalid(_))));
    }

    #[test]
    fn self_normalize_examples() {
        assert_eq!(self_normalize(&[3.0, 4.0]).unwrap(), vec![0.6, 0.8]);
        assert_eq!(self_normalize(&[0.0, 0.0]), Err(Error::ZeroVector));
    }

    #[test]
    fn delta_identity_mean() {
        let m = CorrelationMatrix::build(&CorrelationSpec::Identity, 200).unwrap();
        let count = 4000;
        let draws = sample_delta(&m, Innovation::StandardNormal, count, RngStream::new(11, 0));
        let mean = draws.iter().sum::<f64>() / count as f64;
        assert!((mean - 1.0).abs() < 3.0 * (2.0 / 200.0 / count as f64).sqrt());
    }

    #[test]
    fn delta_exchangeable_zero_matches_identity() {
        let id = CorrelationMatrix::build(&CorrelationSpec::Identity, 30).unwrap();
        let ex = CorrelationMatrix::build(&CorrelationSpec::Exchangeable { rho: 0.0 }, 30).unwrap();
        let a = sample_delta(&id, Innovation::StandardNormal, 50, RngStream::new(2, 2));
        let b = sample_delta(&ex, Innovation::StandardNormal, 50, RngStream::new(2, 2));
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-14);
        }
    }

    #[test]
    fn delta_thread_count_invariant() {
        let m = CorrelationMatrix::build(&CorrelationSpec::Ar1 { rho: 0.6 }, 64).unwrap();
        let serial = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let wide = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let a = serial.install(|| sample_delta(&m, Innovation::Rademacher, 300, RngStream::new(8, 1)));
        let b = wide.install(|| sample_delta(&m, Innovation::Rademacher, 300, RngStream::new(8, 1)));
        assert_eq!(a, b);
    }
}
