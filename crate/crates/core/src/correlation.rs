//! Error correlation structures.
//!
//! Every matrix is normalized to `tr(V) = n`. The built-in kinds carry
//! closed-form Cholesky factors, so applying the factor to a vector is O(n)
//! and no dense `n x n` storage is needed unless a caller asks for it:
//!
//! - AR(1): `(Lw)_0 = w_0`, `(Lw)_t = rho (Lw)_{t-1} + sqrt(1 - rho^2) w_t`.
//! - Exchangeable `(1 - rho) I + rho 11^T`: column `j` of `L` is
//!   `sqrt(a + b_j)` on the diagonal and `b_j / sqrt(a + b_j)` below it, with
//!   `a = 1 - rho`, `b_0 = rho` and `b_{j+1} = a b_j / (a + b_j)`.
//! - Block exchangeable: the exchangeable factor per diagonal block.
//!
//! Custom matrices are factored densely.

use std::path::Path;
use std::sync::OnceLock;

use nalgebra::{Cholesky, DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_DELTA_THRESHOLD: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CorrelationSpec {
    Identity,
    Ar1 {
        rho: f64,
    },
    Exchangeable {
        rho: f64,
    },
    BlockExchangeable {
        block_sizes: Vec<usize>,
        rhos: Vec<f64>,
    },
    /// Dense symmetric matrix, row-major. Rescaled to trace `n` on build.
    Custom {
        rows: Vec<Vec<f64>>,
    },
}

impl CorrelationSpec {
    /// Reads a header-free, row-major dense CSV file.
    pub fn custom_from_csv(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::custom_from_csv_str(&text)
    }

    pub fn custom_from_csv_str(text: &str) -> Result<Self> {
        let mut rows = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let row = line
                .split(',')
                .map(|f| {
                    f.trim().parse::<f64>().map_err(|e| {
                        Error::SpecInvalid(format!("line {}: cannot parse {:?}: {e}", lineno + 1, f.trim()))
                    })
                })
                .collect::<Result<Vec<f64>>>()?;
            rows.push(row);
        }
        Ok(CorrelationSpec::Custom { rows })
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if n < 2 {
            return Err(Error::SpecInvalid(format!("need n >= 2, got {n}")));
        }
        match self {
            CorrelationSpec::Identity => Ok(()),
            CorrelationSpec::Ar1 { rho } => {
                if rho.is_finite() && rho.abs() < 1.0 {
                    Ok(())
                } else {
                    Err(Error::SpecInvalid(format!("AR(1) rho must lie in (-1, 1), got {rho}")))
                }
            }
            CorrelationSpec::Exchangeable { rho } => check_exchangeable_rho(*rho),
            CorrelationSpec::BlockExchangeable { block_sizes, rhos } => {
                if block_sizes.len() != rhos.len() {
                    return Err(Error::SpecInvalid(format!(
                        "{} block sizes but {} block correlations",
                        block_sizes.len(),
                        rhos.len()
                    )));
                }
                if block_sizes.contains(&0) {
                    return Err(Error::SpecInvalid("block sizes must be positive".into()));
                }
                let total: usize = block_sizes.iter().sum();
                if total != n {
                    return Err(Error::SpecInvalid(format!("block sizes sum to {total}, expected n = {n}")));
                }
                rhos.iter().try_for_each(|&r| check_exchangeable_rho(r))
            }
            CorrelationSpec::Custom { rows } => {
                if rows.len() != n || rows.iter().any(|r| r.len() != n) {
                    return Err(Error::SpecInvalid(format!("custom matrix must be {n} x {n}")));
                }
                if rows.iter().flatten().any(|v| !v.is_finite()) {
                    return Err(Error::SpecInvalid("custom matrix has non-finite entries".into()));
                }
                let scale = rows.iter().flatten().fold(1.0_f64, |m, v| m.max(v.abs()));
                for i in 0..n {
                    for j in 0..i {
                        if (rows[i][j] - rows[j][i]).abs() > 1e-12 * scale {
                            return Err(Error::SpecInvalid(format!("custom matrix not symmetric at ({i}, {j})")));
                        }
                    }
                }
                Ok(())
            }
        }
    }
}

fn check_exchangeable_rho(rho: f64) -> Result<()> {
    if rho.is_finite() && (0.0..1.0).contains(&rho) {
        Ok(())
    } else {
        Err(Error::SpecInvalid(format!("exchangeable rho must lie in [0, 1), got {rho}")))
    }
}

/// Which square root of `V` maps innovations to errors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SquareRoot {
    /// Lower Cholesky factor. Same law as the symmetric root for
    /// rotation-invariant (Gaussian) innovations.
    #[default]
    Cholesky,
    /// Symmetric root `V^{1/2}`.
    Symmetric,
}

#[derive(Debug, Clone)]
struct ExchangeableBlock {
    start: usize,
    rho: f64,
    diag: Vec<f64>,
    below: Vec<f64>,
}

impl ExchangeableBlock {
    fn new(start: usize, len: usize, rho: f64) -> Self {
        let a = 1.0 - rho;
        let mut b = rho;
        let mut diag = Vec::with_capacity(len);
        let mut below = Vec::with_capacity(len);
        for _ in 0..len {
            let dj = (a + b).sqrt();
            diag.push(dj);
            below.push(b / dj);
            b = a * b / (a + b);
        }
        Self { start, rho, diag, below }
    }

    fn len(&self) -> usize {
        self.diag.len()
    }

    fn apply_cholesky(&self, w: &[f64], out: &mut [f64]) {
        let mut acc = 0.0;
        for k in 0..self.len() {
            let i = self.start + k;
            out[i] = self.diag[k] * w[i] + acc;
            acc += self.below[k] * w[i];
        }
    }

    fn apply_symmetric(&self, w: &[f64], out: &mut [f64]) {
        // V^{1/2} = sqrt(1 - rho) I + c 11^T on the block.
        let m = self.len() as f64;
        let s = (1.0 - self.rho).sqrt();
        let c = ((m * self.rho + 1.0 - self.rho).sqrt() - s) / m;
        let range = self.start..self.start + self.len();
        let sum: f64 = w[range.clone()].iter().sum();
        for i in range {
            out[i] = s * w[i] + c * sum;
        }
    }

    fn eigenvalues(&self) -> impl Iterator<Item = f64> {
        let m = self.len();
        let top = m as f64 * self.rho + 1.0 - self.rho;
        std::iter::once(top).chain(std::iter::repeat_n(1.0 - self.rho, m - 1))
    }
}

#[derive(Debug, Clone)]
enum Structure {
    Identity,
    Ar1 { rho: f64 },
    Blocks(Vec<ExchangeableBlock>),
    Dense { matrix: DMatrix<f64>, lower: DMatrix<f64>, eigen: SymmetricEigen<f64, nalgebra::Dyn> },
}

/// A realized correlation matrix with trace `n`.
///
/// Immutable after construction. Dense views, the symmetric root and (for
/// AR(1)) the spectrum are computed on first use and cached.
#[derive(Debug)]
pub struct CorrelationMatrix {
    n: usize,
    spec: CorrelationSpec,
    structure: Structure,
    eigenvalues: OnceLock<Vec<f64>>,
    dense: OnceLock<DMatrix<f64>>,
    symmetric_root: OnceLock<DMatrix<f64>>,
}

impl CorrelationMatrix {
    pub fn build(spec: &CorrelationSpec, n: usize) -> Result<Self> {
        spec.validate(n)?;
        let eigenvalues = OnceLock::new();
        let structure = match spec {
            CorrelationSpec::Identity => Structure::Identity,
            CorrelationSpec::Ar1 { rho } => Structure::Ar1 { rho: *rho },
            CorrelationSpec::Exchangeable { rho } => Structure::Blocks(vec![ExchangeableBlock::new(0, n, *rho)]),
            CorrelationSpec::BlockExchangeable { block_sizes, rhos } => {
                let mut start = 0;
                let blocks = block_sizes
                    .iter()
                    .zip(rhos)
                    .map(|(&len, &rho)| {
                        let b = ExchangeableBlock::new(start, len, rho);
                        start += len;
                        b
                    })
                    .collect();
                Structure::Blocks(blocks)
            }
            CorrelationSpec::Custom { rows } => {
                let raw = DMatrix::from_fn(n, n, |i, j| rows[i][j]);
                let (matrix, lower) = factor_dense(raw, n)?;
                let eigen = SymmetricEigen::new(matrix.clone());
                let mut values: Vec<f64> = eigen.eigenvalues.iter().copied().collect();
                values.sort_by(|a, b| b.total_cmp(a));
                if values[n - 1] <= 0.0 {
                    return Err(Error::NotPositiveDefinite(format!(
                        "smallest eigenvalue {:e} after trace normalization",
                        values[n - 1]
                    )));
                }
                let _ = eigenvalues.set(values);
                Structure::Dense { matrix, lower, eigen }
            }
        };
        let built = Self {
            n,
            spec: spec.clone(),
            structure,
            eigenvalues,
            dense: OnceLock::new(),
            symmetric_root: OnceLock::new(),
        };
        if matches!(built.structure, Structure::Identity | Structure::Blocks(_)) {
            let _ = built.eigenvalues.set(built.closed_form_eigenvalues());
        }
        Ok(built)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn spec(&self) -> &CorrelationSpec {
        &self.spec
    }

    /// Dense `V`.
    pub fn matrix(&self) -> &DMatrix<f64> {
        self.dense.get_or_init(|| match &self.structure {
            Structure::Identity => DMatrix::identity(self.n, self.n),
            Structure::Ar1 { rho } => DMatrix::from_fn(self.n, self.n, |i, j| rho.powi(i.abs_diff(j) as i32)),
            Structure::Blocks(blocks) => {
                let mut m = DMatrix::zeros(self.n, self.n);
                for b in blocks {
                    for i in b.start..b.start + b.len() {
                        for j in b.start..b.start + b.len() {
                            m[(i, j)] = if i == j { 1.0 } else { b.rho };
                        }
                    }
                }
                m
            }
            Structure::Dense { matrix, .. } => matrix.clone(),
        })
    }

    pub fn trace(&self) -> f64 {
        match &self.structure {
            Structure::Dense { matrix, .. } => matrix.trace(),
            _ => self.n as f64,
        }
    }

    /// Dense lower Cholesky factor.
    pub fn cholesky_lower(&self) -> DMatrix<f64> {
        let n = self.n;
        match &self.structure {
            Structure::Identity => DMatrix::identity(n, n),
            Structure::Ar1 { rho } => {
                let s = (1.0 - rho * rho).sqrt();
                DMatrix::from_fn(n, n, |i, j| match (i >= j, j) {
                    (false, _) => 0.0,
                    (true, 0) => rho.powi(i as i32),
                    (true, _) => s * rho.powi((i - j) as i32),
                })
            }
            Structure::Blocks(blocks) => {
                let mut l = DMatrix::zeros(n, n);
                for b in blocks {
                    for k in 0..b.len() {
                        let j = b.start + k;
                        l[(j, j)] = b.diag[k];
                        for i in j + 1..b.start + b.len() {
                            l[(i, j)] = b.below[k];
                        }
                    }
                }
                l
            }
            Structure::Dense { lower, .. } => lower.clone(),
        }
    }

    /// Writes `R w` into `out`, with `R` the requested square root.
    pub fn apply_root_into(&self, root: SquareRoot, w: &[f64], out: &mut [f64]) {
        assert_eq!(w.len(), self.n, "innovation length must equal n");
        assert_eq!(out.len(), self.n, "output length must equal n");
        match (&self.structure, root) {
            (Structure::Identity, _) => out.copy_from_slice(w),
            (Structure::Ar1 { rho }, SquareRoot::Cholesky) => {
                let s = (1.0 - rho * rho).sqrt();
                out[0] = w[0];
                for t in 1..self.n {
                    out[t] = rho * out[t - 1] + s * w[t];
                }
            }
            (Structure::Blocks(blocks), SquareRoot::Cholesky) => {
                blocks.iter().for_each(|b| b.apply_cholesky(w, out));
            }
            (Structure::Blocks(blocks), SquareRoot::Symmetric) => {
                blocks.iter().for_each(|b| b.apply_symmetric(w, out));
            }
            (Structure::Dense { lower, .. }, SquareRoot::Cholesky) => dense_matvec(lower, w, out, true),
            (_, SquareRoot::Symmetric) => dense_matvec(self.symmetric_root(), w, out, false),
        }
    }

    pub fn apply_root(&self, root: SquareRoot, w: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        self.apply_root_into(root, w, &mut out);
        out
    }

    fn symmetric_root(&self) -> &DMatrix<f64> {
        self.symmetric_root.get_or_init(|| {
            let eigen = match &self.structure {
                Structure::Dense { eigen, .. } => eigen.clone(),
                _ => SymmetricEigen::new(self.matrix().clone()),
            };
            let q = &eigen.eigenvectors;
            let sqrt_vals = eigen.eigenvalues.map(|v| v.max(0.0).sqrt());
            q * DMatrix::from_diagonal(&sqrt_vals) * q.transpose()
        })
    }

    /// Eigenvalues in descending order.
    pub fn eigenvalues(&self) -> &[f64] {
        self.eigenvalues.get_or_init(|| match &self.structure {
            Structure::Ar1 { rho } => ar1_eigenvalues(*rho, self.n),
            _ => unreachable!("closed-form and dense spectra are set at build"),
        })
    }

    pub fn lambda_min(&self) -> f64 {
        match (&self.structure, self.eigenvalues.get()) {
            (_, Some(v)) => v[self.n - 1],
            (Structure::Ar1 { rho }, None) => 1.0 / ar1_precision_eigenvalue(*rho, self.n, self.n - 1),
            _ => self.eigenvalues()[self.n - 1],
        }
    }

    pub fn lambda_max(&self) -> f64 {
        match (&self.structure, self.eigenvalues.get()) {
            (_, Some(v)) => v[0],
            (Structure::Ar1 { rho }, None) => 1.0 / ar1_precision_eigenvalue(*rho, self.n, 0),
            _ => self.eigenvalues()[0],
        }
    }

    fn closed_form_eigenvalues(&self) -> Vec<f64> {
        let mut values: Vec<f64> = match &self.structure {
            Structure::Identity => vec![1.0; self.n],
            Structure::Blocks(blocks) => blocks.iter().flat_map(|b| b.eigenvalues()).collect(),
            _ => unreachable!(),
        };
        values.sort_by(|a, b| b.total_cmp(a));
        values
    }

    /// Spiked-eigenvalue weights `lambda_i / n >= threshold` and the
    /// remaining mass `1 - sum(weights)`.
    pub fn delta_limit_weights(&self, threshold: f64) -> DeltaLimitWeights {
        let n = self.n as f64;
        let weights: Vec<f64> = self
            .eigenvalues()
            .iter()
            .map(|&l| l / n)
            .take_while(|&a| a >= threshold)
            .collect();
        let residual_mass = (1.0 - weights.iter().sum::<f64>()).clamp(0.0, 1.0);
        DeltaLimitWeights { weights, residual_mass }
    }
}

/// Weights of the chi-square mixture `sum a_i Z_i^2 + residual_mass`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaLimitWeights {
    pub weights: Vec<f64>,
    pub residual_mass: f64,
}

pub fn build(spec: &CorrelationSpec, n: usize) -> Result<CorrelationMatrix> {
    CorrelationMatrix::build(spec, n)
}

pub fn cholesky_factor(m: &CorrelationMatrix) -> DMatrix<f64> {
    m.cholesky_lower()
}

/// Trace-normalizes and factors a dense matrix, jittering the diagonal once
/// by `1e-12 n` if the first attempt fails.
fn factor_dense(raw: DMatrix<f64>, n: usize) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let normalize = |m: DMatrix<f64>| -> Result<DMatrix<f64>> {
        let tr = m.trace();
        if !(tr > 0.0) {
            return Err(Error::NotPositiveDefinite(format!("trace {tr} is not positive")));
        }
        Ok(m * (n as f64 / tr))
    };
    let matrix = normalize(raw)?;
    if let Some(ch) = Cholesky::new(matrix.clone()) {
        return Ok((matrix, ch.l()));
    }
    let jittered = normalize(&matrix + DMatrix::identity(n, n) * (1e-12 * n as f64))?;
    match Cholesky::new(jittered.clone()) {
        Some(ch) => Ok((jittered, ch.l())),
        None => Err(Error::NotPositiveDefinite("Cholesky failed after diagonal jitter".into())),
    }
}

fn dense_matvec(m: &DMatrix<f64>, w: &[f64], out: &mut [f64], lower: bool) {
    let n = w.len();
    out.iter_mut().for_each(|o| *o = 0.0);
    // Column-major storage: accumulate column by column.
    for j in 0..n {
        let wj = w[j];
        if wj == 0.0 {
            continue;
        }
        let col = m.column(j);
        let start = if lower { j } else { 0 };
        for i in start..n {
            out[i] += col[i] * wj;
        }
    }
}

/// Tridiagonal precision matrix of AR(1), scaled by `1 - rho^2`:
/// diagonal `(1, 1 + rho^2, ..., 1 + rho^2, 1)`, off-diagonal `-rho`.
fn ar1_precision_diag(rho: f64, n: usize, i: usize) -> f64 {
    if i == 0 || i == n - 1 {
        1.0
    } else {
        1.0 + rho * rho
    }
}

/// Number of eigenvalues of the scaled precision matrix strictly below `x`.
fn ar1_sturm_count(rho: f64, n: usize, x: f64) -> usize {
    let off2 = rho * rho;
    let mut count = 0;
    let mut q = ar1_precision_diag(rho, n, 0) - x;
    for i in 0..n {
        if i > 0 {
            let prev = if q == 0.0 { f64::MIN_POSITIVE } else { q };
            q = ar1_precision_diag(rho, n, i) - x - off2 / prev;
        }
        if q < 0.0 {
            count += 1;
        }
    }
    count
}

/// `k`-th smallest (0-based) eigenvalue of the AR(1) precision matrix.
fn ar1_precision_eigenvalue(rho: f64, n: usize, k: usize) -> f64 {
    let r = rho.abs();
    // Gershgorin bounds on the scaled matrix.
    let mut lo = (1.0 - r).powi(2) * 0.5;
    let mut hi = (1.0 + r).powi(2) * 1.5;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if ar1_sturm_count(rho, n, mid) > k {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi) / (1.0 - rho * rho)
}

fn ar1_eigenvalues(rho: f64, n: usize) -> Vec<f64> {
    // Smallest precision eigenvalue is the largest correlation eigenvalue.
    (0..n).map(|k| 1.0 / ar1_precision_eigenvalue(rho, n, k)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
        (a - b).abs().max()
    }

    #[test]
    fn identity_build() {
        let m = build(&CorrelationSpec::Identity, 3).unwrap();
        assert_eq!(m.matrix(), &DMatrix::identity(3, 3));
        assert_eq!(m.eigenvalues(), &[1.0, 1.0, 1.0]);
        assert_eq!(cholesky_factor(&m), DMatrix::identity(3, 3));
    }

    #[test]
    fn ar1_build() {
        let m = build(&CorrelationSpec::Ar1 { rho: 0.5 }, 3).unwrap();
        let expected = DMatrix::from_row_slice(3, 3, &[1.0, 0.5, 0.25, 0.5, 1.0, 0.5, 0.25, 0.5, 1.0]);
        assert_eq!(m.matrix(), &expected);
    }

    #[test]
    fn exchangeable_spectrum() {
        let m = build(&CorrelationSpec::Exchangeable { rho: 0.5 }, 4).unwrap();
        assert_eq!(m.eigenvalues(), &[2.5, 0.5, 0.5, 0.5]);
    }

    #[test]
    fn two_by_two_cholesky() {
        let m = build(&CorrelationSpec::Exchangeable { rho: 0.5 }, 2).unwrap();
        let l = cholesky_factor(&m);
        let expected = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.5, 0.75_f64.sqrt()]);
        assert!(max_abs_diff(&l, &expected) < 1e-15);
    }

    #[test]
    fn singular_exchangeable_rejected() {
        assert!(matches!(
            build(&CorrelationSpec::Exchangeable { rho: 1.0 }, 4),
            Err(Error::SpecInvalid(_))
        ));
        assert!(matches!(build(&CorrelationSpec::Ar1 { rho: -1.0 }, 4), Err(Error::SpecInvalid(_))));
        assert!(matches!(build(&CorrelationSpec::Identity, 1), Err(Error::SpecInvalid(_))));
    }

    #[test]
    fn block_spec_validation() {
        let bad_sum = CorrelationSpec::BlockExchangeable { block_sizes: vec![2, 2], rhos: vec![0.1, 0.2] };
        assert!(matches!(build(&bad_sum, 5), Err(Error::SpecInvalid(_))));
        let bad_len = CorrelationSpec::BlockExchangeable { block_sizes: vec![2, 3], rhos: vec![0.1] };
        assert!(matches!(build(&bad_len, 5), Err(Error::SpecInvalid(_))));
    }

    #[test]
    fn structured_factors_reconstruct() {
        let specs = [
            CorrelationSpec::Identity,
            CorrelationSpec::Ar1 { rho: 0.7 },
            CorrelationSpec::Ar1 { rho: -0.9 },
            CorrelationSpec::Exchangeable { rho: 0.3 },
            CorrelationSpec::BlockExchangeable { block_sizes: vec![3, 5, 4], rhos: vec![0.9, 0.0, 0.4] },
        ];
        for spec in &specs {
            let m = build(spec, 12).unwrap();
            let l = m.cholesky_lower();
            assert!(max_abs_diff(&(&l * l.transpose()), m.matrix()) < 1e-12, "{spec:?}");
            assert!(l.upper_triangle().lower_triangle().iter().all(|&v| v.is_finite()));
            for i in 0..12 {
                for j in i + 1..12 {
                    assert_eq!(l[(i, j)], 0.0);
                }
            }
            // Structured application agrees with the dense factor.
            let w: Vec<f64> = (0..12).map(|i| ((i * 7 % 5) as f64) - 2.0).collect();
            let fast = m.apply_root(SquareRoot::Cholesky, &w);
            let slow = &l * nalgebra::DVector::from_vec(w.clone());
            for i in 0..12 {
                assert!((fast[i] - slow[i]).abs() < 1e-12);
            }
            let sym = m.apply_root(SquareRoot::Symmetric, &w);
            let root = m.symmetric_root();
            assert!(max_abs_diff(&(root * root), m.matrix()) < 1e-10);
            let slow_sym = root * nalgebra::DVector::from_vec(w.clone());
            for i in 0..12 {
                assert!((sym[i] - slow_sym[i]).abs() < 1e-10, "{spec:?}");
            }
        }
    }

    #[test]
    fn ar1_spectrum_matches_dense_eigen() {
        for &rho in &[-0.8, 0.2, 0.95] {
            let m = build(&CorrelationSpec::Ar1 { rho }, 40).unwrap();
            let mut dense: Vec<f64> = SymmetricEigen::new(m.matrix().clone()).eigenvalues.iter().copied().collect();
            dense.sort_by(|a, b| b.total_cmp(a));
            let lmin = m.lambda_min();
            let lmax = m.lambda_max();
            for (a, b) in m.eigenvalues().iter().zip(&dense) {
                assert!((a - b).abs() < 1e-10, "rho {rho}: {a} vs {b}");
            }
            assert!((lmin - dense[39]).abs() < 1e-10);
            assert!((lmax - dense[0]).abs() < 1e-10);
        }
    }

    #[test]
    fn custom_trace_normalized_and_factored() {
        let rows = vec![vec![2.0, 1.0], vec![1.0, 2.0]];
        let m = build(&CorrelationSpec::Custom { rows }, 2).unwrap();
        assert!((m.trace() - 2.0).abs() < 1e-12);
        assert!((m.matrix()[(0, 1)] - 0.5).abs() < 1e-15);
        assert!((m.eigenvalues()[0] - 1.5).abs() < 1e-12);
        assert!((m.eigenvalues()[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn custom_rejections() {
        let asym = CorrelationSpec::Custom { rows: vec![vec![1.0, 0.2], vec![0.3, 1.0]] };
        assert!(matches!(build(&asym, 2), Err(Error::SpecInvalid(_))));
        let indefinite = CorrelationSpec::Custom { rows: vec![vec![1.0, 2.0], vec![2.0, 1.0]] };
        assert!(matches!(build(&indefinite, 2), Err(Error::NotPositiveDefinite(_))));
        let wrong_size = CorrelationSpec::Custom { rows: vec![vec![1.0]] };
        assert!(matches!(build(&wrong_size, 2), Err(Error::SpecInvalid(_))));
    }

    #[test]
    fn custom_csv_parsing() {
        let spec = CorrelationSpec::custom_from_csv_str("1, 0.5\n0.5,1\n\n").unwrap();
        assert_eq!(spec, CorrelationSpec::Custom { rows: vec![vec![1.0, 0.5], vec![0.5, 1.0]] });
        assert!(CorrelationSpec::custom_from_csv_str("1,x\n").is_err());
    }

    #[test]
    fn delta_weights_examples() {
        let m = build(&CorrelationSpec::Exchangeable { rho: 0.9 }, 100).unwrap();
        let w = m.delta_limit_weights(DEFAULT_DELTA_THRESHOLD);
        assert_eq!(w.weights.len(), 1);
        assert!((w.weights[0] - 0.901).abs() < 1e-12);
        assert!((w.residual_mass - 0.099).abs() < 1e-12);

        let id = build(&CorrelationSpec::Identity, 100).unwrap();
        let w = id.delta_limit_weights(2.0 / 100.0);
        assert!(w.weights.is_empty());
        assert_eq!(w.residual_mass, 1.0);

        // Per block: 50 * 0.8 + 0.2 = 40.2, so weight 0.402 each.
        let blocks = CorrelationSpec::BlockExchangeable { block_sizes: vec![50, 50], rhos: vec![0.8, 0.8] };
        let w = build(&blocks, 100).unwrap().delta_limit_weights(0.05);
        assert_eq!(w.weights.len(), 2);
        assert!(w.weights.iter().all(|&a| (a - 0.402).abs() < 1e-12));
        assert!((w.residual_mass - 0.196).abs() < 1e-12);
    }
}
