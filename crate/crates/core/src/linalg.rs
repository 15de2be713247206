//! Least-squares fitting and t-statistics.
//!
//! Fits go through a Householder QR of the design; the normal equations are
//! never formed. Standard errors come from the rows of `R^{-1}`, since
//! `(X^T X)^{-1} = R^{-1} R^{-T}`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative threshold below which the residual variance counts as zero.
pub const DEGENERATE_RESIDUAL_RATIO: f64 = 1e-14;

#[derive(Debug, Clone, Copy, Default)]
pub struct OlsOptions {
    /// Absolute singular-value tolerance. `None` selects
    /// `n * eps * sigma_max(X)`.
    pub rank_tolerance: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionFit {
    pub coefficients: DVector<f64>,
    pub residual_variance: f64,
    pub standard_errors: DVector<f64>,
    /// Diagonal of `(X^T X)^{-1}`.
    pub inverse_gram_diagonal: DVector<f64>,
    pub n: usize,
    pub dof: usize,
    /// `residual_variance` fell below the degeneracy threshold.
    pub degenerate: bool,
}

impl RegressionFit {
    pub fn d(&self) -> usize {
        self.coefficients.len()
    }

    /// Standard error of coefficient `j` under a known error scale `sigma`.
    pub fn true_standard_error(&self, j: usize, sigma: f64) -> f64 {
        sigma * self.inverse_gram_diagonal[j].sqrt()
    }
}

pub fn ols_fit(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<RegressionFit> {
    ols_fit_with(x, y, OlsOptions::default())
}

pub fn ols_fit_with(x: &DMatrix<f64>, y: &DVector<f64>, options: OlsOptions) -> Result<RegressionFit> {
    let (n, d) = x.shape();
    if y.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "design has {n} rows but response has length {}",
            y.len()
        )));
    }
    if d == 0 {
        return Err(Error::DimensionMismatch("design has no columns".into()));
    }
    if n <= d {
        return Err(Error::DimensionMismatch(format!(
            "need n > d for a residual degree of freedom, got n = {n}, d = {d}"
        )));
    }

    let qr = x.clone().qr();
    let r = qr.r();

    // Singular values of R equal those of X.
    let sv = r.singular_values();
    let largest = sv.max();
    let smallest = sv.min();
    let tolerance = options
        .rank_tolerance
        .unwrap_or(n as f64 * f64::EPSILON * largest);
    if !(smallest > tolerance) {
        return Err(Error::RankDeficient { smallest, tolerance });
    }

    let mut qty = y.clone();
    qr.q_tr_mul(&mut qty);
    let coefficients = r
        .solve_upper_triangular(&qty.rows(0, d).into_owned())
        .ok_or(Error::RankDeficient { smallest, tolerance })?;

    let residuals = y - x * &coefficients;
    let dof = n - d;
    let residual_variance = residuals.norm_squared() / dof as f64;

    let r_inv = r
        .solve_upper_triangular(&DMatrix::identity(d, d))
        .ok_or(Error::RankDeficient { smallest, tolerance })?;
    let inverse_gram_diagonal = DVector::from_iterator(d, r_inv.row_iter().map(|row| row.norm_squared()));
    let sigma_hat = residual_variance.sqrt();
    let standard_errors = inverse_gram_diagonal.map(|g| sigma_hat * g.sqrt());

    // A constant response has zero sample variance, so also compare against
    // the rounding floor of the response itself.
    let rounding_floor = (n as f64 * f64::EPSILON).powi(2) * y.norm_squared() / n as f64;
    let degenerate = residual_variance <= DEGENERATE_RESIDUAL_RATIO * sample_variance(y)
        || residual_variance <= rounding_floor;

    Ok(RegressionFit {
        coefficients,
        residual_variance,
        standard_errors,
        inverse_gram_diagonal,
        n,
        dof,
        degenerate,
    })
}

/// `(beta_hat_j - null_value) / L_j`.
pub fn t_statistic(fit: &RegressionFit, j: usize, null_value: f64) -> Result<f64> {
    if j >= fit.d() {
        return Err(Error::DimensionMismatch(format!(
            "coefficient index {j} out of range for d = {}",
            fit.d()
        )));
    }
    let se = fit.standard_errors[j];
    if fit.degenerate || !(se > 0.0) {
        return Err(Error::DegenerateResidual);
    }
    Ok((fit.coefficients[j] - null_value) / se)
}

fn sample_variance(y: &DVector<f64>) -> f64 {
    let n = y.len();
    if n < 2 {
        return 0.0;
    }
    let mean = y.mean();
    y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64
}
