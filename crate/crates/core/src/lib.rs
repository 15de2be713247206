//! OLS t-statistic inference under correlated errors.
//!
//! The crate provides the pieces needed to study how the classical
//! least-squares t-statistic behaves when regression errors are correlated:
//!
//! - [`linalg`]: QR-based OLS fits, standard errors and t-statistics.
//! - [`correlation`]: identity, AR(1), exchangeable, block-exchangeable and
//!   custom correlation matrices with their factors and spectra.
//! - [`sampling`]: reproducible innovations, errors, designs and
//!   normalized quadratic forms `delta = w^T V w / n`.
//! - [`monte_carlo`]: replicated coverage, power and t-statistic experiments.
//! - [`asymptotics`]: limiting power functions and power-difference geometry.
//! - [`diagnostics`]: Kolmogorov distances, rate tracking and tail curves.

pub mod asymptotics;
pub mod correlation;
pub mod diagnostics;
pub mod error;
pub mod linalg;
pub mod monte_carlo;
pub mod normal;
pub mod rng;
pub mod sampling;
pub mod table;

pub use correlation::{CorrelationMatrix, CorrelationSpec, SquareRoot};
pub use error::{Error, Result};
pub use linalg::{ols_fit, t_statistic, RegressionFit};
pub use rng::RngStream;
pub use sampling::{ColumnDist, ColumnMode, ColumnSpec, DesignSpec, ErrorSpec, Innovation};
