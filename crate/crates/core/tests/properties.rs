use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use robust_ols::{ols_fit, t_statistic, CorrelationMatrix, CorrelationSpec};

fn design_and_response() -> impl Strategy<Value = (DMatrix<f64>, DVector<f64>)> {
    (2usize..4, 8usize..30).prop_flat_map(|(d, n)| {
        (
            prop::collection::vec(-3.0f64..3.0, n * d).prop_map(move |v| DMatrix::from_vec(n, d, v)),
            prop::collection::vec(-3.0f64..3.0, n).prop_map(DVector::from_vec),
        )
    })
}

proptest! {
    #[test]
    fn residuals_are_orthogonal_to_columns((x, y) in design_and_response()) {
        let fit = ols_fit(&x, &y).unwrap();
        let r = &y - &x * &fit.coefficients;
        let scale = x.norm() * y.norm();
        prop_assert!((x.transpose() * r).amax() <= 1e-10 * scale);
    }

    #[test]
    fn coefficients_solve_normal_equations((x, y) in design_and_response()) {
        let fit = ols_fit(&x, &y).unwrap();
        let gram = x.transpose() * &x;
        let direct = gram.clone().cholesky().unwrap().solve(&(x.transpose() * &y));
        prop_assert!((&fit.coefficients - &direct).amax() <= 1e-8 * (1.0 + direct.amax()));
        let inv = gram.try_inverse().unwrap();
        for j in 0..x.ncols() {
            prop_assert!((fit.inverse_gram_diagonal[j] / inv[(j, j)] - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn t_statistic_is_scale_equivariant((x, y) in design_and_response(), c in 0.01f64..100.0) {
        let t = t_statistic(&ols_fit(&x, &y).unwrap(), 0, 0.0).unwrap();
        let scaled = t_statistic(&ols_fit(&x, &(&y * c)).unwrap(), 0, 0.0).unwrap();
        let flipped = t_statistic(&ols_fit(&x, &(-&y)).unwrap(), 0, 0.0).unwrap();
        prop_assert!((t - scaled).abs() <= 1e-9 * (1.0 + t.abs()));
        prop_assert!((t + flipped).abs() <= 1e-9 * (1.0 + t.abs()));
    }

    #[test]
    fn built_in_correlations_have_unit_trace_and_positive_spectrum(
        kind in 0usize..3,
        rho in 0.0f64..0.95,
        n in 2usize..60,
    ) {
        let spec = match kind {
            0 => CorrelationSpec::Ar1 { rho },
            1 => CorrelationSpec::Exchangeable { rho },
            _ => CorrelationSpec::BlockExchangeable { block_sizes: vec![n / 2 + 1, n - n / 2 - 1].into_iter().filter(|&b| b > 0).collect(), rhos: vec![rho, rho / 2.0].into_iter().take(if n - n / 2 - 1 > 0 { 2 } else { 1 }).collect() },
        };
        let m = CorrelationMatrix::build(&spec, n).unwrap();
        prop_assert!((m.trace() - n as f64).abs() < 1e-9 * n as f64);
        let eig = m.eigenvalues();
        prop_assert!((eig.iter().sum::<f64>() - n as f64).abs() < 1e-7 * n as f64);
        prop_assert!(m.lambda_min() > 0.0);
        let l = m.cholesky_lower();
        prop_assert!((&l * l.transpose() - m.matrix()).amax() < 1e-10);
    }
}
