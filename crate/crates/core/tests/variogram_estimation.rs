mod common;

use nalgebra::{DMatrix, DVector};
use opd_core::linalg::spd_cholesky;
use opd_core::variogram::{
    estimate_measurement_error, iterative_gls_fit, robust_semivariogram, spherical_cov, BinSpec, CovarianceParams,
    DuplicatePairs, GlsConfig,
};
use proptest::prelude::*;

fn sites() -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(0.0f64..100.0, 2), 3..25).prop_filter("distinct sites", |s| {
        s.iter().enumerate().all(|(i, a)| s[..i].iter().all(|b| a != b))
    })
}

proptest! {
    #[test]
    fn spherical_covariance_is_monotone_and_compact(s2 in 0.01f64..5.0, r in 0.1f64..100.0, h1 in 0.0f64..200.0, h2 in 0.0f64..200.0) {
        let (lo, hi) = if h1 <= h2 { (h1, h2) } else { (h2, h1) };
        let c_lo = spherical_cov(lo, s2, r).unwrap();
        let c_hi = spherical_cov(hi, s2, r).unwrap();
        prop_assert!(c_hi <= c_lo + 1e-15);
        prop_assert!((0.0..=s2).contains(&c_lo));
        if hi >= r {
            prop_assert_eq!(c_hi, 0.0);
        }
        prop_assert_eq!(spherical_cov(0.0, s2, r).unwrap(), s2);
    }

    #[test]
    fn data_covariance_is_positive_definite(locs in sites(), eta in 0.01f64..2.0, r in 1.0f64..80.0, xi in 0.0f64..0.5, eps in 0.0f64..0.1) {
        let theta = CovarianceParams::new(eta, r, xi, eps).unwrap();
        let sigma = theta.data_covariance(&locs);
        prop_assert!(spd_cholesky(sigma.clone()).is_ok());
        prop_assert!((sigma.clone() - sigma.transpose()).amax() == 0.0);
        for i in 0..locs.len() {
            prop_assert!((sigma[(i, i)] - (eta + xi + eps)).abs() < 1e-15);
        }
    }

    #[test]
    fn measurement_error_ignores_common_scale(pairs in prop::collection::vec((0.1f64..100.0, 0.1f64..100.0), 1..30), c in 0.01f64..100.0) {
        let base = estimate_measurement_error(&DuplicatePairs::new(pairs.clone()).unwrap());
        let scaled = estimate_measurement_error(&DuplicatePairs::new(pairs.iter().map(|(a, b)| (a * c, b * c)).collect()).unwrap());
        prop_assert!((base - scaled).abs() <= 1e-10 * base.max(1e-12));
    }

    #[test]
    fn semivariogram_scales_quadratically(c in 0.1f64..10.0, seed in 0u64..1000) {
        let (locs, _) = common::scattered_design(60, 50.0, seed);
        let residuals: Vec<f64> = (0..60).map(|i| (i as f64 * 1.7 + seed as f64).sin()).collect();
        let scaled: Vec<f64> = residuals.iter().map(|r| r * c).collect();
        let spec = BinSpec { n_bins: 8, max_lag: None, min_pairs: 5 };
        let a = robust_semivariogram(&residuals, &locs, &spec).unwrap();
        let b = robust_semivariogram(&scaled, &locs, &spec).unwrap();
        prop_assert_eq!(a.bins.len(), b.bins.len());
        for (x, y) in a.bins.iter().zip(&b.bins) {
            prop_assert!((y.gamma - c * c * x.gamma).abs() <= 1e-10 * y.gamma.max(1e-300));
            prop_assert_eq!(x.pairs, y.pairs);
        }
    }
}

#[test]
fn duplicates_fixture_gives_published_measurement_error() {
    let s2 = common::meuse_sigma2_eps();
    assert!((s2 - 0.0053).abs() < 5e-5, "{s2}");
}

#[test]
fn iterated_gls_recovers_simulated_trend() {
    // 400 sites from a known model; β within three standard errors and the
    // sill of the same order as the generating value.
    let beta = DVector::from_vec(vec![3.0, -1.2]);
    let theta = CovarianceParams::new(0.25, 25.0, 0.03, 0.01).unwrap();
    let (locs, x) = common::scattered_design(400, 100.0, 11);
    let model = common::simulate_dataset(locs, x, &beta, theta, 11);
    let fit = iterative_gls_fit(model.dataset(), 0.01, &GlsConfig::default()).unwrap();
    for k in 0..2 {
        assert!((fit.beta[k] - beta[k]).abs() < 3.0 * fit.beta_se[k], "β{k} = {} ± {}", fit.beta[k], fit.beta_se[k]);
    }
    let sill = fit.theta.sigma2_eta + fit.theta.sigma2_xi;
    assert!((0.14..0.45).contains(&sill), "sill {sill}");
    assert!((10.0..50.0).contains(&fit.theta.range), "range {}", fit.theta.range);
    assert!(fit.iterations() <= 20);
}

#[test]
fn estimation_failure_keeps_the_trace() {
    let (locs, x) = common::scattered_design(120, 100.0, 3);
    let data = opd_core::variogram::SpatialDataset::new(locs, (0..120).map(|i| 2.0 + (i as f64 * 0.37).sin()).collect(), x).unwrap();
    let config = GlsConfig { max_iter: 1, tolerance: 0.0, ..GlsConfig::default() };
    match iterative_gls_fit(&data, 0.0, &config) {
        Err(opd_core::OpdError::Estimation { trace, .. }) => assert_eq!(trace.len(), 1),
        other => panic!("expected an estimation error, got {other:?}"),
    }
}

#[test]
fn meuse_design_is_full_rank() {
    let meuse = common::meuse_fit();
    let x: &DMatrix<f64> = meuse.model.dataset().covariates();
    assert_eq!((x.nrows(), x.ncols()), (155, 7));
    assert_eq!(x.clone().svd(false, false).rank(1e-10), 7);
    assert_eq!(
        meuse.encoding.names(),
        ["intercept", "dist", "soil=2", "soil=3", "ffreq=2", "ffreq=3", "std(x)"]
    );
}
