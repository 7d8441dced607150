mod common;

use nalgebra::{DMatrix, DVector};
use opd_core::intervals::{
    bounds, bounds_general, bounds_quadratic, cutoff_from_losses, intervals_at, loocv_coverage, CutoffKind,
    IntervalConfig, JointSampling,
};
use opd_core::lognormal::{LogGaussianModel, PredictionSite};
use opd_core::loss::pdl_loss;
use opd_core::variogram::{CovarianceParams, SpatialDataset};
use opd_core::PowerParameter;
use proptest::prelude::*;

fn lam(v: f64) -> PowerParameter {
    PowerParameter::new(v).unwrap()
}

fn small_model() -> LogGaussianModel {
    let locs = vec![vec![0.0, 0.0], vec![2.0, 0.5], vec![0.7, 1.9], vec![3.1, 2.8], vec![1.4, 3.6]];
    let x = DMatrix::from_fn(5, 2, |i, j| if j == 0 { 1.0 } else { locs[i][0] * 0.2 });
    let data = SpatialDataset::new(locs, vec![4.0, 9.0, 3.5, 12.0, 6.0], x).unwrap();
    let theta = CovarianceParams::new(0.4, 4.0, 0.05, 0.01).unwrap();
    LogGaussianModel::new(data, DVector::from_vec(vec![1.6, 0.4]), theta).unwrap()
}

proptest! {
    #[test]
    fn bounds_bracket_the_predictor_and_solve_the_loss_equation(
        log_d in -5.0f64..5.0, log_ratio in -6.0f64..1.5, l in -3.0f64..3.0
    ) {
        let delta = log_d.exp();
        let k = delta * 10f64.powf(log_ratio);
        let b = bounds_general(delta, k, lam(l)).unwrap();
        prop_assert!(b.lower < delta && delta < b.upper);
        prop_assert!(b.lower >= 0.0);
        for y in [b.lower, b.upper] {
            if y > 0.0 {
                let r = (pdl_loss(delta, y, lam(l)).unwrap() - k).abs() / k;
                prop_assert!(r < 1e-8, "residual {} at y={}", r, y);
            }
        }
        if b.one_sided {
            prop_assert_eq!(b.lower, 0.0);
        }
    }

    #[test]
    fn single_crossing_above_the_predictor(log_ratio in -4.0f64..1.0, l in -3.0f64..3.0) {
        let delta = 2.0;
        let k = delta * 10f64.powf(log_ratio);
        let b = bounds_general(delta, k, lam(l)).unwrap();
        let top = b.upper * 1.01;
        let mut changes = 0;
        let mut prev = pdl_loss(delta, delta * (1.0 + 1e-9), lam(l)).unwrap() >= k;
        for i in 1..=1024 {
            let y = delta + (top - delta) * i as f64 / 1024.0;
            let now = pdl_loss(delta, y, lam(l)).unwrap() >= k;
            changes += (now != prev) as usize;
            prev = now;
        }
        prop_assert_eq!(changes, 1);
    }

    #[test]
    fn dispatch_agrees_with_general_solver(log_d in -3.0f64..3.0, log_ratio in -4.0f64..1.0) {
        let delta = log_d.exp();
        let k = delta * 10f64.powf(log_ratio);
        for l in [1.0, 2.0] {
            let a = bounds(delta, k, lam(l)).unwrap();
            let g = bounds_general(delta, k, lam(l)).unwrap();
            prop_assert!((a.upper / g.upper - 1.0).abs() < 1e-9);
            prop_assert_eq!(a.one_sided, g.one_sided);
        }
    }
}

#[test]
fn quadratic_bounds_by_hand() {
    // δ = 2, K = 0.25: 2 ± 1.
    let b = bounds_quadratic(2.0, 0.25).unwrap();
    assert!((b.lower - 1.0).abs() < 1e-15 && (b.upper - 3.0).abs() < 1e-15);
    assert!(!b.one_sided);
}

#[test]
fn smaller_alpha_widens_the_interval() {
    let losses: Vec<f64> = (1..=1000).map(|i| (i as f64 / 100.0).powi(2)).collect();
    let mut last_k = 0.0;
    let mut last_width = 0.0;
    for alpha in [0.2, 0.1, 0.05, 0.01] {
        let k = cutoff_from_losses(&losses, alpha).unwrap();
        let w = bounds(5.0, k, lam(-0.5)).unwrap().width();
        assert!(k >= last_k && w >= last_width);
        last_k = k;
        last_width = w;
    }
}

#[test]
fn identical_seeds_reproduce_intervals_exactly() {
    let model = small_model();
    let site = PredictionSite::new(vec![1.0, 1.0], vec![1.0, 0.2]);
    let config = IntervalConfig { m: 20_000, ..IntervalConfig::default() };
    let kinds = [CutoffKind::Conditional, CutoffKind::Unconditional];
    let lambdas = [lam(-1.0), lam(0.5)];
    let a = intervals_at(&model, &site, &lambdas, &kinds, &config, 3).unwrap();
    let b = intervals_at(&model, &site, &lambdas, &kinds, &config, 3).unwrap();
    assert_eq!(a, b);
    let c = intervals_at(&model, &site, &lambdas, &kinds, &IntervalConfig { seed: 7, ..config }, 3).unwrap();
    assert_ne!(a, c);
}

#[test]
fn predictor_lies_inside_every_interval() {
    let model = small_model();
    let site = PredictionSite::new(vec![2.2, 2.2], vec![1.0, 0.44]);
    let lambdas: Vec<_> = (-6..=6).map(|l| lam(l as f64 * 0.5)).collect();
    let config = IntervalConfig { m: 20_000, ..IntervalConfig::default() };
    for iv in intervals_at(&model, &site, &lambdas, &[CutoffKind::Conditional, CutoffKind::Unconditional], &config, 0)
        .unwrap()
    {
        assert!(iv.bounds.lower < iv.predictor && iv.predictor < iv.bounds.upper, "{iv:?}");
    }
}

#[test]
fn reduced_and_full_joint_samplers_agree() {
    let model = small_model();
    let site = PredictionSite::new(vec![1.5, 1.5], vec![1.0, 0.3]);
    let lambdas = [lam(-2.0), lam(-0.5), lam(1.0)];
    let reduced = IntervalConfig { m: 40_000, seed: 1, sampling: JointSampling::Reduced, ..IntervalConfig::default() };
    let full = IntervalConfig { sampling: JointSampling::Full, seed: 2, ..reduced };
    let a = intervals_at(&model, &site, &lambdas, &[CutoffKind::Unconditional], &reduced, 0).unwrap();
    let b = intervals_at(&model, &site, &lambdas, &[CutoffKind::Unconditional], &full, 0).unwrap();
    for (x, y) in a.iter().zip(&b) {
        let rel = (x.cutoff.value / y.cutoff.value - 1.0).abs();
        assert!(rel < 0.04, "λ={}: {} vs {}", x.lambda, x.cutoff.value, y.cutoff.value);
    }
}

fn synthetic_coverage(alpha: f64, seed: u64) -> f64 {
    let beta = DVector::from_vec(vec![2.0, 0.5]);
    let theta = CovarianceParams::new(0.3, 30.0, 0.03, 0.002).unwrap();
    let config = IntervalConfig { alpha, m: 10_000, seed, ..IntervalConfig::default() };
    let lambdas = [lam(-1.0), lam(0.0), lam(1.0)];
    let mut total = 0.0;
    let mut count = 0;
    for rep in 0..20u64 {
        let (locs, x) = common::scattered_design(60, 100.0, seed + rep);
        let model = common::simulate_dataset(locs, x, &beta, theta, seed + rep);
        for c in loocv_coverage(&model, &lambdas, &[CutoffKind::Conditional, CutoffKind::Unconditional], &config, None)
            .unwrap()
        {
            total += c.coverage;
            count += 1;
        }
    }
    total / count as f64
}

#[test]
fn loocv_coverage_is_nominal_on_synthetic_data() {
    let c = synthetic_coverage(0.1, 100);
    assert!((c - 0.90).abs() <= 0.03, "coverage {c}");
}

#[test]
fn half_level_intervals_cover_half() {
    let c = synthetic_coverage(0.5, 200);
    assert!((c - 0.5).abs() <= 0.1, "coverage {c}");
}

#[test]
fn loocv_rejects_tiny_datasets() {
    let model = small_model();
    assert!(loocv_coverage(&model, &[lam(0.0)], &[CutoffKind::Conditional], &IntervalConfig::default(), None).is_err());
}
