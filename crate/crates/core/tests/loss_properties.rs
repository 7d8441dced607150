use opd_core::loss::{asymmetry_classical, asymmetry_pdl, classical_loss, pdl_loss, phi_plus, ClassicalLoss};
use opd_core::PowerParameter;
use proptest::prelude::*;

fn lam(v: f64) -> PowerParameter {
    PowerParameter::new(v).unwrap()
}

fn positive() -> impl Strategy<Value = f64> {
    (-6.0f64..6.0).prop_map(|e| 10f64.powf(e))
}

proptest! {
    #[test]
    fn loss_is_nonnegative_and_vanishes_only_on_the_diagonal(d in positive(), y in positive(), l in -4.0f64..4.0) {
        let v = pdl_loss(d, y, lam(l)).unwrap();
        prop_assert!(v >= 0.0 && v.is_finite());
        prop_assert_eq!(pdl_loss(d, d, lam(l)).unwrap(), 0.0);
    }

    #[test]
    fn loss_factors_through_the_generator(d in positive(), r in -3.0f64..3.0, l in -3.0f64..3.0) {
        let y = d * r.exp();
        let direct = pdl_loss(d, y, lam(l)).unwrap();
        let via = d * phi_plus(y / d, lam(l)).unwrap();
        prop_assert!((direct - via).abs() <= 1e-10 * direct.max(1e-300) + 1e-300);
    }

    #[test]
    fn loss_is_homogeneous_of_degree_one(d in positive(), y in positive(), c in positive(), l in -3.0f64..3.0) {
        let base = pdl_loss(d, y, lam(l)).unwrap();
        let scaled = pdl_loss(c * d, c * y, lam(l)).unwrap();
        prop_assert!((scaled - c * base).abs() <= 1e-9 * (c * base).max(1e-300));
    }

    #[test]
    fn loss_is_convex_in_the_predictand(d in 0.1f64..10.0, y1 in 0.1f64..10.0, y2 in 0.1f64..10.0, l in -3.0f64..3.0) {
        let mid = pdl_loss(d, 0.5 * (y1 + y2), lam(l)).unwrap();
        let chord = 0.5 * (pdl_loss(d, y1, lam(l)).unwrap() + pdl_loss(d, y2, lam(l)).unwrap());
        prop_assert!(mid <= chord * (1.0 + 1e-12) + 1e-15);
    }

    #[test]
    fn limiting_branches_are_continuous(d in 0.1f64..10.0, y in 0.1f64..10.0, h in 1e-10f64..1e-8) {
        for centre in [0.0, -1.0] {
            let at = pdl_loss(d, y, lam(centre)).unwrap();
            for side in [centre - h, centre + h] {
                let near = pdl_loss(d, y, lam(side)).unwrap();
                prop_assert!((near - at).abs() <= 1e-6 * at.max(1e-12));
            }
        }
    }

    #[test]
    fn small_deviations_are_quadratic(d in positive(), e in 1e-9f64..1e-6, l in -3.0f64..3.0) {
        // L(δ, δ(1+e)) = δe²/2 + O(e³) for every λ.
        let y = d * (1.0 + e);
        let e = (y - d) / d;
        let v = pdl_loss(d, y, lam(l)).unwrap();
        let leading = 0.5 * d * e * e;
        prop_assert!((v - leading).abs() <= 4.0 * e * leading);
    }

    #[test]
    fn asymmetry_is_positive_and_unity_when_symmetric(f in 0.001f64..0.999, l in -3.0f64..3.0) {
        let a = asymmetry_pdl(f, lam(l)).unwrap();
        prop_assert!(a > 0.0 && a.is_finite());
        prop_assert!((asymmetry_pdl(f, lam(1.0)).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn asymmetry_matches_its_definition(f in 0.01f64..0.99, l in -3.0f64..3.0) {
        // Loss of predicting (1−f)·y over the loss of predicting y/(1−f).
        let y = 3.0;
        let under = pdl_loss((1.0 - f) * y, y, lam(l)).unwrap();
        let over = pdl_loss(y / (1.0 - f), y, lam(l)).unwrap();
        let a = asymmetry_pdl(f, lam(l)).unwrap();
        prop_assert!((a - under / over).abs() <= 1e-8 * a.max(1.0));
    }
}

#[test]
fn small_and_large_fraction_paths_agree() {
    for l in [-3.0, -1.0, -0.5, 0.0, 0.7, 2.0] {
        let below = asymmetry_pdl(0.01 - 1e-12, lam(l)).unwrap();
        let above = asymmetry_pdl(0.01, lam(l)).unwrap();
        assert!((below - above).abs() < 1e-8, "λ={l}: {below} vs {above}");
    }
}

#[test]
fn classical_losses_match_their_asymmetry() {
    let y = 2.0;
    for kind in [ClassicalLoss::Sel, ClassicalLoss::Ael, ClassicalLoss::Qtl(0.8)] {
        for f in [0.1, 0.5, 0.9] {
            let under = classical_loss(kind, (1.0 - f) * y, y).unwrap();
            let over = classical_loss(kind, y / (1.0 - f), y).unwrap();
            let ratio = under / over;
            let expect = asymmetry_classical(kind, f).unwrap();
            assert!((ratio - expect).abs() < 1e-12, "{} f={f}: {ratio} vs {expect}", kind.name());
        }
    }
}
