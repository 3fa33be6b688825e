use std::f64::consts::{FRAC_PI_2, PI};

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use slaglab::operators::{
    classify_phase, lambda_ratio, level_set_concavity_probe, lewy_shift, midpoint_margin, sigma2_positive_branch,
    slag_phase, spectral_second_derivative, spectral_value, LewySurrogate, OperatorModel, PhaseClass, ProbeSide,
    Sigma2Fn, SlagFn, SpectralFunction,
};
use slaglab::spectral::{eig_sym, random_symmetric, random_with_spectrum, SymMatrix, DEFAULT_GROUP_TOL};
use slaglab::Error;

fn directional(op: &OperatorModel, m: &SymMatrix, x: &SymMatrix, t: f64) -> f64 {
    (op.evaluate(&m.axpy(t, x)).unwrap() - op.evaluate(&m.axpy(-t, x)).unwrap()) / (2.0 * t)
}

#[test]
fn phase_classes_and_thresholds() {
    let s = classify_phase(3, FRAC_PI_2).unwrap();
    assert_eq!(s.classification, PhaseClass::Critical);
    assert!((s.lower_threshold + PI / 6.0).abs() < 1e-15);
    assert!((s.upper_threshold - PI / 2.0).abs() < 1e-15);
    assert_eq!(classify_phase(3, 2.0).unwrap().classification, PhaseClass::Supercritical);
    assert_eq!(classify_phase(3, -2.0).unwrap().classification, PhaseClass::Supercritical);
    assert_eq!(classify_phase(4, 0.3).unwrap().classification, PhaseClass::Subcritical);
    assert!(matches!(classify_phase(3, 3.0 * FRAC_PI_2), Err(Error::Domain(_))));
    assert!(matches!(classify_phase(1, 0.0), Err(Error::Argument(_))));
}

#[test]
fn lewy_shift_values() {
    assert!((lewy_shift(3) - (1.0f64 / 3.0).sqrt()).abs() < 1e-15);
    assert!((lewy_shift(2) - 1.0).abs() < 1e-15);
}

#[test]
fn sigma2_of_identity_and_branch() {
    let (s2, pos) = sigma2_positive_branch(&SymMatrix::scalar(3, 1.0 / 3f64.sqrt()));
    assert!((s2 - 1.0).abs() < 1e-14 && pos);
    let (s2, pos) = sigma2_positive_branch(&SymMatrix::scalar(3, -1.0 / 3f64.sqrt()));
    assert!((s2 - 1.0).abs() < 1e-14 && !pos);
}

#[test]
fn lambda_ratio_rejects_non_positive_input() {
    assert!(matches!(lambda_ratio(&[1.0, 0.0, 2.0]), Err(Error::Domain(_))));
    assert!(lambda_ratio(&[1.0]).is_err());
    // 1-homogeneous, including across the rescaling branch
    let mu = [1e-6, 1.0, 1e4];
    let big: Vec<f64> = mu.iter().map(|m| m * 1e5).collect();
    assert!((lambda_ratio(&big).unwrap() / lambda_ratio(&mu).unwrap() - 1e5).abs() < 1e-5);
}

#[test]
fn probe_refuses_inside_the_subcritical_band() {
    let spec = classify_phase(3, 0.5).unwrap();
    assert!(matches!(level_set_concavity_probe(&spec, 10, 0), Err(Error::Refused(_))));
    assert_eq!(ProbeSide::for_spec(&classify_phase(3, FRAC_PI_2).unwrap()).unwrap(), ProbeSide::Convex);
    assert_eq!(ProbeSide::for_spec(&classify_phase(3, -FRAC_PI_2).unwrap()).unwrap(), ProbeSide::Concave);
}

#[test]
fn probe_is_reproducible() {
    let spec = classify_phase(4, 1.5 * PI).unwrap();
    let a = level_set_concavity_probe(&spec, 200, 42).unwrap();
    let b = level_set_concavity_probe(&spec, 200, 42).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.violations, 0);
}

#[test]
fn midpoint_margin_sign() {
    // two points on {Σ arctan = π/2} in two dimensions; the level set is a
    // hyperbola branch and midpoints lie above it
    let a = [1.0, 1.0];
    let b = [3.0, (FRAC_PI_2 - 3f64.atan()).tan()];
    assert!(midpoint_margin(ProbeSide::Convex, FRAC_PI_2, &a, &b) > 0.0);
}

proptest! {
    #[test]
    fn linearizations_match_directional_derivatives(seed in any::<u64>(), n in 2usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let lam: Vec<f64> = (0..n).map(|k| 0.3 + 0.7 * k as f64).collect();
        let m = random_with_spectrum(&lam, &mut rng);
        let x = random_symmetric(n, 1.0, &mut rng);
        for op in [OperatorModel::slag(n, 0.0).unwrap(), OperatorModel::sigma2(n), OperatorModel::lambda_ratio(n)] {
            let exact = op.linearization(&m).inner(&x);
            let fd = directional(&op, &m, &x, 1e-5);
            prop_assert!((exact - fd).abs() < 1e-7 * (1.0 + exact.abs()), "{:?}: {} vs {}", op.kind, exact, fd);
        }
    }

    #[test]
    fn second_derivative_matches_second_difference(seed in any::<u64>(), n in 2usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let lam: Vec<f64> = (0..n).map(|k| 0.5 + 0.6 * k as f64).collect();
        let m = random_with_spectrum(&lam, &mut rng);
        let x = random_symmetric(n, 0.5, &mut rng);
        let spec = eig_sym(&m, DEFAULT_GROUP_TOL).unwrap();
        let fns: [&dyn SpectralFunction; 3] = [&SlagFn, &Sigma2Fn, &LewySurrogate::for_dim(n.max(2))];
        for f in fns {
            let exact = spectral_second_derivative(f, &spec, &x, &x);
            let t = 1e-4;
            let v = |s: f64| spectral_value(f, &m.axpy(s, &x)).unwrap();
            let fd = (v(t) - 2.0 * v(0.0) + v(-t)) / (t * t);
            prop_assert!((exact - fd).abs() < 1e-4 * (1.0 + exact.abs()), "{} vs {}", exact, fd);
        }
    }

    #[test]
    fn slag_phase_is_sum_of_angles(seed in any::<u64>(), n in 1usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let lam: Vec<f64> = (0..n).map(|k| (k as f64 - 2.0) * 1.3).collect();
        let m = random_with_spectrum(&lam, &mut rng);
        let want: f64 = lam.iter().map(|l| l.atan()).sum();
        prop_assert!((slag_phase(&m) - want).abs() < 1e-12);
    }

    #[test]
    fn surrogate_shares_the_sigma2_level_set(l1 in 0.1f64..3.0, l2 in 0.1f64..3.0) {
        let l3 = (1.0 - l1 * l2) / (l1 + l2);
        prop_assume!(l3 > -lewy_shift(3) + 1e-3);
        let s = LewySurrogate::for_dim(3);
        let target = -1.0 / (2.0 * lewy_shift(3));
        prop_assert!((s.value(&[l1, l2, l3]) - target).abs() < 1e-10);
    }
}
