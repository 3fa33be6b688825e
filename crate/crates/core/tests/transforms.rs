use std::f64::consts::{FRAC_PI_2, FRAC_PI_3, PI};

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use slaglab::grid::{fd_hessian, GridField};
use slaglab::operators::{classify_phase, lewy_shift};
use slaglab::spectral::{eigenvalues, random_orthogonal, random_with_spectrum, SymMatrix};
use slaglab::transforms::{
    distance_expansion_check, eigen_rotation_map, expansion_bound, legendre_lewy_transform, legendre_transform,
    mu_from_lambda, rotate_graph, rotate_hessian, tracked_rotated_phase, GraphSample, RotationParams,
};
use slaglab::Error;

#[test]
fn rotating_a_round_quadratic() {
    let l = 1.0 / 3f64.sqrt();
    let u = GridField::cube(3, 13, 1.0, |x| 0.5 * l * (x[0] * x[0] + x[1] * x[1] + x[2] * x[2])).unwrap();
    let g = rotate_graph(&u, &RotationParams::new(FRAC_PI_3).unwrap()).unwrap();
    let h = fd_hessian(&g.u_bar, &g.u_bar.node(g.u_bar.center_flat())).unwrap();
    assert!(h.sub(&SymMatrix::scalar(3, -l)).frobenius_norm() < 1e-6, "{h:?}");
    assert!(g.report.min_jacobian_det > 0.0);
    assert!(g.report.curl_residual < 1e-6);
    // x̄ = (c + s·l) x, so the inscribed box is the input box scaled
    let scale = 0.5 + 3f64.sqrt() / 2.0 * l;
    for (lo, hi) in g.report.box_lo.iter().zip(&g.report.box_hi) {
        assert!(*lo >= -scale - 1e-9 && *hi <= scale + 1e-9);
    }
}

#[test]
fn rotating_a_skew_quadratic_matches_the_eigenvalue_map() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let lam = [0.4, 1.0, 2.5];
    let q = SymMatrix::from_spectrum(&lam, &random_orthogonal(3, &mut rng));
    let u = GridField::cube(3, 13, 1.0, |x| 0.5 * q.quad_form(x)).unwrap();
    let p = RotationParams::new(0.6).unwrap();
    let g = rotate_graph(&u, &p).unwrap();
    let h = fd_hessian(&g.u_bar, &g.u_bar.node(g.u_bar.center_flat())).unwrap();
    let want = rotate_hessian(&q, &p).unwrap();
    assert!(h.sub(&want).frobenius_norm() < 1e-4 * want.frobenius_norm(), "{h:?} vs {want:?}");
}

#[test]
fn rotation_parameters() {
    assert!(RotationParams::new(3.5).is_err());
    assert!(RotationParams::new(f64::NAN).is_err());
    assert!(RotationParams::new(0.0).unwrap().a.is_none());
    let p = RotationParams::new(1.0).unwrap();
    assert!((p.a.unwrap() - (1.0 - FRAC_PI_2).tan()).abs() < 1e-12);
    assert!((p.t() - 1f64.tan()).abs() < 1e-12);
    let spec = classify_phase(3, FRAC_PI_2).unwrap();
    let crit = RotationParams::critical_rotation(&spec).unwrap();
    assert!((crit.beta - (FRAC_PI_2 - PI / 6.0)).abs() < 1e-15);
    assert!(RotationParams::with_margin(0.2, 0.1).is_err());
    assert!((RotationParams::with_margin(-0.4, -0.2).unwrap().validity_margin - 0.1).abs() < 1e-15);
}

#[test]
fn pole_is_reported() {
    let p = RotationParams::new(FRAC_PI_2).unwrap();
    assert!(matches!(eigen_rotation_map(0.0, &p), Err(Error::Pole(_))));
    assert!(matches!(mu_from_lambda(&[1.0, -2.0], 1.0), Err(Error::Domain(_))));
}

#[test]
fn tracked_phase_follows_the_branch() {
    // rotating a single angle past −π/2 keeps the total continuous
    let phase = tracked_rotated_phase(&[0.0], 2.0);
    assert!((phase + 2.0).abs() < 1e-12);
}

proptest! {
    #[test]
    fn rotated_angles_shift_by_beta(seed in any::<u64>(), beta in 0.05f64..1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let angles = [-0.4, 0.3, 1.0];
        let lam: Vec<f64> = angles.iter().map(|t: &f64| t.tan()).collect();
        let m = random_with_spectrum(&lam, &mut rng);
        let r = rotate_hessian(&m, &RotationParams::new(beta).unwrap()).unwrap();
        let mut got: Vec<f64> = eigenvalues(&r).unwrap().iter().map(|l| l.atan()).collect();
        got.sort_by(f64::total_cmp);
        for (g, t) in got.iter().zip(angles) {
            prop_assert!((g - (t - beta)).abs() < 1e-12);
        }
        prop_assert!((tracked_rotated_phase(&lam, beta) - (angles.iter().sum::<f64>() - 3.0 * beta)).abs() < 1e-12);
    }

    #[test]
    fn distance_expansion_bound_holds(seed in any::<u64>(), gamma in -0.6f64..0.6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let lo = gamma.tan();
        let lam = [lo, lo + 0.5, lo + 2.0];
        let q = random_with_spectrum(&lam, &mut rng);
        let samples: Vec<GraphSample> = (0..40)
            .map(|k| {
                let x: Vec<f64> = (0..3).map(|d| ((k * 7 + d * 3) as f64 * 0.37).sin()).collect();
                GraphSample { y: q.mul_vec(&x), x, hessian: None }
            })
            .collect();
        // β̃ = π/2 + α + δ with α below γ
        let alpha = gamma - 0.4;
        let p = RotationParams::with_margin(alpha, gamma).unwrap();
        let rep = distance_expansion_check(&samples, &p, gamma).unwrap();
        prop_assert!(rep.holds(1e-12), "{:?}", rep);
        prop_assert!((rep.bound - expansion_bound(&p, gamma)).abs() < 1e-15);
        prop_assert!(rep.bound > 0.0);
    }
}

#[test]
fn legendre_of_quadratic_and_round_trip() {
    let u = GridField::cube(2, 41, 1.0, |x| 0.5 * (2.0 * x[0] * x[0] + x[1] * x[1])).unwrap();
    let w = legendre_transform(&u).unwrap();
    for k in 0..w.len() {
        let y = w.coords(k);
        if y[0].abs() <= 2.0 && y[1].abs() <= 1.0 {
            assert!((w.values()[k] - 0.5 * (y[0] * y[0] / 2.0 + y[1] * y[1])).abs() < 1e-10);
        }
    }
    let back = legendre_transform(&w).unwrap();
    for k in 0..back.len() {
        let x = back.coords(k);
        if x[0].abs() <= 0.9 && x[1].abs() <= 0.9 {
            assert!((back.values()[k] - 0.5 * (2.0 * x[0] * x[0] + x[1] * x[1])).abs() < 1e-3, "{x:?}");
        }
    }
}

#[test]
fn lewy_transform_of_sigma2_quadratic() {
    let l = 1.0 / 3f64.sqrt();
    let u = GridField::cube(3, 13, 0.5, |x| 0.5 * l * (x[0] * x[0] + x[1] * x[1] + x[2] * x[2])).unwrap();
    let r = legendre_lewy_transform(&u, 3).unwrap();
    let m = lewy_shift(3);
    assert_eq!(r.m, m);
    let mu = 1.0 / (l + m);
    assert!((r.mu_range.0 - mu).abs() < 1e-9 && (r.mu_range.1 - mu).abs() < 1e-9);
    let w = &r.w_field;
    let h = fd_hessian(w, &w.node(w.center_flat())).unwrap();
    assert!(h.sub(&SymMatrix::scalar(3, mu)).frobenius_norm() < 1e-6);
    assert!(legendre_lewy_transform(&u, 1).is_err());
}
