use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

use proptest::prelude::*;

use slaglab::catalog::{quadratic_sphere_function, AmbientRestriction, CatalogEntry, Jet};
use slaglab::grid::GridField;
use slaglab::operators::classify_phase;
use slaglab::rank::{
    eigen_fields, hom2_audit, min_principle_check, rank_report, splitting_detector, Hom2AuditConfig, Hom2Verdict,
    MinPrinciple, SplitTolerances, SplitVerdict,
};
use slaglab::spectral::SymMatrix;

#[test]
fn rank_of_a_degenerate_quadratic() {
    let u = GridField::cube(3, 9, 1.0, |x| 0.5 * (x[0] * x[0] + 2.0 * x[1] * x[1])).unwrap();
    let spec = classify_phase(3, FRAC_PI_4 + 2f64.atan()).unwrap();
    let r = rank_report(&u, 0.0, &spec, 1e-6).unwrap();
    assert_eq!((r.min_rank, r.max_rank), (2, 2));
    assert_eq!(r.ranks.len(), 7 * 7 * 7);
    let shifted = rank_report(&u, 1.0, &spec, 1e-6).unwrap();
    assert_eq!(shifted.max_rank, 2);
    assert!(r.interior_min_sites.is_empty());
    assert!((r.threshold_margin - (0.0 - spec.lower_threshold)).abs() < 1e-9);
}

#[test]
fn eigen_fields_live_on_the_interior_subgrid() {
    let u = CatalogEntry::warren().sample_field(9, 0.5).unwrap();
    let ef = eigen_fields(&u).unwrap();
    assert_eq!(ef.lambdas.len(), 3);
    assert_eq!(ef.lambdas[0].shape(), &[7, 7, 7]);
    assert!((ef.lambdas[0].origin()[0] - (u.origin()[0] + u.spacing())).abs() < 1e-15);
    for k in 0..ef.lambdas[0].len() {
        assert!(ef.lambdas[0].values()[k] <= ef.lambdas[1].values()[k]);
        let v = &ef.vectors[0][k];
        assert!((v.iter().map(|a| a * a).sum::<f64>() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn min_principle_verdicts() {
    let flat = GridField::cube(2, 7, 1.0, |_| 3.0).unwrap();
    assert_eq!(min_principle_check(&flat, 1e-9).name(), "constant");
    let tilted = GridField::cube(2, 7, 1.0, |x| x[0] + 0.3 * x[1]).unwrap();
    assert!(matches!(min_principle_check(&tilted, 1e-9), MinPrinciple::BoundaryMin { .. }));
    let bowl = GridField::cube(2, 7, 1.0, |x| x[0] * x[0] + x[1] * x[1]).unwrap();
    match min_principle_check(&bowl, 1e-9) {
        MinPrinciple::InteriorMin { sites, depth } => {
            assert_eq!(sites, vec![vec![3, 3]]);
            assert!(depth > 0.0);
        }
        other => panic!("{other:?}"),
    }
    // a flat interior valley below the boundary has no strict site
    let valley = GridField::cube(2, 7, 1.0, |x| if x[0].abs() < 0.5 && x[1].abs() < 0.5 { 0.0 } else { 1.0 }).unwrap();
    assert_eq!(min_principle_check(&valley, 1e-9).name(), "indeterminate");
}

proptest! {
    #[test]
    fn shifted_bowl_minimum_is_found(cx in -0.6f64..0.6, cy in -0.6f64..0.6) {
        let bowl = GridField::cube(2, 13, 1.0, |x| (x[0] - cx).powi(2) + (x[1] - cy).powi(2)).unwrap();
        prop_assert!(min_principle_check(&bowl, 1e-12).is_interior_min());
    }
}

#[test]
fn a_planar_quadratic_splits_along_its_flat_direction() {
    let u = GridField::cube(3, 9, 1.0, |x| 0.5 * (0.3 * x[0] * x[0] + x[1] * x[1] + 2.0 * x[2] * x[2])).unwrap();
    let spec = classify_phase(3, FRAC_PI_2).unwrap();
    let r = splitting_detector(&u, &spec, &SplitTolerances::default()).unwrap();
    assert_eq!(r.verdict, SplitVerdict::Split);
    assert!((r.direction[0].abs() - 1.0).abs() < 1e-9);
    assert!((r.mean_lambda_min - 0.3).abs() < 1e-9);

    // below the angle threshold the split is not asserted
    let low = GridField::cube(3, 9, 1.0, |x| 0.5 * (-0.9 * x[0] * x[0] + x[1] * x[1] + 2.0 * x[2] * x[2])).unwrap();
    let r = splitting_detector(&low, &spec, &SplitTolerances::default()).unwrap();
    assert!(r.threshold_margin <= 0.0);
    assert_ne!(r.verdict, SplitVerdict::Split);
}

#[test]
fn hom2_audit_verdicts() {
    let cfg = Hom2AuditConfig {
        samples: 300,
        ..Hom2AuditConfig::default()
    };
    let g = quadratic_sphere_function(SymMatrix::identity(3));
    let spec = classify_phase(3, 3.0 * FRAC_PI_4).unwrap();
    let a = hom2_audit(&g, &spec, &cfg).unwrap();
    assert_eq!(a.verdict, Hom2Verdict::QuadraticConfirmed);
    assert!(a.equation_residual < 1e-12 && a.margin > 0.0);
    assert_eq!(a, hom2_audit(&g, &spec, &cfg).unwrap());

    let wrong = classify_phase(3, 0.5).unwrap();
    assert_eq!(hom2_audit(&g, &wrong, &cfg).unwrap().verdict, Hom2Verdict::Abstain);

    // a genuinely non-quadratic g: the audit abstains because it is not a solution
    let g = AmbientRestriction::new(3, |x: &[f64]| {
        let v = x[0].powi(4);
        let mut h = SymMatrix::zeros(3);
        h.set(0, 0, 12.0 * x[0] * x[0]);
        Jet { value: v, gradient: vec![4.0 * x[0].powi(3), 0.0, 0.0], hessian: h }
    });
    let a = hom2_audit(&g, &spec, &cfg).unwrap();
    assert_eq!(a.verdict, Hom2Verdict::Abstain);
    assert!(a.quadratic_deviation > 1e-3);
}
