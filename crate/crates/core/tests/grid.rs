use proptest::prelude::*;

use slaglab::catalog::CatalogEntry;
use slaglab::grid::{
    fd_gradient, fd_hessian, field_from_bytes, field_to_bytes, read_field, residual_field, slice_2d, slice_to_csv,
    slice_to_pgm, solve_dirichlet, write_field, GridField, SolveConfig,
};
use slaglab::operators::OperatorModel;
use slaglab::spectral::SymMatrix;
use slaglab::Error;

proptest! {
    #[test]
    fn binary_round_trip(
        dims in 2usize..4,
        nodes in 5usize..8,
        spacing in 0.01f64..2.0,
        seed in any::<u32>(),
    ) {
        let f = GridField::cube(dims, nodes, spacing, |x| {
            x.iter().enumerate().map(|(i, v)| (v * (i as f64 + 1.0) + seed as f64).sin()).sum()
        })
        .unwrap();
        let back = field_from_bytes(&field_to_bytes(&f)).unwrap();
        prop_assert_eq!(back, f);
    }

    #[test]
    fn fd_derivatives_exact_on_quadratics(a in prop::array::uniform6(-2.0f64..2.0), b in prop::array::uniform3(-1.0f64..1.0)) {
        let q = SymMatrix::from_rows(&[
            vec![a[0], a[3], a[4]],
            vec![a[3], a[1], a[5]],
            vec![a[4], a[5], a[2]],
        ])
        .unwrap();
        let f = GridField::cube(3, 7, 1.0, |x| 0.5 * q.quad_form(x) + b[0] * x[0] + b[1] * x[1] + b[2] * x[2]).unwrap();
        let node = [2, 3, 4];
        let h = fd_hessian(&f, &node).unwrap();
        prop_assert!(h.sub(&q).frobenius_norm() < 1e-11);
        let x = f.coords(f.flat_index(&node).unwrap());
        let g = fd_gradient(&f, &node).unwrap();
        let want = q.mul_vec(&x);
        for i in 0..3 {
            prop_assert!((g[i] - want[i] - b[i]).abs() < 1e-11);
        }
    }
}

#[test]
fn legacy_header_defaults() {
    let mut bytes = br#"{"magic":"slaglab-grid","shape":[5,5],"spacing":0.5}"#.to_vec();
    bytes.push(b'\n');
    for v in 0..25 {
        bytes.extend_from_slice(&(v as f64).to_le_bytes());
    }
    let f = field_from_bytes(&bytes).unwrap();
    assert_eq!(f.origin(), &[0.0, 0.0]);
    assert_eq!(f.value(&[1, 0]).unwrap(), 5.0);
}

#[test]
fn corrupt_files_report_offsets() {
    let f = GridField::cube(2, 5, 1.0, |x| x[0]).unwrap();
    let bytes = field_to_bytes(&f);
    let nl = bytes.iter().position(|&b| b == b'\n').unwrap();

    let truncated = &bytes[..bytes.len() - 3];
    assert!(matches!(field_from_bytes(truncated), Err(Error::Parse { .. })));

    let mut nan = bytes.clone();
    nan[nl + 1 + 8 * 4..nl + 1 + 8 * 5].copy_from_slice(&f64::NAN.to_le_bytes());
    match field_from_bytes(&nan) {
        Err(Error::Parse { offset, .. }) => assert_eq!(offset, nl + 1 + 32),
        other => panic!("expected parse error, got {other:?}"),
    }

    let bad_magic = String::from_utf8_lossy(&bytes).replacen("slaglab-grid", "other-grid", 1);
    assert!(matches!(field_from_bytes(bad_magic.as_bytes()), Err(Error::Parse { .. })));
    assert!(matches!(field_from_bytes(b"no newline"), Err(Error::Parse { .. })));
}

#[test]
fn files_round_trip_and_missing_files_fail() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("w.grid");
    let f = CatalogEntry::warren().sample_field(5, 0.5).unwrap();
    write_field(&path, &f).unwrap();
    assert_eq!(read_field(&path).unwrap(), f);
    assert!(matches!(read_field(dir.path().join("absent")), Err(Error::Io(_))));
}

#[test]
fn slices_and_images() {
    let f = GridField::cube(3, 5, 1.0, |x| x[0] + 10.0 * x[2]).unwrap();
    let s = slice_2d(&f, 2, 0.5).unwrap();
    assert_eq!((s.rows, s.cols), (5, 5));
    assert!(s.values.iter().all(|v| (v - (5.0 + v - 5.0)).abs() < 1e-12));
    assert_eq!(slice_to_csv(&s).lines().count(), 5);
    let pgm = slice_to_pgm(&s);
    assert!(pgm.starts_with(b"P5\n5 5\n255\n"));
    assert_eq!(pgm.len(), "P5\n5 5\n255\n".len() + 25);
}

#[test]
fn sigma2_solve_reproduces_a_quadratic() {
    let l = 1.0 / 3f64.sqrt();
    let exact = GridField::cube(3, 9, 0.5, |x| 0.5 * l * (x[0] * x[0] + x[1] * x[1] + x[2] * x[2])).unwrap();
    let (u, rep) = solve_dirichlet(&OperatorModel::sigma2(3), &exact, &SolveConfig::default(), None).unwrap();
    assert!(rep.final_residual <= 1e-10);
    assert_eq!(rep.branch_flag, Some(true));
    assert!(rep.min_ellipticity > 0.0);
    assert!(u.sup_diff(&exact, |_| true).unwrap() < 1e-9);
    assert!(residual_field(&u, &OperatorModel::sigma2(3)).unwrap().sup_norm() <= 1e-10);
}

#[test]
fn slag_solve_converges_to_li() {
    let exact = CatalogEntry::li().sample_field(9, 0.5).unwrap();
    let op = OperatorModel::slag(3, 0.0).unwrap();
    let (u, rep) = solve_dirichlet(&op, &exact, &SolveConfig::default(), None).unwrap();
    assert!(rep.iterations <= 12);
    assert!(u.sup_diff(&exact, |_| true).unwrap() < 1e-8);
}

#[test]
fn solver_rejects_bad_configuration_and_dimensions() {
    let f = GridField::cube(2, 5, 1.0, |x| x[0] * x[0]).unwrap();
    let bad = SolveConfig {
        residual_tol: -1.0,
        ..SolveConfig::default()
    };
    assert!(solve_dirichlet(&OperatorModel::sigma2(2), &f, &bad, None).is_err());
    assert!(matches!(
        solve_dirichlet(&OperatorModel::sigma2(3), &f, &SolveConfig::default(), None),
        Err(Error::Argument(_))
    ));
}

#[test]
fn geometry_helpers() {
    let f = GridField::cube(2, 5, 1.0, |_| 0.0).unwrap();
    assert_eq!(f.spacing(), 0.5);
    assert_eq!(f.node(f.center_flat()), vec![2, 2]);
    assert_eq!(f.interior_indices(1).len(), 9);
    assert_eq!(f.interior_indices(2).len(), 1);
    assert!(!f.is_interior(0));
    assert_eq!(f.extent_max(), vec![1.0, 1.0]);
    assert!(GridField::new(vec![2, 2], vec![0.0, 0.0], 1.0, vec![0.0; 3]).is_err());
}
