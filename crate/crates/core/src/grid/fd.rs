use rayon::prelude::*;

use super::GridField;
use crate::error::{arg, Result};
use crate::operators::{sigma2_positive_branch, OperatorKind, OperatorModel};
use crate::spectral::SymMatrix;

fn check_interior(u: &GridField, node: &[usize]) -> Result<usize> {
    let k = u.flat_index(node)?;
    if !u.is_interior(k) {
        return arg(format!("node {node:?} is on the boundary; central differences need an interior node"));
    }
    Ok(k)
}

/// Second-order central gradient at an interior node.
pub fn fd_gradient(u: &GridField, node: &[usize]) -> Result<Vec<f64>> {
    let k = check_interior(u, node)?;
    Ok(gradient_at(u, k))
}

pub(crate) fn gradient_at(u: &GridField, k: usize) -> Vec<f64> {
    let v = u.values();
    let h2 = 2.0 * u.spacing();
    u.strides().iter().map(|&s| (v[k + s] - v[k - s]) / h2).collect()
}

/// Central-difference Hessian at an interior node.
pub fn fd_hessian(u: &GridField, node: &[usize]) -> Result<SymMatrix> {
    let k = check_interior(u, node)?;
    Ok(hessian_at(u, k))
}

/// [`fd_hessian`] by flat index. Panics near the boundary.
pub fn hessian_at(u: &GridField, k: usize) -> SymMatrix {
    let v = u.values();
    let n = u.n_dims();
    let st = u.strides();
    let h = u.spacing();
    let (ih2, iq) = (1.0 / (h * h), 1.0 / (4.0 * h * h));
    let mut m = SymMatrix::zeros(n);
    for i in 0..n {
        let s = st[i];
        m.set(i, i, (v[k + s] - 2.0 * v[k] + v[k - s]) * ih2);
        for j in (i + 1)..n {
            let t = st[j];
            let d = v[k + s + t] - v[k + s - t] - v[k - s + t] + v[k - s - t];
            m.set(i, j, d * iq);
        }
    }
    m
}

/// Hessians at every node; `None` on the boundary.
pub fn fd_hessians(u: &GridField) -> Vec<Option<SymMatrix>> {
    (0..u.len())
        .into_par_iter()
        .map(|k| u.is_interior(k).then(|| hessian_at(u, k)))
        .collect()
}

/// Gradient components as fields. Interior nodes use central differences,
/// boundary nodes the one-sided three-point formula (also second order).
pub fn fd_gradient_fields(u: &GridField) -> Vec<GridField> {
    let v = u.values();
    let h = u.spacing();
    let st = u.strides();
    (0..u.n_dims())
        .map(|d| {
            let s = st[d];
            let last = u.shape()[d] - 1;
            let vals: Vec<f64> = (0..u.len())
                .map(|k| {
                    let i = u.node(k)[d];
                    if i == 0 {
                        (-3.0 * v[k] + 4.0 * v[k + s] - v[k + 2 * s]) / (2.0 * h)
                    } else if i == last {
                        (3.0 * v[k] - 4.0 * v[k - s] + v[k - 2 * s]) / (2.0 * h)
                    } else {
                        (v[k + s] - v[k - s]) / (2.0 * h)
                    }
                })
                .collect();
            u.with_values(vals).expect("same geometry")
        })
        .collect()
}

/// Operator residual on the grid with the σ₂ off-branch mask.
#[derive(Clone, Debug)]
pub struct ResidualField {
    pub residual: GridField,
    /// Interior nodes where `σ₁(D²u) ≤ 0`; always false for other operators.
    pub off_branch: Vec<bool>,
}

impl ResidualField {
    pub fn sup_norm(&self) -> f64 {
        self.residual.values().iter().fold(0.0, |a, v| a.max(v.abs()))
    }

    pub fn first_off_branch(&self) -> Option<usize> {
        self.off_branch.iter().position(|&b| b)
    }
}

/// `F(D²u) − level` at interior nodes, zero on the boundary.
pub fn residual_field(u: &GridField, op: &OperatorModel) -> Result<ResidualField> {
    let out: Vec<Result<(f64, bool)>> = (0..u.len())
        .into_par_iter()
        .map(|k| {
            if !u.is_interior(k) {
                return Ok((0.0, false));
            }
            let m = hessian_at(u, k);
            let off = op.kind == OperatorKind::Sigma2PositiveBranch && !sigma2_positive_branch(&m).1;
            Ok((op.residual(&m)?, off))
        })
        .collect();
    let mut vals = Vec::with_capacity(u.len());
    let mut mask = Vec::with_capacity(u.len());
    for r in out {
        let (v, b) = r?;
        vals.push(v);
        mask.push(b);
    }
    Ok(ResidualField {
        residual: u.with_values(vals)?,
        off_branch: mask,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_exact() {
        let u = GridField::cube(3, 7, 1.0, |x| 0.5 * (x[0] * x[0] + 2.0 * x[1] * x[1]) + x[0] * x[2]).unwrap();
        let h = fd_hessian(&u, &[3, 2, 4]).unwrap();
        let want = SymMatrix::from_rows(&[vec![1.0, 0.0, 1.0], vec![0.0, 2.0, 0.0], vec![1.0, 0.0, 0.0]]).unwrap();
        assert!(h.sub(&want).frobenius_norm() < 1e-12);
        let g = fd_gradient(&u, &[3, 2, 4]).unwrap();
        let x = u.coords(u.flat_index(&[3, 2, 4]).unwrap());
        assert!((g[0] - (x[0] + x[2])).abs() < 1e-12);
        assert!(fd_gradient(&u, &[0, 2, 4]).is_err());
    }
}
