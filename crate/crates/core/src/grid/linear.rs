//! Jacobi-preconditioned BiCGSTAB for the Newton systems.
//!
//! The frozen-coefficient linearization `δ ↦ F_ij(D²u)·(D²_h δ)_ij` is not
//! symmetric on the grid (the coefficients vary from node to node), so a
//! nonsymmetric Krylov method is used.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::spectral::dot;

pub trait LinearOperator: Sync {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[f64], y: &mut [f64]);
    fn diagonal(&self) -> Vec<f64>;
}

#[derive(Clone, Debug)]
pub struct LinearSolve {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub relative_residual: f64,
}

fn pdot(a: &[f64], b: &[f64]) -> f64 {
    if a.len() < 4096 {
        return dot(a, b);
    }
    a.par_chunks(4096)
        .zip(b.par_chunks(4096))
        .map(|(x, y)| dot(x, y))
        .sum()
}

/// Solves `A x = b` to `‖b − Ax‖ ≤ rel_tol·‖b‖`, starting from zero.
pub fn bicgstab<A: LinearOperator>(a: &A, b: &[f64], rel_tol: f64, max_iter: usize) -> Result<LinearSolve> {
    let n = a.dim();
    let dinv: Vec<f64> = a
        .diagonal()
        .into_iter()
        .map(|d| if d.abs() > 0.0 { 1.0 / d } else { 1.0 })
        .collect();
    let precond = |v: &[f64], out: &mut [f64]| {
        out.par_iter_mut()
            .zip(v.par_iter().zip(dinv.par_iter()))
            .for_each(|(o, (x, d))| *o = x * d);
    };
    let bnorm = pdot(b, b).sqrt();
    let mut x = vec![0.0; n];
    if bnorm == 0.0 {
        return Ok(LinearSolve {
            x,
            iterations: 0,
            relative_residual: 0.0,
        });
    }
    let mut r = b.to_vec();
    let r0 = r.clone();
    let (mut rho, mut alpha, mut omega) = (1.0, 1.0, 1.0);
    let mut v = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut phat = vec![0.0; n];
    let mut shat = vec![0.0; n];
    let mut s = vec![0.0; n];
    let mut t = vec![0.0; n];
    let mut rel = 1.0;
    for it in 1..=max_iter {
        let rho_new = pdot(&r0, &r);
        if rho_new == 0.0 || omega == 0.0 {
            return Err(Error::LinearSolver(format!(
                "BiCGSTAB breakdown at iteration {it} (relative residual {rel:e})"
            )));
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        p.par_iter_mut()
            .zip(r.par_iter().zip(v.par_iter()))
            .for_each(|(p, (r, v))| *p = r + beta * (*p - omega * v));
        precond(&p, &mut phat);
        a.apply(&phat, &mut v);
        alpha = rho / pdot(&r0, &v);
        s.par_iter_mut()
            .zip(r.par_iter().zip(v.par_iter()))
            .for_each(|(s, (r, v))| *s = r - alpha * v);
        let snorm = pdot(&s, &s).sqrt();
        if snorm <= rel_tol * bnorm {
            x.par_iter_mut()
                .zip(phat.par_iter())
                .for_each(|(x, p)| *x += alpha * p);
            return Ok(LinearSolve {
                x,
                iterations: it,
                relative_residual: snorm / bnorm,
            });
        }
        precond(&s, &mut shat);
        a.apply(&shat, &mut t);
        let tt = pdot(&t, &t);
        omega = if tt > 0.0 { pdot(&t, &s) / tt } else { 0.0 };
        x.par_iter_mut()
            .zip(phat.par_iter().zip(shat.par_iter()))
            .for_each(|(x, (p, sh))| *x += alpha * p + omega * sh);
        r.par_iter_mut()
            .zip(s.par_iter().zip(t.par_iter()))
            .for_each(|(r, (s, t))| *r = s - omega * t);
        rel = pdot(&r, &r).sqrt() / bnorm;
        if rel <= rel_tol {
            return Ok(LinearSolve {
                x,
                iterations: it,
                relative_residual: rel,
            });
        }
    }
    Err(Error::LinearSolver(format!(
        "BiCGSTAB reached {max_iter} iterations at relative residual {rel:e}"
    )))
}
