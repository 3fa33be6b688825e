//! Damped Newton for `F(D²_h u) = level` with Dirichlet data.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::fd::{hessian_at, residual_field, ResidualField};
use super::linear::{bicgstab, LinearOperator};
use super::GridField;
use crate::error::{arg, Error, Result};
use crate::operators::{OperatorKind, OperatorModel};
use crate::spectral::eigenvalues;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LineSearch {
    /// Step multiplier after a rejected trial, in `(0, 1)`.
    pub backtrack: f64,
    /// Required relative decrease of the sup residual per unit step.
    pub sufficient_decrease: f64,
    pub max_backtracks: usize,
}

impl Default for LineSearch {
    fn default() -> Self {
        Self {
            backtrack: 0.5,
            sufficient_decrease: 1e-4,
            max_backtracks: 30,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveConfig {
    pub max_newton_iters: usize,
    /// Target sup-norm of the operator residual.
    pub residual_tol: f64,
    pub damping: LineSearch,
    /// Krylov relative tolerance is `min(linear_solver_tol, ‖R‖_∞)`, so the
    /// inner solves tighten as Newton converges.
    pub linear_solver_tol: f64,
    pub max_linear_iters: usize,
}

impl Default for SolveConfig {
    fn default() -> Self {
        Self {
            max_newton_iters: 50,
            residual_tol: 1e-10,
            damping: LineSearch::default(),
            linear_solver_tol: 1e-2,
            max_linear_iters: 10_000,
        }
    }
}

impl SolveConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.residual_tol > 0.0) || !(self.linear_solver_tol > 0.0) {
            return arg("solver tolerances must be positive");
        }
        let b = self.damping.backtrack;
        if !(b > 0.0 && b < 1.0) {
            return arg(format!("backtracking factor {b} not in (0, 1)"));
        }
        if !(self.damping.sufficient_decrease >= 0.0 && self.damping.sufficient_decrease < 1.0) {
            return arg("sufficient-decrease constant must lie in [0, 1)");
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub iterations: usize,
    pub final_residual: f64,
    /// Smallest eigenvalue of the operator linearization over interior nodes.
    pub min_ellipticity: f64,
    /// For σ₂: whether every interior node is on the positive branch.
    pub branch_flag: Option<bool>,
    pub residual_history: Vec<f64>,
    pub linear_iterations: Vec<usize>,
    pub step_lengths: Vec<f64>,
}

/// Frozen linearization `δ ↦ Σ a_ij (D²_h δ)_ij`, identity on boundary rows.
struct NewtonSystem<'a> {
    grid: &'a GridField,
    strides: Vec<usize>,
    interior: Vec<bool>,
    /// Per node: `n` diagonal coefficients then the `i < j` pairs.
    coeffs: Vec<f64>,
    width: usize,
}

impl<'a> NewtonSystem<'a> {
    fn assemble(u: &'a GridField, op: &OperatorModel) -> Self {
        let n = u.n_dims();
        let width = n + n * (n - 1) / 2;
        let interior: Vec<bool> = (0..u.len()).map(|k| u.is_interior(k)).collect();
        let mut coeffs = vec![0.0; u.len() * width];
        coeffs
            .par_chunks_mut(width)
            .enumerate()
            .filter(|(k, _)| interior[*k])
            .for_each(|(k, c)| {
                let a = op.linearization(&hessian_at(u, k));
                let mut p = n;
                for i in 0..n {
                    c[i] = a.get(i, i);
                    for j in (i + 1)..n {
                        c[p] = a.get(i, j);
                        p += 1;
                    }
                }
            });
        Self {
            grid: u,
            strides: u.strides(),
            interior,
            coeffs,
            width,
        }
    }
}

impl LinearOperator for NewtonSystem<'_> {
    fn dim(&self) -> usize {
        self.grid.len()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let n = self.grid.n_dims();
        let h = self.grid.spacing();
        let (ih2, iq) = (1.0 / (h * h), 1.0 / (4.0 * h * h));
        let st = &self.strides;
        y.par_iter_mut().enumerate().for_each(|(k, out)| {
            if !self.interior[k] {
                *out = x[k];
                return;
            }
            let c = &self.coeffs[k * self.width..(k + 1) * self.width];
            let mut acc = 0.0;
            let mut p = n;
            for i in 0..n {
                let s = st[i];
                acc += c[i] * (x[k + s] - 2.0 * x[k] + x[k - s]) * ih2;
                for j in (i + 1)..n {
                    let t = st[j];
                    let d = x[k + s + t] - x[k + s - t] - x[k - s + t] + x[k - s - t];
                    // both (i,j) and (j,i) entries contribute
                    acc += 2.0 * c[p] * d * iq;
                    p += 1;
                }
            }
            *out = acc;
        });
    }

    fn diagonal(&self) -> Vec<f64> {
        let n = self.grid.n_dims();
        let h = self.grid.spacing();
        (0..self.grid.len())
            .map(|k| {
                if !self.interior[k] {
                    return 1.0;
                }
                let c = &self.coeffs[k * self.width..k * self.width + n];
                -2.0 * c.iter().sum::<f64>() / (h * h)
            })
            .collect()
    }
}

/// Boolean-sum (transfinite) interpolation of the boundary values, so the
/// guess reproduces any data that is affine along some axis in every term.
fn transfinite(boundary: &GridField) -> Vec<f64> {
    let n = boundary.n_dims();
    let st = boundary.strides();
    let shape = boundary.shape();
    let mut f: Vec<f64> = boundary.values().to_vec();
    for (k, v) in f.iter_mut().enumerate() {
        if boundary.is_interior(k) {
            *v = 0.0;
        }
    }
    let mut g = f.clone();
    for d in 0..n {
        let last = shape[d] - 1;
        let prev = g.clone();
        for (k, gv) in g.iter_mut().enumerate() {
            let i = boundary.node(k)[d];
            let t = i as f64 / last as f64;
            let lo = prev[k - i * st[d]];
            let hi = prev[k + (last - i) * st[d]];
            *gv = prev[k] - ((1.0 - t) * lo + t * hi);
        }
    }
    f.iter().zip(&g).map(|(a, b)| a - b).collect()
}

/// Product bubble `Π (x_d − lo_d)(hi_d − x_d)`, scaled to 1 at the center.
fn bubble(u: &GridField) -> Vec<f64> {
    let lo = u.origin().to_vec();
    let hi = u.extent_max();
    (0..u.len())
        .map(|k| {
            let x = u.coords(k);
            (0..u.n_dims())
                .map(|d| {
                    let half = 0.5 * (hi[d] - lo[d]);
                    (x[d] - lo[d]) * (hi[d] - x[d]) / (half * half)
                })
                .product()
        })
        .collect()
}

/// Starting iterate: transfinite blend of the boundary data, minus a convex
/// bubble for σ₂ until every interior node is on the positive branch.
pub fn initial_guess(op: &OperatorModel, boundary: &GridField) -> Result<GridField> {
    let base = boundary.with_values(transfinite(boundary))?;
    if op.kind != OperatorKind::Sigma2PositiveBranch {
        return Ok(base);
    }
    let b = bubble(boundary);
    let mut kappa = 0.0;
    for _ in 0..40 {
        let vals: Vec<f64> = base.values().iter().zip(&b).map(|(u, b)| u - kappa * b).collect();
        let cand = base.with_values(vals)?;
        let r = residual_field(&cand, op)?;
        match r.first_off_branch() {
            None => return Ok(cand),
            Some(_) => kappa = if kappa == 0.0 { 1.0 } else { 2.0 * kappa },
        }
    }
    let r = residual_field(&base, op)?;
    let k = r.first_off_branch().unwrap_or(0);
    Err(Error::BranchLoss {
        node: base.node(k),
        sigma1: hessian_at(&base, k).trace(),
    })
}

fn min_ellipticity(u: &GridField, op: &OperatorModel) -> f64 {
    (0..u.len())
        .into_par_iter()
        .filter(|&k| u.is_interior(k))
        .map(|k| {
            let lin = op.linearization(&hessian_at(u, k));
            eigenvalues(&lin).map(|l| l[0]).unwrap_or(f64::NAN)
        })
        .reduce(|| f64::INFINITY, f64::min)
}

fn branch_error(u: &GridField, r: &ResidualField) -> Option<Error> {
    r.first_off_branch().map(|k| Error::BranchLoss {
        node: u.node(k),
        sigma1: hessian_at(u, k).trace(),
    })
}

/// Solves the Dirichlet problem whose boundary values are taken from
/// `boundary` (interior values there are ignored).
pub fn solve_dirichlet(
    op: &OperatorModel,
    boundary: &GridField,
    config: &SolveConfig,
    initial: Option<&GridField>,
) -> Result<(GridField, SolveReport)> {
    config.validate()?;
    if op.n != boundary.n_dims() {
        return arg(format!("operator is {}-dimensional, grid {}", op.n, boundary.n_dims()));
    }
    let mut u = match initial {
        Some(init) => {
            if !init.same_geometry(boundary) {
                return arg("initial guess and boundary grids differ");
            }
            let vals = (0..boundary.len())
                .map(|k| if boundary.is_interior(k) { init.values()[k] } else { boundary.values()[k] })
                .collect();
            boundary.with_values(vals)?
        }
        None => initial_guess(op, boundary)?,
    };
    let sigma2 = op.kind == OperatorKind::Sigma2PositiveBranch;
    let mut r = residual_field(&u, op)?;
    if sigma2 {
        if let Some(e) = branch_error(&u, &r) {
            return Err(e);
        }
    }
    let mut report = SolveReport {
        iterations: 0,
        final_residual: r.sup_norm(),
        min_ellipticity: f64::NAN,
        branch_flag: sigma2.then_some(true),
        residual_history: vec![r.sup_norm()],
        linear_iterations: Vec::new(),
        step_lengths: Vec::new(),
    };
    let ls = config.damping;
    loop {
        let sup = r.sup_norm();
        if sup <= config.residual_tol {
            break;
        }
        if report.iterations >= config.max_newton_iters {
            return Err(Error::MaxIterations {
                iterations: report.iterations,
                history: report.residual_history,
            });
        }
        let system = NewtonSystem::assemble(&u, op);
        let rhs: Vec<f64> = r.residual.values().iter().map(|v| -v).collect();
        let eta = config.linear_solver_tol.min(sup).max(1e-12);
        let lin = bicgstab(&system, &rhs, eta, config.max_linear_iters)?;
        report.linear_iterations.push(lin.iterations);

        let mut t = 1.0;
        let mut accepted = None;
        let mut last_branch = None;
        for _ in 0..=ls.max_backtracks {
            let vals: Vec<f64> = u.values().iter().zip(&lin.x).map(|(a, d)| a + t * d).collect();
            let cand = u.with_values(vals)?;
            let rc = residual_field(&cand, op)?;
            if sigma2 {
                if let Some(e) = branch_error(&cand, &rc) {
                    last_branch = Some(e);
                    t *= ls.backtrack;
                    continue;
                }
            }
            if rc.sup_norm() <= (1.0 - ls.sufficient_decrease * t) * sup {
                accepted = Some((cand, rc));
                break;
            }
            last_branch = None;
            t *= ls.backtrack;
        }
        report.iterations += 1;
        match accepted {
            Some((cand, rc)) => {
                u = cand;
                r = rc;
                report.step_lengths.push(t);
                report.residual_history.push(r.sup_norm());
            }
            None => {
                if let Some(e) = last_branch {
                    return Err(e);
                }
                return Err(Error::Stagnation {
                    iteration: report.iterations,
                    history: report.residual_history,
                });
            }
        }
    }
    report.final_residual = r.sup_norm();
    report.min_ellipticity = min_ellipticity(&u, op);
    Ok((u, report))
}
