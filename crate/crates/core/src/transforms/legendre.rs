//! Discrete Legendre transform by successive one-dimensional conjugates.
//!
//! `sup_x (⟨x, y⟩ − u(x))` over a product grid is an iterated supremum, one
//! axis at a time: `g₀ = −u`, `g_k(y₁..y_k, x_{k+1}..) = sup_{x_k}(x_k y_k + g_{k−1})`.
//! Each 1-D supremum is taken over the grid nodes and refined by the vertex
//! of the parabola through the best node and its neighbours, which makes the
//! transform exact for quadratics.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::mu_from_lambda;
use crate::error::{Error, Result};
use crate::grid::{fd_gradient_fields, fd_hessians, GridField};
use crate::operators::lewy_shift;
use crate::spectral::eigenvalues;

/// Allowed negative Hessian eigenvalue in the convexity pre-check.
pub const CONVEXITY_SLACK: f64 = 1e-9;

/// Padding factor applied to the range of gradients for the output grid.
const Y_PADDING: f64 = 1.05;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LewyTransformResult {
    pub w_field: GridField,
    pub m: f64,
    /// `(min, max)` of `μ = (λ + m)⁻¹` over interior nodes of the input.
    pub mu_range: (f64, f64),
}

/// `max_j (x_j y + φ_j)` with parabolic refinement around the best node.
fn line_sup(xs: &[f64], phi: &[f64], y: f64) -> f64 {
    let n = xs.len();
    let psi = |j: usize| xs[j] * y + phi[j];
    let mut best = 0;
    for j in 1..n {
        if psi(j) > psi(best) {
            best = j;
        }
    }
    let c = best.clamp(1, n - 2);
    let (p0, p1, p2) = (psi(c - 1), psi(c), psi(c + 1));
    let curv = p0 - 2.0 * p1 + p2;
    if curv < 0.0 {
        let h = xs[c + 1] - xs[c];
        let off = 0.5 * (p0 - p2) / curv;
        let xv = xs[c] + off * h;
        // keep the vertex inside the cell adjacent to the discrete maximizer
        if xv >= xs[best.saturating_sub(1)] && xv <= xs[(best + 1).min(n - 1)] {
            let v = p1 - 0.125 * (p2 - p0).powi(2) / curv;
            return v.max(psi(best));
        }
    }
    psi(best)
}

fn worst_eigenvalue(u: &GridField) -> Result<Option<(f64, usize)>> {
    let hs = fd_hessians(u);
    let mut worst: Option<(f64, usize)> = None;
    for (k, h) in hs.iter().enumerate() {
        if let Some(h) = h {
            let l = eigenvalues(h)?[0];
            if worst.map_or(true, |(w, _)| l < w) {
                worst = Some((l, k));
            }
        }
    }
    Ok(worst)
}

/// `w(y) = sup_x (⟨x, y⟩ − u(x))` on a uniform y-grid covering the range of
/// finite-difference gradients (padded by 5%), with the input's node count
/// along every axis.
pub fn legendre_transform(u: &GridField) -> Result<GridField> {
    if let Some((l, k)) = worst_eigenvalue(u)? {
        if l < -CONVEXITY_SLACK {
            return Err(Error::NonConvex {
                eigenvalue: l,
                location: u.coords(k),
            });
        }
    }
    let n = u.n_dims();
    let grads = fd_gradient_fields(u);
    let mut lo = vec![0.0; n];
    let mut hi = vec![0.0; n];
    for d in 0..n {
        lo[d] = grads[d].values().iter().cloned().fold(f64::INFINITY, f64::min);
        hi[d] = grads[d].values().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    }
    let nodes = *u.shape().iter().max().expect("nonempty shape");
    let extent = (0..n).map(|d| hi[d] - lo[d]).fold(0.0, f64::max) * Y_PADDING;
    let extent = if extent > 0.0 { extent } else { 1.0 };
    let hy = extent / (nodes as f64 - 1.0);
    let y_origin: Vec<f64> = (0..n).map(|d| 0.5 * (lo[d] + hi[d]) - 0.5 * extent).collect();
    let y_shape = vec![nodes; n];

    // working array g over mixed coordinates (y_1..y_k, x_{k+1}..x_n)
    let mut shape: Vec<usize> = u.shape().to_vec();
    let mut g: Vec<f64> = u.values().iter().map(|v| -v).collect();
    for d in 0..n {
        let xs: Vec<f64> = (0..shape[d]).map(|i| u.origin()[d] + i as f64 * u.spacing()).collect();
        let ys: Vec<f64> = (0..nodes).map(|i| y_origin[d] + i as f64 * hy).collect();
        let outer: usize = shape[..d].iter().product();
        let inner: usize = shape[d + 1..].iter().product();
        let mut next_shape = shape.clone();
        next_shape[d] = nodes;
        let mut next = vec![0.0; outer * nodes * inner];
        let (len_in, len_out) = (shape[d], nodes);
        next.par_chunks_mut(len_out * inner)
            .enumerate()
            .for_each(|(o, chunk)| {
                let mut phi = vec![0.0; len_in];
                for i in 0..inner {
                    for (j, p) in phi.iter_mut().enumerate() {
                        *p = g[(o * len_in + j) * inner + i];
                    }
                    for (m, &y) in ys.iter().enumerate() {
                        chunk[m * inner + i] = line_sup(&xs, &phi, y);
                    }
                }
            });
        g = next;
        shape = next_shape;
    }
    GridField::new(y_shape, y_origin, hy, g)
}

/// Legendre transform of `u + m|x|²/2`, `m = √(2/(n(n−1)))`.
pub fn legendre_lewy_transform(u: &GridField, n: usize) -> Result<LewyTransformResult> {
    if n < 2 {
        return crate::error::arg("Legendre-Lewy shift needs n >= 2");
    }
    let m = lewy_shift(n);
    let hs = fd_hessians(u);
    let mut mu_min = f64::INFINITY;
    let mut mu_max = f64::NEG_INFINITY;
    for (k, h) in hs.iter().enumerate() {
        let Some(h) = h else { continue };
        let lam = eigenvalues(h)?;
        if lam[0] + m <= CONVEXITY_SLACK {
            return Err(Error::Domain(format!(
                "lambda_min = {} <= -m = {} at {:?}: the shifted potential is not strictly convex and the Legendre-Lewy transform is invalid",
                lam[0],
                -m,
                u.coords(k)
            )));
        }
        for mu in mu_from_lambda(&lam, m)? {
            mu_min = mu_min.min(mu);
            mu_max = mu_max.max(mu);
        }
    }
    let shifted: Vec<f64> = (0..u.len())
        .map(|k| {
            let x = u.coords(k);
            u.values()[k] + 0.5 * m * x.iter().map(|v| v * v).sum::<f64>()
        })
        .collect();
    let w_field = legendre_transform(&u.with_values(shifted)?)?;
    Ok(LewyTransformResult {
        w_field,
        m,
        mu_range: (mu_min, mu_max),
    })
}
