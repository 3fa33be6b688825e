//! Rotation of a discrete gradient graph and resampling of the rotated
//! potential on a uniform grid.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::interp::CubicInterpolator;
use super::{rotate_hessian, GraphSample, RotationParams};
use crate::error::{Error, Result};
use crate::grid::{fd_gradient_fields, hessian_at, GridField};
use crate::spectral::{norm, solve_dense};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RotationReport {
    pub beta: f64,
    pub samples: usize,
    /// Smallest `det(cI + s D²u)` over samples; positive for an orientation
    /// preserving map.
    pub min_jacobian_det: f64,
    /// Smallest `|x̄ᵢ − x̄ⱼ|/|xᵢ − xⱼ|` over grid-neighbour pairs.
    pub min_neighbour_expansion: f64,
    /// Output box, lower and upper corners.
    pub box_lo: Vec<f64>,
    pub box_hi: Vec<f64>,
    pub max_inversion_residual: f64,
    /// `max |∂ᵢ(Dū)ⱼ − ∂ⱼ(Dū)ᵢ|` over interior output nodes.
    pub curl_residual: f64,
}

#[derive(Clone, Debug)]
pub struct RotatedGraph {
    /// Rotated samples `(x̄, ȳ, D²ū)` at the interior nodes of the input.
    pub samples: Vec<GraphSample>,
    /// Rotated potential, zero at the grid center.
    pub u_bar: GridField,
    /// `Dū` on the output grid.
    pub gradient: Vec<GridField>,
    pub report: RotationReport,
}

struct Preimage<'a> {
    params: RotationParams,
    grads: Vec<CubicInterpolator<'a>>,
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl Preimage<'_> {
    /// `(x̄(x), J(x))` with `J = cI + s·D(Du)`.
    fn forward(&self, x: &[f64]) -> Option<(Vec<f64>, Vec<f64>, Vec<f64>)> {
        let n = x.len();
        let (c, s) = (self.params.c, self.params.s);
        let mut xbar = vec![0.0; n];
        let mut du = vec![0.0; n];
        let mut jac = vec![0.0; n * n];
        for i in 0..n {
            let (g, dg) = self.grads[i].eval(x)?;
            du[i] = g;
            xbar[i] = c * x[i] + s * g;
            for j in 0..n {
                jac[i * n + j] = s * dg[j] + if i == j { c } else { 0.0 };
            }
        }
        Some((xbar, du, jac))
    }

    fn inside(&self, x: &[f64], margin: f64) -> bool {
        x.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .all(|(v, (l, h))| *v >= l + margin && *v <= h - margin)
    }

    /// Damped Newton for `x̄(x) = target`; returns `(x, Du(x), residual)`.
    fn invert(&self, target: &[f64], seed: &[f64]) -> Option<(Vec<f64>, Vec<f64>, f64)> {
        let n = target.len();
        let mut x = seed.to_vec();
        let scale = 1.0 + norm(target);
        let (mut xbar, mut du, mut jac) = self.forward(&x)?;
        let mut res = dist(&xbar, target);
        for _ in 0..60 {
            if res <= 1e-12 * scale {
                break;
            }
            let rhs: Vec<f64> = target.iter().zip(&xbar).map(|(t, v)| t - v).collect();
            let dx = solve_dense(n, &jac, &rhs).ok()?;
            let mut t = 1.0;
            let mut improved = false;
            for _ in 0..30 {
                let cand: Vec<f64> = x.iter().zip(&dx).map(|(a, d)| a + t * d).collect();
                if let Some((xb, d, j)) = self.forward(&cand) {
                    let r = dist(&xb, target);
                    if r < res {
                        x = cand;
                        xbar = xb;
                        du = d;
                        jac = j;
                        res = r;
                        improved = true;
                        break;
                    }
                }
                t *= 0.5;
            }
            if !improved {
                break;
            }
        }
        (res <= 1e-9 * scale).then_some((x, du, res))
    }
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Uniform hash of points for neighbourhood queries.
struct PointHash {
    cell: f64,
    map: HashMap<Vec<i64>, Vec<usize>>,
}

impl PointHash {
    fn new(points: &[Vec<f64>], cell: f64) -> Self {
        let mut map: HashMap<Vec<i64>, Vec<usize>> = HashMap::new();
        for (i, p) in points.iter().enumerate() {
            map.entry(Self::key(p, cell)).or_default().push(i);
        }
        Self { cell, map }
    }

    fn key(p: &[f64], cell: f64) -> Vec<i64> {
        p.iter().map(|v| (v / cell).floor() as i64).collect()
    }

    /// Indices in cells within `radius` cells of `p`.
    fn near(&self, p: &[f64], radius: i64, out: &mut Vec<usize>) {
        out.clear();
        let base = Self::key(p, self.cell);
        let n = base.len();
        let width = (2 * radius + 1) as usize;
        for idx in 0..width.pow(n as u32) {
            let mut rest = idx;
            let key: Vec<i64> = base
                .iter()
                .map(|b| {
                    let o = (rest % width) as i64 - radius;
                    rest /= width;
                    b + o
                })
                .collect();
            if let Some(v) = self.map.get(&key) {
                out.extend_from_slice(v);
            }
        }
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

/// Rotates the gradient graph of `u` by `params.beta` and resamples the
/// rotated potential on a uniform grid inscribed in the image domain.
pub fn rotate_graph(u: &GridField, params: &RotationParams) -> Result<RotatedGraph> {
    let n = u.n_dims();
    let h = u.spacing();
    let strides = u.strides();
    let grad_fields = fd_gradient_fields(u);
    let (c, s) = (params.c, params.s);

    // samples at interior nodes
    let interior = u.interior_indices(1);
    let sampled: Vec<Result<(GraphSample, f64)>> = interior
        .par_iter()
        .map(|&k| {
            let x = u.coords(k);
            let y: Vec<f64> = grad_fields.iter().map(|g| g.values()[k]).collect();
            let hess = hessian_at(u, k);
            let rotated = rotate_hessian(&hess, params).map_err(|e| match e {
                Error::Pole(msg) => Error::Pole(format!("at node {:?} (x = {x:?}): {msg}", u.node(k))),
                other => other,
            })?;
            let jac = hess.scale(s).shift(c);
            let mut sample = GraphSample { x, y, hessian: None }.rotate(params);
            sample.hessian = Some(rotated);
            Ok((sample, jac.determinant()))
        })
        .collect();
    let mut samples = Vec::with_capacity(sampled.len());
    let mut dets = Vec::with_capacity(sampled.len());
    for r in sampled {
        let (smp, det) = r?;
        samples.push(smp);
        dets.push(det);
    }
    let min_det = dets.iter().cloned().fold(f64::INFINITY, f64::min);
    let max_det = dets.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if min_det * max_det <= 0.0 {
        return Err(Error::NonInjective(format!(
            "Jacobian of x -> cx + sDu changes sign or vanishes (det range [{min_det:e}, {max_det:e}]); the distance expansion hypothesis fails"
        )));
    }

    // local image scale from grid neighbours, then duplicate detection
    let pos: HashMap<usize, usize> = interior.iter().enumerate().map(|(i, &k)| (k, i)).collect();
    let xbar: Vec<Vec<f64>> = samples.iter().map(|s| s.x.clone()).collect();
    let mut local = vec![f64::INFINITY; xbar.len()];
    let mut min_expansion = f64::INFINITY;
    for (i, &k) in interior.iter().enumerate() {
        for &st in &strides {
            if let Some(&j) = pos.get(&(k + st)) {
                let d = dist(&xbar[i], &xbar[j]);
                local[i] = local[i].min(d);
                local[j] = local[j].min(d);
                min_expansion = min_expansion.min(d / h);
            }
        }
    }
    let cell = median(local.clone()).max(f64::MIN_POSITIVE);
    let hash = PointHash::new(&xbar, cell);
    let mut near = Vec::new();
    for i in 0..xbar.len() {
        let radius = ((0.5 * local[i] / cell).ceil() as i64).max(1);
        hash.near(&xbar[i], radius, &mut near);
        let ni = u.node(interior[i]);
        for &j in &near {
            if j <= i {
                continue;
            }
            let nj = u.node(interior[j]);
            let cheb = ni.iter().zip(&nj).map(|(a, b)| a.abs_diff(*b)).max().unwrap_or(0);
            if cheb >= 2 && dist(&xbar[i], &xbar[j]) < 0.5 * local[i].min(local[j]) {
                return Err(Error::NonInjective(format!(
                    "nodes {ni:?} and {nj:?} map within half a spacing of each other; the distance expansion hypothesis fails"
                )));
            }
        }
    }

    let pre = Preimage {
        params: *params,
        grads: grad_fields.iter().map(CubicInterpolator::new).collect(),
        lo: u.origin().to_vec(),
        hi: u.extent_max(),
    };
    let seed_for = |target: &[f64], out: &mut Vec<usize>| -> Vec<f64> {
        let mut r = 1;
        loop {
            hash.near(target, r, out);
            if !out.is_empty() || r > 64 {
                break;
            }
            r *= 2;
        }
        let best = out
            .iter()
            .min_by(|&&a, &&b| dist(&xbar[a], target).total_cmp(&dist(&xbar[b], target)));
        match best {
            Some(&j) => samples[j].x.iter().zip(&samples[j].y).map(|(a, b)| c * a - s * b).collect(),
            None => u.coords(u.center_flat()),
        }
    };

    // inscribed output box: shrink the bounding box of the image about the
    // image of the center until every face node has a preimage in the domain
    let center_i = pos[&u.center_flat()];
    let center = xbar[center_i].clone();
    let mut blo: Vec<f64> = (0..n).map(|d| xbar.iter().map(|p| p[d]).fold(f64::INFINITY, f64::min)).collect();
    let mut bhi: Vec<f64> = (0..n).map(|d| xbar.iter().map(|p| p[d]).fold(f64::NEG_INFINITY, f64::max)).collect();
    let shape = u.shape().to_vec();
    let mut accepted = None;
    for _ in 0..60 {
        let ext = (0..n).map(|d| bhi[d] - blo[d]).fold(f64::INFINITY, f64::min);
        let hb = ext / (*shape.iter().max().expect("shape") as f64 - 1.0);
        let mid: Vec<f64> = (0..n).map(|d| 0.5 * (blo[d] + bhi[d])).collect();
        let origin: Vec<f64> = (0..n)
            .map(|d| mid[d] - 0.5 * hb * (shape[d] as f64 - 1.0))
            .collect();
        let probe = GridField::new(shape.clone(), origin.clone(), hb, vec![0.0; u.len()])?;
        let faces_ok = (0..probe.len())
            .into_par_iter()
            .filter(|&k| !probe.is_interior(k))
            .all(|k| {
                let t = probe.coords(k);
                let mut buf = Vec::new();
                let seed = seed_for(&t, &mut buf);
                pre.invert(&t, &seed).is_some_and(|(x, _, _)| pre.inside(&x, h))
            });
        if faces_ok {
            accepted = Some(probe);
            break;
        }
        for d in 0..n {
            blo[d] = center[d] + 0.9 * (blo[d] - center[d]);
            bhi[d] = center[d] + 0.9 * (bhi[d] - center[d]);
        }
    }
    let Some(out) = accepted else {
        return Err(Error::NonInjective("no inscribed box found in the rotated domain".into()));
    };

    let solved: Vec<Option<(Vec<f64>, f64)>> = (0..out.len())
        .into_par_iter()
        .map(|k| {
            let t = out.coords(k);
            let mut buf = Vec::new();
            let seed = seed_for(&t, &mut buf);
            pre.invert(&t, &seed).map(|(x, du, res)| {
                let ybar: Vec<f64> = x.iter().zip(&du).map(|(a, b)| -s * a + c * b).collect();
                (ybar, res)
            })
        })
        .collect();
    let mut gbar = vec![vec![0.0; out.len()]; n];
    let mut max_res: f64 = 0.0;
    for (k, r) in solved.into_iter().enumerate() {
        let Some((ybar, res)) = r else {
            return Err(Error::NonInjective(format!(
                "no preimage for output node {:?}",
                out.node(k)
            )));
        };
        for d in 0..n {
            gbar[d][k] = ybar[d];
        }
        max_res = max_res.max(res);
    }
    let gradient: Vec<GridField> = gbar
        .iter()
        .map(|g| out.with_values(g.clone()))
        .collect::<Result<_>>()?;
    let u_bar = out.with_values(integrate_gradient(&out, &gbar))?;
    let curl = curl_residual(&out, &gbar);
    let report = RotationReport {
        beta: params.beta,
        samples: samples.len(),
        min_jacobian_det: min_det,
        min_neighbour_expansion: min_expansion,
        box_lo: out.origin().to_vec(),
        box_hi: out.extent_max(),
        max_inversion_residual: max_res,
        curl_residual: curl,
    };
    Ok(RotatedGraph {
        samples,
        u_bar,
        gradient,
        report,
    })
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    match n {
        2 => vec![vec![0, 1], vec![1, 0]],
        _ => vec![
            vec![0, 1, 2],
            vec![0, 2, 1],
            vec![1, 0, 2],
            vec![1, 2, 0],
            vec![2, 0, 1],
            vec![2, 1, 0],
        ],
    }
}

/// Potential from a gradient by trapezoid integration along axis-aligned
/// paths from the center node, averaged over all axis orders.
pub(crate) fn integrate_gradient(grid: &GridField, g: &[Vec<f64>]) -> Vec<f64> {
    let n = grid.n_dims();
    let h = grid.spacing();
    let strides = grid.strides();
    let center = grid.node(grid.center_flat());
    let perms = permutations(n);
    (0..grid.len())
        .into_par_iter()
        .map(|k| {
            let target = grid.node(k);
            let mut total = 0.0;
            for perm in &perms {
                let mut cur = center.clone();
                let mut acc = 0.0;
                for &a in perm {
                    let flat = |node: &[usize]| -> usize { node.iter().zip(&strides).map(|(i, s)| i * s).sum() };
                    while cur[a] != target[a] {
                        let from = flat(&cur);
                        let step_up = target[a] > cur[a];
                        if step_up {
                            cur[a] += 1;
                        } else {
                            cur[a] -= 1;
                        }
                        let to = flat(&cur);
                        let avg = 0.5 * (g[a][from] + g[a][to]);
                        acc += if step_up { avg * h } else { -avg * h };
                    }
                }
                total += acc;
            }
            total / perms.len() as f64
        })
        .collect()
}

fn curl_residual(grid: &GridField, g: &[Vec<f64>]) -> f64 {
    let n = grid.n_dims();
    let st = grid.strides();
    let h2 = 2.0 * grid.spacing();
    (0..grid.len())
        .filter(|&k| grid.is_interior(k))
        .map(|k| {
            let mut worst: f64 = 0.0;
            for i in 0..n {
                for j in (i + 1)..n {
                    let dij = (g[j][k + st[i]] - g[j][k - st[i]]) / h2;
                    let dji = (g[i][k + st[j]] - g[i][k - st[j]]) / h2;
                    worst = worst.max((dij - dji).abs());
                }
            }
            worst
        })
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn integrates_exact_gradient_of_quadratic() {
        let grid = GridField::cube(3, 7, 1.0, |_| 0.0).unwrap();
        let g: Vec<Vec<f64>> = (0..3)
            .map(|d| (0..grid.len()).map(|k| (d as f64 + 1.0) * grid.coords(k)[d]).collect())
            .collect();
        let pot = integrate_gradient(&grid, &g);
        for k in 0..grid.len() {
            let x = grid.coords(k);
            let want = 0.5 * (x[0] * x[0] + 2.0 * x[1] * x[1] + 3.0 * x[2] * x[2]);
            assert!((pot[k] - want).abs() < 1e-12);
        }
        assert!(curl_residual(&grid, &g) < 1e-12);
    }
}
