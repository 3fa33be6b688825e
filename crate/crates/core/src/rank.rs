//! Eigenvalue fields of discrete Hessians and the verdicts built on them:
//! rank of `D²u − aI`, interior minima of `λ_min`, Hessian splitting along
//! a fixed direction, and audits of 2-homogeneous candidates.

use std::collections::VecDeque;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::catalog::{homogeneous2_extension, hom2_lower_bound_constant, SphereFunction};
use crate::error::{arg, Result};
use crate::grid::{hessian_at, GridField};
use crate::operators::PhaseSpec;
use crate::spectral::{dot, eig_sym, gaussian, norm, solve_dense, SymMatrix, DEFAULT_GROUP_TOL};

/// Per-node eigen-decompositions of the FD Hessian on the interior nodes.
///
/// Fields live on the sub-grid of interior nodes (one node in from every
/// face), so their own boundary is the ring adjacent to the domain boundary.
#[derive(Clone, Debug)]
pub struct EigenFields {
    /// `λ₁ ≤ … ≤ λₙ` as fields.
    pub lambdas: Vec<GridField>,
    /// `vectors[i][k]`: unit eigenvector of `λᵢ` at sub-grid node `k`,
    /// sign-aligned along a spanning tree grown from the center.
    pub vectors: Vec<Vec<Vec<f64>>>,
    /// Frobenius norm of the Hessian per node.
    pub hessian_norms: Vec<f64>,
}

/// Sub-grid of interior nodes and the map to flat indices of `u`.
fn interior_grid(u: &GridField) -> Result<(GridField, Vec<usize>)> {
    let shape: Vec<usize> = u.shape().iter().map(|s| s - 2).collect();
    let origin: Vec<f64> = u.origin().iter().map(|o| o + u.spacing()).collect();
    let count: usize = shape.iter().product();
    let sub = GridField::new(shape, origin, u.spacing(), vec![0.0; count])?;
    let map = (0..count)
        .map(|k| {
            let node: Vec<usize> = sub.node(k).iter().map(|i| i + 1).collect();
            u.flat_index(&node).expect("inside")
        })
        .collect();
    Ok((sub, map))
}

fn neighbours(grid: &GridField, k: usize, full: bool) -> Vec<usize> {
    let node = grid.node(k);
    let n = node.len();
    let mut out = Vec::new();
    for code in 0..3usize.pow(n as u32) {
        let mut rest = code;
        let mut nb = Vec::with_capacity(n);
        let mut ok = true;
        let mut moved = 0;
        for d in 0..n {
            let off = (rest % 3) as isize - 1;
            rest /= 3;
            if off != 0 {
                moved += 1;
            }
            let i = node[d] as isize + off;
            if i < 0 || i >= grid.shape()[d] as isize {
                ok = false;
            }
            nb.push(i.max(0) as usize);
        }
        if ok && moved > 0 && (full || moved == 1) {
            out.push(grid.flat_index(&nb).expect("inside"));
        }
    }
    out
}

/// Flips vectors so each agrees in sign with its parent in a breadth-first
/// spanning tree from the center node.
fn align_signs(grid: &GridField, vecs: &mut [Vec<f64>]) {
    let start = grid.center_flat();
    let mut seen = vec![false; vecs.len()];
    let mut queue = VecDeque::from([start]);
    seen[start] = true;
    while let Some(k) = queue.pop_front() {
        for j in neighbours(grid, k, false) {
            if !seen[j] {
                seen[j] = true;
                if dot(&vecs[j], &vecs[k]) < 0.0 {
                    vecs[j].iter_mut().for_each(|v| *v = -*v);
                }
                queue.push_back(j);
            }
        }
    }
}

pub fn eigen_fields(u: &GridField) -> Result<EigenFields> {
    let (sub, map) = interior_grid(u)?;
    let n = u.n_dims();
    let spectra = map
        .par_iter()
        .map(|&k| {
            let h = hessian_at(u, k);
            eig_sym(&h, DEFAULT_GROUP_TOL).map(|s| (s, h.frobenius_norm()))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut lambdas = Vec::with_capacity(n);
    let mut vectors = Vec::with_capacity(n);
    for i in 0..n {
        lambdas.push(sub.with_values(spectra.iter().map(|(s, _)| s.eigenvalues[i]).collect())?);
        let mut v: Vec<Vec<f64>> = spectra.iter().map(|(s, _)| s.vector(i)).collect();
        align_signs(&sub, &mut v);
        vectors.push(v);
    }
    Ok(EigenFields {
        lambdas,
        vectors,
        hessian_norms: spectra.iter().map(|(_, f)| *f).collect(),
    })
}

/// Sub-grid nodes at least one step from the sub-grid boundary whose value
/// is below every neighbour (full stencil) by more than `tol`.
fn strict_interior_minima(field: &GridField, tol: f64) -> Vec<usize> {
    let v = field.values();
    (0..field.len())
        .filter(|&k| field.is_interior(k))
        .filter(|&k| neighbours(field, k, true).iter().all(|&j| v[j] - v[k] > tol))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankReport {
    pub shift: f64,
    pub tol_rank: f64,
    /// Rank of `D²u − aI` per interior node (sub-grid order).
    pub ranks: Vec<usize>,
    pub min_rank: usize,
    pub max_rank: usize,
    pub lambda_min_field: GridField,
    pub lambda_max_field: GridField,
    /// Nodes of the input grid where `λ_min` has a strict interior minimum.
    pub interior_min_sites: Vec<Vec<usize>>,
    /// `min (arctan λ_min − (Θ − π)/n)` over nodes.
    pub threshold_margin: f64,
}

/// Rank of `D²u − aI` counted as `#{i : |λᵢ − a| > tol_rank·max(1, ‖D²u‖_F)}`.
pub fn rank_report(u: &GridField, a: f64, spec: &PhaseSpec, tol_rank: f64) -> Result<RankReport> {
    let ef = eigen_fields(u)?;
    let n = u.n_dims();
    let ranks: Vec<usize> = (0..ef.lambdas[0].len())
        .map(|k| {
            let scale = tol_rank * ef.hessian_norms[k].max(1.0);
            (0..n).filter(|&i| (ef.lambdas[i].values()[k] - a).abs() > scale).count()
        })
        .collect();
    let lmin = ef.lambdas[0].clone();
    let lmax = ef.lambdas[n - 1].clone();
    let sites = strict_interior_minima(&lmin, tol_rank)
        .into_iter()
        .map(|k| lmin.node(k).iter().map(|i| i + 1).collect())
        .collect();
    let threshold_margin = lmin
        .values()
        .iter()
        .map(|l| l.atan() - spec.lower_threshold)
        .fold(f64::INFINITY, f64::min);
    Ok(RankReport {
        shift: a,
        tol_rank,
        min_rank: ranks.iter().cloned().min().unwrap_or(0),
        max_rank: ranks.iter().cloned().max().unwrap_or(0),
        ranks,
        lambda_min_field: lmin,
        lambda_max_field: lmax,
        interior_min_sites: sites,
        threshold_margin,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "verdict")]
pub enum MinPrinciple {
    /// Spread below tolerance.
    Constant { spread: f64 },
    /// The minimum sits on the outer ring of the field.
    BoundaryMin { min: f64, ring_min: f64 },
    /// Strict interior minima (field nodes).
    InteriorMin { sites: Vec<Vec<usize>>, depth: f64 },
    /// Minimum attained inside only on a plateau, no strict site.
    Indeterminate { min: f64, ring_min: f64 },
}

impl MinPrinciple {
    pub fn name(&self) -> &'static str {
        match self {
            MinPrinciple::Constant { .. } => "constant",
            MinPrinciple::BoundaryMin { .. } => "boundary_min",
            MinPrinciple::InteriorMin { .. } => "interior_min",
            MinPrinciple::Indeterminate { .. } => "indeterminate",
        }
    }

    pub fn is_interior_min(&self) -> bool {
        matches!(self, MinPrinciple::InteriorMin { .. })
    }
}

/// Classifies where a scalar field attains its minimum.
pub fn min_principle_check(field: &GridField, tol: f64) -> MinPrinciple {
    let v = field.values();
    let min = v.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max - min < tol {
        return MinPrinciple::Constant { spread: max - min };
    }
    let sites = strict_interior_minima(field, tol);
    if !sites.is_empty() {
        let depth = sites
            .iter()
            .map(|&k| {
                neighbours(field, k, true)
                    .iter()
                    .map(|&j| v[j] - v[k])
                    .fold(f64::INFINITY, f64::min)
            })
            .fold(0.0, f64::max);
        return MinPrinciple::InteriorMin {
            sites: sites.iter().map(|&k| field.node(k)).collect(),
            depth,
        };
    }
    let ring_min = (0..field.len())
        .filter(|&k| !field.is_interior(k))
        .map(|k| v[k])
        .fold(f64::INFINITY, f64::min);
    if ring_min <= min + tol {
        MinPrinciple::BoundaryMin { min, ring_min }
    } else {
        MinPrinciple::Indeterminate { min, ring_min }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitTolerances {
    pub eigenvalue: f64,
    /// Radians.
    pub direction: f64,
}

impl Default for SplitTolerances {
    fn default() -> Self {
        Self {
            eigenvalue: 1e-8,
            direction: 1e-3,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitVerdict {
    Split,
    NoSplit,
    Indeterminate,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitReport {
    pub direction: Vec<f64>,
    pub eigenvalue_spread: f64,
    pub direction_spread: f64,
    pub mean_lambda_min: f64,
    pub threshold_margin: f64,
    pub verdict: SplitVerdict,
}

/// Tests whether `λ_min` is constant with a fixed eigendirection.
pub fn splitting_detector(u: &GridField, spec: &PhaseSpec, tols: &SplitTolerances) -> Result<SplitReport> {
    let ef = eigen_fields(u)?;
    let lmin = ef.lambdas[0].values();
    let vecs = &ef.vectors[0];
    let n = u.n_dims();
    let mut e = vec![0.0; n];
    for v in vecs {
        for (a, b) in e.iter_mut().zip(v) {
            *a += b;
        }
    }
    let len = norm(&e);
    if len == 0.0 {
        e = vecs[0].clone();
    } else {
        e.iter_mut().for_each(|a| *a /= len);
    }
    let direction_spread = vecs
        .iter()
        .map(|v| dot(v, &e).abs().min(1.0).acos())
        .fold(0.0, f64::max);
    let lo = lmin.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = lmin.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let eigenvalue_spread = hi - lo;
    let threshold_margin = lo.atan() - spec.lower_threshold;
    let mut verdict = if eigenvalue_spread < tols.eigenvalue && direction_spread < tols.direction {
        SplitVerdict::Split
    } else if eigenvalue_spread > 10.0 * tols.eigenvalue || direction_spread > 10.0 * tols.direction {
        SplitVerdict::NoSplit
    } else {
        SplitVerdict::Indeterminate
    };
    if verdict == SplitVerdict::Split && threshold_margin <= 0.0 {
        verdict = SplitVerdict::Indeterminate;
    }
    Ok(SplitReport {
        direction: e,
        eigenvalue_spread,
        direction_spread,
        mean_lambda_min: lmin.iter().sum::<f64>() / lmin.len() as f64,
        threshold_margin,
        verdict,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hom2AuditConfig {
    pub samples: usize,
    pub seed: u64,
    /// Tolerance on the equation residual `|Σ arctan λᵢ − Θ|`.
    pub equation_tol: f64,
    /// Tolerance on the deviation of `g` from its best-fit quadratic.
    pub quadratic_tol: f64,
}

impl Default for Hom2AuditConfig {
    fn default() -> Self {
        Self {
            samples: 2000,
            seed: 0,
            equation_tol: 1e-8,
            quadratic_tol: 1e-8,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Hom2Verdict {
    /// Not a solution of the phase equation; nothing is asserted.
    Abstain,
    /// Angle margin not positive; rigidity is not asserted.
    NoConclusion,
    /// Margin positive and `u` is quadratic, as rigidity requires.
    QuadraticConfirmed,
    /// Margin positive but `u` is not quadratic.
    Contradiction,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hom2Audit {
    pub n: usize,
    pub theta: f64,
    pub samples: usize,
    pub seed: u64,
    pub min_lambda_min: f64,
    /// `min arctan λ_min − (Θ − π)/n` over the sphere.
    pub margin: f64,
    pub equation_residual: f64,
    /// `tan(π/5)`.
    pub lower_bound_constant: f64,
    /// For `n = 5`, `Θ = 0`: whether `λ_min ≤ −tan(π/5)` somewhere.
    pub reaches_lower_bound: Option<bool>,
    pub quadratic_fit: Vec<f64>,
    pub quadratic_deviation: f64,
    pub verdict: Hom2Verdict,
}

fn sphere_points(n: usize, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let v: Vec<f64> = (0..n).map(|_| gaussian(&mut rng)).collect();
        let r = norm(&v);
        if r > 1e-8 {
            out.push(v.iter().map(|x| x / r).collect());
        }
    }
    out
}

/// Least-squares `A` with `g(ξ) ≈ ½⟨ξ, Aξ⟩`.
fn fit_quadratic(points: &[Vec<f64>], values: &[f64], n: usize) -> Result<SymMatrix> {
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i..n).map(move |j| (i, j))).collect();
    let p = pairs.len();
    let mut ata = vec![0.0; p * p];
    let mut atb = vec![0.0; p];
    for (xi, &g) in points.iter().zip(values) {
        let row: Vec<f64> = pairs
            .iter()
            .map(|&(i, j)| if i == j { 0.5 * xi[i] * xi[i] } else { xi[i] * xi[j] })
            .collect();
        for a in 0..p {
            atb[a] += row[a] * g;
            for b in 0..p {
                ata[a * p + b] += row[a] * row[b];
            }
        }
    }
    // ξ on the sphere makes Σ ξᵢ² = 1 a linear relation; regularize lightly
    for a in 0..p {
        ata[a * p + a] += 1e-12;
    }
    let coef = solve_dense(p, &ata, &atb)?;
    let mut m = SymMatrix::zeros(n);
    for (&(i, j), c) in pairs.iter().zip(coef) {
        m.set(i, j, c);
    }
    Ok(m)
}

/// Audits a 2-homogeneous `u = |x|² g(x/|x|)` against the phase equation.
pub fn hom2_audit(g: &dyn SphereFunction, spec: &PhaseSpec, config: &Hom2AuditConfig) -> Result<Hom2Audit> {
    let n = g.dim();
    if n != spec.n {
        return arg(format!("sphere function lives in dimension {n}, phase spec in {}", spec.n));
    }
    let points = sphere_points(n, config.samples, config.seed);
    let mut min_lambda = f64::INFINITY;
    let mut residual: f64 = 0.0;
    let mut values = Vec::with_capacity(points.len());
    for xi in &points {
        let jet = homogeneous2_extension(g, xi)?;
        let lam = crate::spectral::eigenvalues(&jet.hessian)?;
        min_lambda = min_lambda.min(lam[0]);
        let phase: f64 = lam.iter().map(|l| l.atan()).sum();
        residual = residual.max((phase - spec.theta).abs());
        values.push(jet.value);
    }
    let fit = fit_quadratic(&points, &values, n)?;
    let deviation = points
        .iter()
        .zip(&values)
        .map(|(xi, v)| (v - 0.5 * fit.quad_form(xi)).abs())
        .fold(0.0, f64::max);
    let margin = min_lambda.atan() - spec.lower_threshold;
    let bound = hom2_lower_bound_constant();
    let verdict = if residual > config.equation_tol {
        Hom2Verdict::Abstain
    } else if margin <= 0.0 {
        Hom2Verdict::NoConclusion
    } else if deviation <= config.quadratic_tol {
        Hom2Verdict::QuadraticConfirmed
    } else {
        Hom2Verdict::Contradiction
    };
    Ok(Hom2Audit {
        n,
        theta: spec.theta,
        samples: points.len(),
        seed: config.seed,
        min_lambda_min: min_lambda,
        margin,
        equation_residual: residual,
        lower_bound_constant: bound,
        reaches_lower_bound: (n == 5 && spec.theta == 0.0).then_some(min_lambda <= -bound),
        quadratic_fit: fit.entries().to_vec(),
        quadratic_deviation: deviation,
        verdict,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn neighbour_counts() {
        let g = GridField::cube(3, 5, 1.0, |_| 0.0).unwrap();
        let c = g.center_flat();
        assert_eq!(neighbours(&g, c, true).len(), 26);
        assert_eq!(neighbours(&g, c, false).len(), 6);
        assert_eq!(neighbours(&g, 0, true).len(), 7);
    }

    #[test]
    fn min_principle_verdicts() {
        let flat = GridField::cube(2, 7, 1.0, |_| 2.0).unwrap();
        assert_eq!(min_principle_check(&flat, 1e-9).name(), "constant");
        let bowl = GridField::cube(2, 7, 1.0, |x| x[0] * x[0] + x[1] * x[1]).unwrap();
        assert_eq!(min_principle_check(&bowl, 1e-9).name(), "interior_min");
        let tilt = GridField::cube(2, 7, 1.0, |x| x[0] + 0.1 * x[1] * x[1]).unwrap();
        assert_eq!(min_principle_check(&tilt, 1e-9).name(), "boundary_min");
    }
}
