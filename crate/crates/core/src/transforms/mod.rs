//! Changes of variables on gradient graphs: rotation of `(x, Du)` by an
//! angle β, the Legendre transform, and the Legendre–Lewy transform
//! `(u + m|x|²/2)*`, at the eigenvalue level and on grid fields.

mod interp;
mod legendre;
mod rotation;

pub use interp::CubicInterpolator;
pub use legendre::{legendre_lewy_transform, legendre_transform, LewyTransformResult, CONVEXITY_SLACK};
pub use rotation::{rotate_graph, RotatedGraph, RotationReport};

use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};

use crate::error::{arg, domain, Error, Result};
use crate::operators::PhaseSpec;
use crate::spectral::{eig_sym, norm, SymMatrix, DEFAULT_GROUP_TOL};

/// Distance from `±π/2 (mod π)` treated as a pole.
pub const POLE_TOL: f64 = 1e-12;

/// Rotation `x̄ = c x + s Du`, `ȳ = −s x + c Du` with `c = cos β`, `s = sin β`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RotationParams {
    pub beta: f64,
    pub c: f64,
    pub s: f64,
    /// `β − π/2`.
    pub alpha: f64,
    /// `tan α`, absent when `α ≡ π/2 (mod π)`.
    pub a: Option<f64>,
    pub validity_margin: f64,
}

impl RotationParams {
    pub fn new(beta: f64) -> Result<Self> {
        if !beta.is_finite() || beta.abs() > PI {
            return arg(format!("rotation angle {beta} outside [-pi, pi]"));
        }
        let (s, c) = beta.sin_cos();
        let alpha = beta - FRAC_PI_2;
        // tan α = −c/s, undefined when s vanishes
        let a = (s.abs() > 1e-15).then(|| -c / s);
        Ok(Self {
            beta,
            c,
            s,
            alpha,
            a,
            validity_margin: 0.0,
        })
    }

    /// Angle that rotates the phase-Θ equation to total phase `(2 − n)π/2`:
    /// `β = π/2 + (Θ − π)/n`.
    pub fn critical_rotation(spec: &PhaseSpec) -> Result<Self> {
        Self::new(FRAC_PI_2 + spec.lower_threshold)
    }

    /// Rotation by `β̃ = π/2 + α + δ` with `δ = (γ − α)/2`, for Hessians with
    /// `arctan λ ≥ γ > α`. The margin δ keeps every rotated angle at least δ
    /// away from `±π/2`.
    pub fn with_margin(alpha: f64, gamma: f64) -> Result<Self> {
        if !(gamma > alpha) {
            return arg(format!("angle bound gamma = {gamma} must exceed alpha = {alpha}"));
        }
        let delta = (gamma - alpha) / 2.0;
        let mut p = Self::new(FRAC_PI_2 + alpha + delta)?;
        p.validity_margin = delta;
        Ok(p)
    }

    /// `tan β`.
    pub fn t(&self) -> f64 {
        self.s / self.c
    }
}

/// `tan(arctan λ − β)`.
pub fn eigen_rotation_map(lambda: f64, params: &RotationParams) -> Result<f64> {
    let d = lambda.atan() - params.beta;
    if d.cos().abs() < POLE_TOL {
        return Err(Error::Pole(format!(
            "rotated angle arctan({lambda}) - {} = {d} sits on a pole",
            params.beta
        )));
    }
    Ok(d.tan())
}

/// `−aI − (1 + a²)(M − aI)⁻¹`.
pub fn mobius_hessian_map(m: &SymMatrix, a: f64) -> Result<SymMatrix> {
    let shifted = m.shift(-a);
    let lam = eig_sym(&shifted, DEFAULT_GROUP_TOL)?.eigenvalues;
    let gap = lam.iter().fold(f64::INFINITY, |g, l| g.min(l.abs()));
    if gap <= 1e-12 * m.scale_for_tol() {
        return Err(Error::Pole(format!("M - aI is singular (a = {a}, smallest |lambda - a| = {gap:e})")));
    }
    let inv = shifted.inverse().map_err(|e| Error::Pole(e.to_string()))?;
    Ok(inv.scale(-(1.0 + a * a)).shift(-a))
}

/// Rotated Hessian `Q diag(tan(θᵢ − β)) Qᵀ`.
pub fn rotate_hessian(m: &SymMatrix, params: &RotationParams) -> Result<SymMatrix> {
    let spec = eig_sym(m, DEFAULT_GROUP_TOL)?;
    let vals = spec
        .eigenvalues
        .iter()
        .map(|&l| eigen_rotation_map(l, params))
        .collect::<Result<Vec<_>>>()?;
    Ok(SymMatrix::from_spectrum(&vals, &spec.eigenvectors))
}

/// Steps of the homotopy `β·t` used to unwrap rotated angles.
pub const PHASE_TRACK_STEPS: usize = 32;

/// Rotated angles `arctan λ̄ᵢ` followed continuously along `β·t`,
/// `t ∈ [0, 1]`, so they may leave `(−π/2, π/2)`.
pub fn tracked_rotated_angles(lambda: &[f64], beta: f64) -> Vec<f64> {
    lambda
        .iter()
        .map(|&l| {
            let theta = l.atan();
            let mut prev = theta;
            for k in 1..=PHASE_TRACK_STEPS {
                let t = k as f64 / PHASE_TRACK_STEPS as f64;
                let principal = (theta - beta * t).tan().atan();
                // pick the branch principal + jπ closest to the previous step
                let j = ((prev - principal) / PI).round();
                prev = principal + j * PI;
            }
            prev
        })
        .collect()
}

/// Total rotated phase with branch tracking.
pub fn tracked_rotated_phase(lambda: &[f64], beta: f64) -> f64 {
    tracked_rotated_angles(lambda, beta).iter().sum()
}

/// `μᵢ = (λᵢ + m)⁻¹`.
pub fn mu_from_lambda(lambda: &[f64], m: f64) -> Result<Vec<f64>> {
    if let Some((i, l)) = lambda.iter().enumerate().find(|(_, l)| !(**l + m > 0.0)) {
        return domain(format!("lambda[{i}] + m = {} is not positive", l + m));
    }
    Ok(lambda.iter().map(|l| 1.0 / (l + m)).collect())
}

/// A point of a gradient graph `(x, Du(x))` with optional Hessian.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphSample {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub hessian: Option<SymMatrix>,
}

impl GraphSample {
    pub fn rotate(&self, p: &RotationParams) -> GraphSample {
        let x = self.x.iter().zip(&self.y).map(|(x, y)| p.c * x + p.s * y).collect();
        let y = self.x.iter().zip(&self.y).map(|(x, y)| -p.s * x + p.c * y).collect();
        GraphSample {
            x,
            y,
            hessian: None,
        }
    }
}

/// Lower bound on `|x̄² − x̄¹| / |x² − x¹|` for a Hessian with
/// `arctan λ_min ≥ γ`.
///
/// With `ℓ = tan γ`, `u − ℓ|x|²/2` is convex, so for `s ≥ 0` and
/// `c + sℓ ≥ 0`: `|cΔx + sΔDu| = |(c + sℓ)Δx + s(ΔDu − ℓΔx)| ≥ (c + sℓ)|Δx|`.
/// For `γ ≤ 0` this is `c(1 − t·tan|γ|)`, `t = s/c`. Returns 0 when the
/// argument gives nothing.
pub fn expansion_bound(params: &RotationParams, gamma: f64) -> f64 {
    let ell = gamma.tan();
    let b = params.c + params.s * ell;
    if params.s < 0.0 || !(b > 0.0) {
        return 0.0;
    }
    b
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExpansionReport {
    pub min_ratio: f64,
    pub bound: f64,
    pub pairs: usize,
}

impl ExpansionReport {
    pub fn holds(&self, tol: f64) -> bool {
        self.min_ratio >= self.bound - tol
    }
}

/// Smallest distance ratio over all sample pairs (samples hold the
/// unrotated `(x, Du)`).
pub fn distance_expansion_check(samples: &[GraphSample], params: &RotationParams, gamma: f64) -> Result<ExpansionReport> {
    if samples.len() < 2 {
        return arg("distance expansion needs at least two samples");
    }
    let rotated: Vec<GraphSample> = samples.iter().map(|s| s.rotate(params)).collect();
    let mut min_ratio = f64::INFINITY;
    let mut pairs = 0;
    for i in 0..samples.len() {
        for j in (i + 1)..samples.len() {
            let dx: Vec<f64> = samples[i].x.iter().zip(&samples[j].x).map(|(a, b)| a - b).collect();
            let d = norm(&dx);
            if d == 0.0 {
                continue;
            }
            let dbar: Vec<f64> = rotated[i].x.iter().zip(&rotated[j].x).map(|(a, b)| a - b).collect();
            min_ratio = min_ratio.min(norm(&dbar) / d);
            pairs += 1;
        }
    }
    if pairs == 0 {
        return arg("all samples coincide");
    }
    Ok(ExpansionReport {
        min_ratio,
        bound: expansion_bound(params, gamma),
        pairs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::classify_phase;

    #[test]
    fn rotation_examples() {
        let p = RotationParams::new(PI / 3.0).unwrap();
        let v = eigen_rotation_map(1.0 / 3f64.sqrt(), &p).unwrap();
        assert!((v + 1.0 / 3f64.sqrt()).abs() < 1e-15);
        let id = RotationParams::new(0.0).unwrap();
        assert!((eigen_rotation_map(2.5, &id).unwrap() - 2.5).abs() < 1e-14);
        assert!(id.a.is_none());
        let a = p.a.unwrap();
        assert!((p.t() + 1.0 / a).abs() < 1e-12);
        assert!((p.c * p.c + p.s * p.s - 1.0).abs() < 1e-15);
    }

    #[test]
    fn pole_detected() {
        let p = RotationParams::new(FRAC_PI_2).unwrap();
        assert!(matches!(eigen_rotation_map(0.0, &p), Err(Error::Pole(_))));
        assert!(matches!(mobius_hessian_map(&SymMatrix::diag(&[1.0, 2.0]), 2.0), Err(Error::Pole(_))));
    }

    #[test]
    fn mobius_examples() {
        let r = 1.0 / 3f64.sqrt();
        let out = mobius_hessian_map(&SymMatrix::scalar(3, r), -r).unwrap();
        assert!(out.sub(&SymMatrix::scalar(3, -r)).frobenius_norm() < 1e-14);
        let a = 0.7;
        let out = mobius_hessian_map(&SymMatrix::scalar(2, a + 1.0), a).unwrap();
        assert!(out.sub(&SymMatrix::scalar(2, -a - (1.0 + a * a))).frobenius_norm() < 1e-14);
    }

    #[test]
    fn critical_rotation_phase() {
        let spec = classify_phase(3, 0.4).unwrap();
        let p = RotationParams::critical_rotation(&spec).unwrap();
        let lam = vec![(0.4f64 / 3.0).tan(); 3];
        let rotated: f64 = lam.iter().map(|&l| eigen_rotation_map(l, &p).unwrap().atan()).sum();
        assert!((rotated + FRAC_PI_2).abs() < 1e-12);
    }

    #[test]
    fn tracking_unwraps_past_the_pole() {
        // θ = 1.2, β = 2.9: θ − β = −1.7 lies beyond −π/2
        let a = tracked_rotated_angles(&[1.2f64.tan()], 2.9);
        assert!((a[0] + 1.7).abs() < 1e-12);
    }

    #[test]
    fn mu_round_trip() {
        let m = 1.0 / 3f64.sqrt();
        let mu = mu_from_lambda(&[1.0, 1.0, 0.0], m).unwrap();
        assert!((mu[0] - 0.633_974_6).abs() < 1e-7 && (mu[2] - 1.732_050_8).abs() < 1e-7);
        let back: Vec<f64> = mu.iter().map(|v| 1.0 / v - m).collect();
        assert!((back[0] - 1.0).abs() < 1e-15 && back[2].abs() < 1e-15);
        assert!(mu_from_lambda(&[-1.0], m).is_err());
    }

    #[test]
    fn expansion_for_quadratic_is_exact() {
        let lam = 0.8f64;
        let p = RotationParams::new(0.9).unwrap();
        let samples: Vec<GraphSample> = (0..5)
            .map(|i| {
                let x = vec![i as f64 * 0.3, -(i as f64) * 0.1];
                GraphSample {
                    y: x.iter().map(|v| lam * v).collect(),
                    x,
                    hessian: None,
                }
            })
            .collect();
        let rep = distance_expansion_check(&samples, &p, lam.atan()).unwrap();
        assert!((rep.min_ratio - (p.c + p.s * lam)).abs() < 1e-12);
        assert!((rep.bound - (p.c + p.s * lam)).abs() < 1e-12);
    }
}
