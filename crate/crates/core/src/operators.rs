//! Nonlinear Hessian operators and phase structure.
//!
//! The special Lagrangian operator `F(M) = Σ arctan λᵢ(M)`, the quadratic
//! Hessian operator `σ₂(M)` on its positive branch, and the ratio
//! `Λ(μ) = σ_{n−1}(μ)/σ_{n−2}(μ)` are all spectral functions: they depend on
//! `M` only through its eigenvalues. [`SpectralFunction`] captures that, and
//! provides first and second matrix derivatives from the eigenvalue
//! derivatives so that linearizations and second directional derivatives
//! can be evaluated in closed form.

use std::f64::consts::{FRAC_PI_2, PI};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::catalog::{sample_level_set_with, AngleBox};
use crate::error::{arg, domain, Error, Result};
use crate::spectral::{
    eig_sym, eigenvalues, elementary_symmetric, Matrix, Spectrum, SymMatrix, DEFAULT_GROUP_TOL,
};

/// Phase classification relative to `(n − 2)π/2`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseClass {
    Supercritical,
    Critical,
    Subcritical,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseSpec {
    pub n: usize,
    pub theta: f64,
    pub classification: PhaseClass,
    /// `(Θ − π)/n`, the lower Hessian-angle threshold.
    pub lower_threshold: f64,
    /// `(Θ + π)/n`, the upper Hessian-angle threshold.
    pub upper_threshold: f64,
}

impl PhaseSpec {
    /// `(n − 2)π/2`.
    pub fn critical_phase(&self) -> f64 {
        critical_phase(self.n)
    }
}

fn critical_phase(n: usize) -> f64 {
    (n as f64 - 2.0) * FRAC_PI_2
}

pub fn classify_phase(n: usize, theta: f64) -> Result<PhaseSpec> {
    if n < 2 {
        return arg(format!("dimension must be at least 2, got {n}"));
    }
    if !theta.is_finite() || theta.abs() >= n as f64 * FRAC_PI_2 {
        return domain(format!(
            "|theta| = {} must be below n*pi/2 = {}: no Hessian attains this phase",
            theta.abs(),
            n as f64 * FRAC_PI_2
        ));
    }
    let crit = critical_phase(n);
    let classification = if theta.abs() > crit {
        PhaseClass::Supercritical
    } else if theta.abs() == crit {
        PhaseClass::Critical
    } else {
        PhaseClass::Subcritical
    };
    Ok(PhaseSpec {
        n,
        theta,
        classification,
        lower_threshold: (theta - PI) / n as f64,
        upper_threshold: (theta + PI) / n as f64,
    })
}

/// `m = √(2/[n(n−1)])`, the Legendre–Lewy shift.
pub fn lewy_shift(n: usize) -> f64 {
    (2.0 / (n as f64 * (n as f64 - 1.0))).sqrt()
}

/// `Σ arctan λᵢ(M)`.
pub fn slag_phase(m: &SymMatrix) -> f64 {
    let lam = eigenvalues(m).expect("finite symmetric input");
    lam.iter().map(|l| l.atan()).sum()
}

/// `∂F/∂M = (I + M²)⁻¹` for the special Lagrangian operator.
pub fn slag_linearization(m: &SymMatrix) -> SymMatrix {
    let spec = eig_sym(m, DEFAULT_GROUP_TOL).expect("finite symmetric input");
    let f: Vec<f64> = spec.eigenvalues.iter().map(|l| 1.0 / (1.0 + l * l)).collect();
    SymMatrix::from_spectrum(&f, &spec.eigenvectors)
}

/// `(σ₂(λ(M)), σ₁(λ(M)) > 0)`.
pub fn sigma2_positive_branch(m: &SymMatrix) -> (f64, bool) {
    let s1 = m.trace();
    // σ₂ = ((tr M)² − tr M²)/2, no eigen-decomposition needed
    let tr_sq: f64 = m.entries().iter().map(|x| x * x).sum();
    ((s1 * s1 - tr_sq) / 2.0, s1 > 0.0)
}

/// Spread beyond which `Λ` is evaluated on rescaled input.
const LAMBDA_RESCALE_RATIO: f64 = 1e8;

/// `Λ(μ) = σ_{n−1}(μ)/σ_{n−2}(μ)` for componentwise positive `μ`.
pub fn lambda_ratio(mu: &[f64]) -> Result<f64> {
    let n = mu.len();
    if n < 2 {
        return arg("lambda_ratio needs at least two entries");
    }
    if let Some((i, v)) = mu.iter().enumerate().find(|(_, v)| !(**v > 0.0)) {
        return domain(format!("mu[{i}] = {v} is not positive"));
    }
    let max = mu.iter().cloned().fold(f64::MIN, f64::max);
    let min = mu.iter().cloned().fold(f64::MAX, f64::min);
    if max / min > LAMBDA_RESCALE_RATIO {
        // Λ is 1-homogeneous; evaluate on μ/max to keep σ_k in range
        let scaled: Vec<f64> = mu.iter().map(|x| x / max).collect();
        let e = elementary_symmetric(&scaled);
        return Ok(max * e[n - 1] / e[n - 2]);
    }
    let e = elementary_symmetric(mu);
    Ok(e[n - 1] / e[n - 2])
}

/// A symmetric function of eigenvalues, with first and second derivatives.
pub trait SpectralFunction {
    fn value(&self, lambda: &[f64]) -> f64;
    fn gradient(&self, lambda: &[f64]) -> Vec<f64>;
    /// Row-major `n × n` Hessian in eigenvalue space.
    fn hessian(&self, lambda: &[f64]) -> Vec<f64>;
    /// Whether `lambda` lies in the domain where the function is smooth and
    /// the formulas apply.
    fn admissible(&self, lambda: &[f64]) -> bool;
}

/// `Σ arctan λᵢ`.
#[derive(Clone, Copy, Debug, Default)]
pub struct SlagFn;

impl SpectralFunction for SlagFn {
    fn value(&self, lambda: &[f64]) -> f64 {
        lambda.iter().map(|l| l.atan()).sum()
    }
    fn gradient(&self, lambda: &[f64]) -> Vec<f64> {
        lambda.iter().map(|l| 1.0 / (1.0 + l * l)).collect()
    }
    fn hessian(&self, lambda: &[f64]) -> Vec<f64> {
        let n = lambda.len();
        let mut h = vec![0.0; n * n];
        for (i, l) in lambda.iter().enumerate() {
            h[i * n + i] = -2.0 * l / (1.0 + l * l).powi(2);
        }
        h
    }
    fn admissible(&self, _: &[f64]) -> bool {
        true
    }
}

/// `σ₂(λ)`, admissible on the positive branch `σ₁ > 0`.
#[derive(Clone, Copy, Debug, Default)]
pub struct Sigma2Fn;

impl SpectralFunction for Sigma2Fn {
    fn value(&self, lambda: &[f64]) -> f64 {
        elementary_symmetric(lambda)[2]
    }
    fn gradient(&self, lambda: &[f64]) -> Vec<f64> {
        let s1: f64 = lambda.iter().sum();
        lambda.iter().map(|l| s1 - l).collect()
    }
    fn hessian(&self, lambda: &[f64]) -> Vec<f64> {
        let n = lambda.len();
        let mut h = vec![1.0; n * n];
        for i in 0..n {
            h[i * n + i] = 0.0;
        }
        h
    }
    fn admissible(&self, lambda: &[f64]) -> bool {
        lambda.iter().sum::<f64>() > 0.0
    }
}

/// `Λ(μ) = σ_{n−1}(μ)/σ_{n−2}(μ)` on the positive orthant.
#[derive(Clone, Copy, Debug, Default)]
pub struct LambdaRatioFn;

fn sigma_without(mu: &[f64], skip: &[usize], k: isize) -> f64 {
    if k < 0 {
        return 0.0;
    }
    let rest: Vec<f64> = mu
        .iter()
        .enumerate()
        .filter(|(i, _)| !skip.contains(i))
        .map(|(_, &v)| v)
        .collect();
    let e = elementary_symmetric(&rest);
    e.get(k as usize).copied().unwrap_or(0.0)
}

impl SpectralFunction for LambdaRatioFn {
    fn value(&self, mu: &[f64]) -> f64 {
        lambda_ratio(mu).unwrap_or(f64::NAN)
    }
    fn gradient(&self, mu: &[f64]) -> Vec<f64> {
        let n = mu.len() as isize;
        let e = elementary_symmetric(mu);
        let (num, den) = (e[(n - 1) as usize], e[(n - 2) as usize]);
        (0..mu.len())
            .map(|i| {
                let ni = sigma_without(mu, &[i], n - 2);
                let di = sigma_without(mu, &[i], n - 3);
                ni / den - num * di / (den * den)
            })
            .collect()
    }
    fn hessian(&self, mu: &[f64]) -> Vec<f64> {
        let nn = mu.len();
        let n = nn as isize;
        let e = elementary_symmetric(mu);
        let (num, den) = (e[(n - 1) as usize], e[(n - 2) as usize]);
        let ni: Vec<f64> = (0..nn).map(|i| sigma_without(mu, &[i], n - 2)).collect();
        let di: Vec<f64> = (0..nn).map(|i| sigma_without(mu, &[i], n - 3)).collect();
        let mut h = vec![0.0; nn * nn];
        for i in 0..nn {
            for j in 0..nn {
                let (nij, dij) = if i == j {
                    (0.0, 0.0)
                } else {
                    (sigma_without(mu, &[i, j], n - 3), sigma_without(mu, &[i, j], n - 4))
                };
                h[i * nn + j] = nij / den - ni[i] * di[j] / den.powi(2) - ni[j] * di[i] / den.powi(2)
                    - num * dij / den.powi(2)
                    + 2.0 * num * di[i] * di[j] / den.powi(3);
            }
        }
        h
    }
    fn admissible(&self, mu: &[f64]) -> bool {
        mu.iter().all(|&x| x > 0.0)
    }
}

/// `F̃(λ) = −Λ(μ)` with `μᵢ = (λᵢ + m)⁻¹`: the σ₂ operator written in its
/// inverse-convex form on `λ > −m`.
#[derive(Clone, Copy, Debug)]
pub struct LewySurrogate {
    pub m: f64,
}

impl LewySurrogate {
    pub fn for_dim(n: usize) -> Self {
        Self { m: lewy_shift(n) }
    }

    fn mu(&self, lambda: &[f64]) -> Vec<f64> {
        lambda.iter().map(|l| 1.0 / (l + self.m)).collect()
    }
}

impl SpectralFunction for LewySurrogate {
    fn value(&self, lambda: &[f64]) -> f64 {
        -LambdaRatioFn.value(&self.mu(lambda))
    }
    fn gradient(&self, lambda: &[f64]) -> Vec<f64> {
        let mu = self.mu(lambda);
        let g = LambdaRatioFn.gradient(&mu);
        g.iter().zip(&mu).map(|(gi, mi)| gi * mi * mi).collect()
    }
    fn hessian(&self, lambda: &[f64]) -> Vec<f64> {
        let n = lambda.len();
        let mu = self.mu(lambda);
        let g = LambdaRatioFn.gradient(&mu);
        let h = LambdaRatioFn.hessian(&mu);
        let mut out = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                // dμ/dλ = −μ², d²μ/dλ² = 2μ³
                let mut v = -h[i * n + j] * mu[i] * mu[i] * mu[j] * mu[j];
                if i == j {
                    v -= 2.0 * g[i] * mu[i].powi(3);
                }
                out[i * n + j] = v;
            }
        }
        out
    }
    fn admissible(&self, lambda: &[f64]) -> bool {
        lambda.iter().all(|&l| l + self.m > 0.0)
    }
}

/// `−σ₂(λ)^{−1/2}`: the σ₂ operator in an inverse-convex form for convex
/// Hessians (no shift), usable where eigenvalues may vanish.
#[derive(Clone, Copy, Debug, Default)]
pub struct Sigma2Quotient;

impl SpectralFunction for Sigma2Quotient {
    fn value(&self, lambda: &[f64]) -> f64 {
        -Sigma2Fn.value(lambda).powf(-0.5)
    }
    fn gradient(&self, lambda: &[f64]) -> Vec<f64> {
        let s2 = Sigma2Fn.value(lambda);
        let c = 0.5 * s2.powf(-1.5);
        Sigma2Fn.gradient(lambda).into_iter().map(|g| c * g).collect()
    }
    fn hessian(&self, lambda: &[f64]) -> Vec<f64> {
        let n = lambda.len();
        let s2 = Sigma2Fn.value(lambda);
        let g = Sigma2Fn.gradient(lambda);
        let h = Sigma2Fn.hessian(lambda);
        let c1 = 0.5 * s2.powf(-1.5);
        let c2 = -0.75 * s2.powf(-2.5);
        let mut out = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                out[i * n + j] = c1 * h[i * n + j] + c2 * g[i] * g[j];
            }
        }
        out
    }
    fn admissible(&self, lambda: &[f64]) -> bool {
        lambda.iter().all(|&l| l >= 0.0) && Sigma2Fn.value(lambda) > 0.0
    }
}

/// `∂F/∂M = Q diag(∇f(λ)) Qᵀ`.
pub fn spectral_linearization<F: SpectralFunction + ?Sized>(f: &F, spec: &Spectrum) -> SymMatrix {
    SymMatrix::from_spectrum(&f.gradient(&spec.eigenvalues), &spec.eigenvectors)
}

/// Second directional derivative `D²F(M)[Y, Z]` of a spectral function.
///
/// In the eigenbasis of `M`, with `Ỹ = QᵀYQ`:
/// `Σᵢⱼ f_{ij} Ỹᵢᵢ Z̃ⱼⱼ + Σ_{i≠j} (fᵢ − fⱼ)/(λᵢ − λⱼ) Ỹᵢⱼ Z̃ᵢⱼ`,
/// with the quotient replaced by `f_{ii} − f_{ij}` on repeated eigenvalues.
pub fn spectral_second_derivative<F: SpectralFunction + ?Sized>(
    f: &F,
    spec: &Spectrum,
    y: &SymMatrix,
    z: &SymMatrix,
) -> f64 {
    let lam = &spec.eigenvalues;
    let yt = y.congruence(&spec.eigenvectors);
    let zt = z.congruence(&spec.eigenvectors);
    frame_second_derivative(lam, &f.gradient(lam), &f.hessian(lam), &yt, &zt)
}

/// The same quadratic form with `Y`, `Z` already in the eigenframe and the
/// eigenvalue-space gradient `g` and Hessian `h` supplied.
pub(crate) fn frame_second_derivative(lam: &[f64], g: &[f64], h: &[f64], yt: &SymMatrix, zt: &SymMatrix) -> f64 {
    let n = lam.len();
    let scale = lam.iter().fold(1.0f64, |a, l| a.max(l.abs()));
    let mut total = 0.0;
    for i in 0..n {
        for j in 0..n {
            total += h[i * n + j] * yt.get(i, i) * zt.get(j, j);
            if i != j {
                let gap = lam[i] - lam[j];
                let q = if gap.abs() <= 1e-8 * scale {
                    h[i * n + i] - h[i * n + j]
                } else {
                    (g[i] - g[j]) / gap
                };
                total += q * yt.get(i, j) * zt.get(i, j);
            }
        }
    }
    total
}

/// Evaluates a spectral function at a matrix.
pub fn spectral_value<F: SpectralFunction + ?Sized>(f: &F, m: &SymMatrix) -> Result<f64> {
    Ok(f.value(&eigenvalues(m)?))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OperatorKind {
    SlagPhase,
    Sigma2PositiveBranch,
    LambdaRatio,
}

/// An operator together with the level it is solved at.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OperatorModel {
    pub kind: OperatorKind,
    pub n: usize,
    pub level: f64,
}

impl OperatorModel {
    pub fn slag(n: usize, theta: f64) -> Result<Self> {
        classify_phase(n, theta)?;
        Ok(Self {
            kind: OperatorKind::SlagPhase,
            n,
            level: theta,
        })
    }

    /// `σ₂(D²u) = 1` on the positive branch.
    pub fn sigma2(n: usize) -> Self {
        Self {
            kind: OperatorKind::Sigma2PositiveBranch,
            n,
            level: 1.0,
        }
    }

    /// `Λ(D²w) = 1/((n − 1)m)`.
    pub fn lambda_ratio(n: usize) -> Self {
        Self {
            kind: OperatorKind::LambdaRatio,
            n,
            level: 1.0 / ((n as f64 - 1.0) * lewy_shift(n)),
        }
    }

    pub fn function(&self) -> Box<dyn SpectralFunction + Send + Sync> {
        match self.kind {
            OperatorKind::SlagPhase => Box::new(SlagFn),
            OperatorKind::Sigma2PositiveBranch => Box::new(Sigma2Fn),
            OperatorKind::LambdaRatio => Box::new(LambdaRatioFn),
        }
    }

    /// `F(M)` evaluated from eigenvalues.
    pub fn evaluate(&self, m: &SymMatrix) -> Result<f64> {
        match self.kind {
            OperatorKind::SlagPhase => Ok(slag_phase(m)),
            OperatorKind::Sigma2PositiveBranch => Ok(sigma2_positive_branch(m).0),
            OperatorKind::LambdaRatio => lambda_ratio(&eigenvalues(m)?),
        }
    }

    pub fn residual(&self, m: &SymMatrix) -> Result<f64> {
        Ok(self.evaluate(m)? - self.level)
    }

    /// Admissibility of a Hessian for this operator (branch or positivity).
    pub fn admissible(&self, m: &SymMatrix) -> bool {
        match self.kind {
            OperatorKind::SlagPhase => true,
            OperatorKind::Sigma2PositiveBranch => sigma2_positive_branch(m).1,
            OperatorKind::LambdaRatio => eigenvalues(m).map(|l| l[0] > 0.0).unwrap_or(false),
        }
    }

    /// `∂F/∂M_{ij}`.
    pub fn linearization(&self, m: &SymMatrix) -> SymMatrix {
        match self.kind {
            OperatorKind::SlagPhase => slag_linearization(m),
            OperatorKind::Sigma2PositiveBranch => {
                // ∂σ₂/∂M = tr(M) I − M
                m.scale(-1.0).shift(m.trace())
            }
            OperatorKind::LambdaRatio => {
                let spec = eig_sym(m, DEFAULT_GROUP_TOL).expect("finite symmetric input");
                spectral_linearization(&LambdaRatioFn, &spec)
            }
        }
    }
}

/// Which side of the critical band a level-set probe checks.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbeSide {
    /// `Θ ≤ (2 − n)π/2`: midpoints fall in `{F ≤ Θ}`.
    Concave,
    /// `Θ ≥ (n − 2)π/2`: midpoints fall in `{F ≥ Θ}`.
    Convex,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub theta: f64,
    pub n: usize,
    pub trials: usize,
    pub violations: usize,
    /// Smallest signed margin over all pairs; negative means a violation.
    pub worst_margin: f64,
    pub seed: u64,
    pub side: ProbeSide,
}

/// Margin allowed below zero before a midpoint counts as a violation.
pub const PROBE_SLACK: f64 = 1e-12;

impl ProbeSide {
    pub fn for_spec(spec: &PhaseSpec) -> Result<Self> {
        let crit = spec.critical_phase();
        if spec.theta <= -crit {
            Ok(ProbeSide::Concave)
        } else if spec.theta >= crit {
            Ok(ProbeSide::Convex)
        } else {
            Err(Error::Refused(format!(
                "probe not asserted inside the open subcritical band (|theta| < {crit})"
            )))
        }
    }
}

/// Signed midpoint margin for a pair on the level set `{Σ arctan λᵢ = Θ}`.
pub fn midpoint_margin(side: ProbeSide, theta: f64, a: &[f64], b: &[f64]) -> f64 {
    let mid: Vec<f64> = a.iter().zip(b).map(|(x, y)| 0.5 * (x + y)).collect();
    let f = SlagFn.value(&mid);
    match side {
        ProbeSide::Concave => theta - f,
        ProbeSide::Convex => f - theta,
    }
}

/// Monte-Carlo check of level-set convexity/concavity outside the critical band.
pub fn level_set_concavity_probe(spec: &PhaseSpec, trials: usize, rng_seed: u64) -> Result<ProbeReport> {
    let side = ProbeSide::for_spec(spec)?;
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let angles = AngleBox::default();
    let mut violations = 0;
    let mut worst = f64::INFINITY;
    for _ in 0..trials {
        let a = sample_level_set_with(spec, &angles, &mut rng)?;
        let b = sample_level_set_with(spec, &angles, &mut rng)?;
        let margin = midpoint_margin(side, spec.theta, &a, &b);
        if margin < -PROBE_SLACK {
            violations += 1;
        }
        worst = worst.min(margin);
    }
    Ok(ProbeReport {
        theta: spec.theta,
        n: spec.n,
        trials,
        violations,
        worst_margin: if trials == 0 { 0.0 } else { worst },
        seed: rng_seed,
        side,
    })
}

/// Matrix of `∇f` in eigenvalue coordinates, convenience for tests.
pub fn diag_gradient<F: SpectralFunction + ?Sized>(f: &F, lambda: &[f64]) -> Matrix {
    let g = f.gradient(lambda);
    let n = g.len();
    let mut m = Matrix::zeros(n, n);
    for (i, v) in g.into_iter().enumerate() {
        m.set(i, i, v);
    }
    m
}
