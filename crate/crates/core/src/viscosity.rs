//! Differential inequalities for the smallest Hessian eigenvalues along
//! solutions of inverse-convex equations, checked on discrete fields.
//!
//! Along a solution of `F(D²u) = 0`, differentiating twice in the direction
//! of the bottom eigenvector `e₁` gives, at a site where `D²u` is diagonal,
//!
//! `△_F λ₁ = −D²F[X, X] + 2 Σᵢ Σ_{j>1} Fᵢᵢ Xᵢⱼ² / (λ₁ − λⱼ)`, `X = ∂₁D²u`.
//!
//! The part of `−D²F[X, X]` with an index in the bottom block is linear in
//! `Dλ₁` (the drift `B·Dλ₁`); inverse-convexity makes the rest nonpositive.
//! Checks here measure `△_F λ₁` by finite differences on the `λ₁` field and
//! the drift from finite-difference third derivatives.
//!
//! The σ₂ operator is checked in its inverse-convex form `−Λ((λ + m)⁻¹)`,
//! which shares the level set `σ₂ = 1`; along solutions the two forms differ
//! by a positive factor in every term used here.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::grid::{hessian_at, residual_field, GridField};
use crate::operators::{
    frame_second_derivative, spectral_linearization, spectral_value, LewySurrogate, OperatorKind, OperatorModel,
    SlagFn, SpectralFunction,
};
use crate::spectral::{eig_sym, eigenvalues, norm, Spectrum, SymMatrix, DEFAULT_GROUP_TOL};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum InequalityId {
    /// `∂ᵢλ₁ = ∂ᵢu₁₁` at simple `λ₁`.
    #[serde(rename = "eq4.1")]
    GradientIdentity,
    /// Second directional difference against the inverse-convexity bound.
    #[serde(rename = "eq4.2")]
    InverseConvexity,
    /// `△_F λ₁ ≤ B·Dλ₁`, with repeated sites on the partial-sum path.
    #[serde(rename = "eq4.3")]
    Lambda1,
    /// `△_F Σ_{m≤s} λ_m ≤ B·Dλ₁` at repeated sites only.
    #[serde(rename = "eq4.5")]
    PartialSum,
    /// `△_F λ_{a+1} ≤ C λ_{a+1} + B|Dλ_{a+1}|` given `λ₁ = … = λ_a = 0`.
    #[serde(rename = "eq_final")]
    HigherRank,
}

impl InequalityId {
    pub fn name(&self) -> &'static str {
        match self {
            Self::GradientIdentity => "eq4.1",
            Self::InverseConvexity => "eq4.2",
            Self::Lambda1 => "eq4.3",
            Self::PartialSum => "eq4.5",
            Self::HigherRank => "eq_final",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ViscosityConfig {
    /// Largest admissible sup residual `|F(D²u) − level|` of the input.
    pub residual_tol: f64,
    /// Relative gap below which neighbouring eigenvalues count as repeated.
    pub route_tol: f64,
    /// `λ₁ … λ_a` must stay within this of zero for the higher-rank check.
    pub rank_tol: f64,
    /// Reported slack is `slack_factor · h`.
    pub slack_factor: f64,
}

impl Default for ViscosityConfig {
    fn default() -> Self {
        Self {
            residual_tol: 1e-6,
            route_tol: DEFAULT_GROUP_TOL * 10.0,
            rank_tol: 1e-6,
            slack_factor: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ViscosityReport {
    pub inequality: InequalityId,
    pub sites_checked: usize,
    pub simple_sites: usize,
    pub partial_sum_sites: usize,
    /// Sites skipped by the routing rule or outside the operator's regime.
    pub excluded_sites: usize,
    /// Largest `lhs − rhs` over checked sites (0 when none).
    pub worst_margin: f64,
    /// `max(0, worst_margin)`.
    pub worst_violation: f64,
    pub worst_site: Option<Vec<f64>>,
    /// Sup of the per-site drift coefficient `|B|` over simple sites.
    pub drift_bound: f64,
    /// Fitted `C` of the higher-rank inequality.
    pub growth_constant: Option<f64>,
    pub spacing: f64,
    pub slack: f64,
    pub notes: Vec<String>,
}

impl ViscosityReport {
    pub fn passed(&self) -> bool {
        self.worst_violation <= self.slack
    }
}

/// The σ₂ operator's inverse-convex form, or the phase operator itself.
fn inverse_convex_form(op: &OperatorModel) -> Result<Box<dyn SpectralFunction + Send + Sync>> {
    match op.kind {
        OperatorKind::SlagPhase => Ok(Box::new(SlagFn)),
        OperatorKind::Sigma2PositiveBranch => Ok(Box::new(LewySurrogate::for_dim(op.n))),
        OperatorKind::LambdaRatio => domain("the ratio operator has no inverse-convex form implemented"),
    }
}

/// Second directional difference minus the inverse-convexity bound,
/// `−(F(M+tX) − 2F(M) + F(M−tX))/t² − 2 Σ_{i,j>1} Fᵢᵢ λⱼ⁻¹ Xᵢⱼ²`.
///
/// `X` is first restricted to the eigen-indices above the bottom one of
/// `M`. The phase operator needs `M > 0`; σ₂ is taken in the form
/// `−Λ((λ + m)⁻¹)` on `λ > −m`, with `λⱼ⁻¹` replaced by `(λⱼ + m)⁻¹`.
pub fn check_inverse_convexity(op: &OperatorModel, m: &SymMatrix, x: &SymMatrix, t: f64) -> Result<f64> {
    let n = m.dim();
    if x.dim() != n || n != op.n {
        return crate::error::arg(format!(
            "dimension mismatch: M is {n}x{n}, X is {0}x{0}, operator n = {1}",
            x.dim(),
            op.n
        ));
    }
    if !(t > 0.0 && t.is_finite()) {
        return crate::error::arg(format!("step t = {t} must be positive"));
    }
    let form = inverse_convex_form(op)?;
    let shift = match op.kind {
        OperatorKind::Sigma2PositiveBranch => LewySurrogate::for_dim(n).m,
        _ => 0.0,
    };
    let spec = eig_sym(m, DEFAULT_GROUP_TOL)?;
    let lam = &spec.eigenvalues;
    if lam[0] + shift <= 0.0 {
        return domain(format!(
            "lambda_min = {} is outside the inverse-convex regime (needs lambda > {})",
            lam[0], -shift
        ));
    }
    let mut xt = x.congruence(&spec.eigenvectors);
    for j in 0..n {
        xt.set(0, j, 0.0);
    }
    let xp = xt.congruence(&spec.eigenvectors.transpose());
    let f = |a: &SymMatrix| -> Result<f64> {
        let l = eigenvalues(a)?;
        if !form.admissible(&l) {
            return domain("step t leaves the inverse-convex regime");
        }
        Ok(form.value(&l))
    };
    let lhs = -(f(&m.axpy(t, &xp))? - 2.0 * spectral_value(form.as_ref(), m)? + f(&m.axpy(-t, &xp))?) / (t * t);
    let g = form.gradient(lam);
    let mut rhs = 0.0;
    for i in 1..n {
        for j in 1..n {
            rhs += 2.0 * g[i] * xt.get(i, j).powi(2) / (lam[j] + shift);
        }
    }
    Ok(lhs - rhs)
}

/// Per-node Hessian and spectrum on interior nodes.
type Cache = Vec<Option<(SymMatrix, Spectrum)>>;

fn spectra(u: &GridField) -> Result<Cache> {
    (0..u.len())
        .into_par_iter()
        .map(|k| {
            if !u.is_interior(k) {
                return Ok(None);
            }
            let h = hessian_at(u, k);
            let s = eig_sym(&h, DEFAULT_GROUP_TOL)?;
            Ok(Some((h, s)))
        })
        .collect()
}

fn spectrum(cache: &Cache, k: usize) -> &(SymMatrix, Spectrum) {
    cache[k].as_ref().expect("site neighbours are interior")
}

fn stencil_gradient(u: &GridField, k: usize, f: &impl Fn(usize) -> f64) -> Vec<f64> {
    let h2 = 2.0 * u.spacing();
    u.strides().iter().map(|&s| (f(k + s) - f(k - s)) / h2).collect()
}

fn stencil_hessian(u: &GridField, k: usize, f: &impl Fn(usize) -> f64) -> SymMatrix {
    let n = u.n_dims();
    let st = u.strides();
    let h = u.spacing();
    let mut m = SymMatrix::zeros(n);
    for i in 0..n {
        let s = st[i];
        m.set(i, i, (f(k + s) - 2.0 * f(k) + f(k - s)) / (h * h));
        for j in (i + 1)..n {
            let t = st[j];
            let d = f(k + s + t) - f(k + s - t) - f(k - s + t) + f(k - s - t);
            m.set(i, j, d / (4.0 * h * h));
        }
    }
    m
}

/// `∂_d D²u` at a site, each rotated into the site's eigenframe.
fn frame_third_derivatives(u: &GridField, cache: &Cache, k: usize) -> Vec<SymMatrix> {
    let (_, spec) = spectrum(cache, k);
    let h2 = 2.0 * u.spacing();
    u.strides()
        .iter()
        .map(|&s| {
            let d = spectrum(cache, k + s).0.sub(&spectrum(cache, k - s).0).scale(1.0 / h2);
            d.congruence(&spec.eigenvectors)
        })
        .collect()
}

/// `∂_{e_m} D²u` in the eigenframe: `Σ_d Q_{dm} ∂_d D²u`.
fn directional(dt: &[SymMatrix], spec: &Spectrum, m: usize) -> SymMatrix {
    let n = spec.dim();
    let mut x = SymMatrix::zeros(n);
    for (d, t) in dt.iter().enumerate() {
        x = x.axpy(spec.eigenvectors.get(d, m), t);
    }
    x
}

/// Zeroes rows and columns below `cut`.
fn keep_above(x: &SymMatrix, cut: usize) -> SymMatrix {
    let mut y = x.clone();
    for i in 0..cut.min(x.dim()) {
        for j in 0..x.dim() {
            y.set(i, j, 0.0);
        }
    }
    y
}

#[derive(Clone, Debug)]
enum Site {
    Excluded,
    Checked(SiteEval),
}

#[derive(Clone, Debug)]
struct SiteEval {
    /// Multiplicity of the checked block.
    s: usize,
    /// `△_F` of the block sum, measured on the field.
    laplacian: f64,
    /// Drift terms with an index in the bottom `a + s` block.
    drift: f64,
    /// `b` with `drift ≈ b·Dλ` (simple blocks only) and `b·Dλ` measured.
    coefficient: Option<(f64, f64)>,
    lambda: f64,
    grad_norm: f64,
}

/// Evaluates the block of eigen-indices starting at `a` at site `k`.
fn evaluate_site(
    u: &GridField,
    cache: &Cache,
    form: &(dyn SpectralFunction + Send + Sync),
    k: usize,
    a: usize,
    route_tol: f64,
) -> Site {
    let (hm, spec) = spectrum(cache, k);
    let lam = &spec.eigenvalues;
    let n = lam.len();
    if !form.admissible(lam) {
        return Site::Excluded;
    }
    let route = route_tol * hm.frobenius_norm().max(1.0);
    let mut s = 1;
    while a + s < n && lam[a + s] - lam[a + s - 1] <= route {
        s += 1;
    }
    let block_sum = |j: usize| spectrum(cache, j).1.eigenvalues[a..a + s].iter().sum::<f64>();
    let fl = spectral_linearization(form, spec);
    let laplacian = fl.inner(&stencil_hessian(u, k, &block_sum));
    let dlam: Vec<f64> = stencil_gradient(u, k, &block_sum).iter().map(|g| g / s as f64).collect();

    let dt = frame_third_derivatives(u, cache, k);
    let g = form.gradient(lam);
    let hf = form.hessian(lam);
    let d2 = |y: &SymMatrix, z: &SymMatrix| frame_second_derivative(lam, &g, &hf, y, z);
    let cut = a + s;
    let mut drift = 0.0;
    let mut coefficient = None;
    for m in a..a + s {
        let x = directional(&dt, spec, m);
        let xp = keep_above(&x, cut);
        drift -= d2(&x, &x) - d2(&xp, &xp);
        if s == 1 {
            let sum = x.add(&xp);
            let b: Vec<f64> = (0..n)
                .map(|e| {
                    let mut se = SymMatrix::zeros(n);
                    se.set(m, e, 1.0);
                    se.set(e, m, 1.0);
                    -d2(&se, &sum)
                })
                .collect();
            let q = &spec.eigenvectors;
            let dlam_frame: Vec<f64> = (0..n).map(|e| (0..n).map(|d| q.get(d, e) * dlam[d]).sum()).collect();
            let bd: f64 = b.iter().zip(&dlam_frame).map(|(x, y)| x * y).sum();
            coefficient = Some((norm(&b), bd));
        }
    }
    Site::Checked(SiteEval {
        s,
        laplacian,
        drift,
        coefficient,
        lambda: lam[a],
        grad_norm: norm(&dlam),
    })
}

fn ensure_solution(u: &GridField, op: &OperatorModel, config: &ViscosityConfig) -> Result<()> {
    if u.n_dims() != op.n {
        return crate::error::arg(format!("field has {} axes but operator n = {}", u.n_dims(), op.n));
    }
    let r = residual_field(u, op)?;
    if let Some(k) = r.first_off_branch() {
        return Err(Error::Refused(format!(
            "field leaves the positive branch at {:?}; the inequalities are derived along solutions",
            u.coords(k)
        )));
    }
    let (mut worst, mut at) = (0.0, 0);
    for (k, v) in r.residual.values().iter().enumerate() {
        if v.abs() > worst {
            worst = v.abs();
            at = k;
        }
    }
    if !(worst <= config.residual_tol) {
        return Err(Error::Refused(format!(
            "residual {worst:e} at {:?} exceeds {:e}; the inequalities are derived along solutions",
            u.coords(at),
            config.residual_tol
        )));
    }
    Ok(())
}

fn empty_report(id: InequalityId, u: &GridField, config: &ViscosityConfig) -> ViscosityReport {
    ViscosityReport {
        inequality: id,
        sites_checked: 0,
        simple_sites: 0,
        partial_sum_sites: 0,
        excluded_sites: 0,
        worst_margin: 0.0,
        worst_violation: 0.0,
        worst_site: None,
        drift_bound: 0.0,
        growth_constant: None,
        spacing: u.spacing(),
        slack: config.slack_factor * u.spacing(),
        notes: Vec::new(),
    }
}

fn record(report: &mut ViscosityReport, u: &GridField, k: usize, margin: f64) {
    if report.worst_site.is_none() || margin > report.worst_margin {
        report.worst_margin = margin;
        report.worst_site = Some(u.coords(k));
    }
}

fn finish(report: &mut ViscosityReport) {
    report.worst_violation = report.worst_margin.max(0.0);
    if report.sites_checked == 0 {
        report.notes.push("no sites checked".into());
    }
}

fn sites(u: &GridField) -> Vec<usize> {
    u.interior_indices(2)
}

/// `|∂λ₁ − ∂u₁₁|` at sites with simple `λ₁`, with `u₁₁` the second
/// derivative along the site's fixed bottom eigenvector. A site is skipped
/// when its gap is within ten times the routing tolerance or within twice
/// the Hessian change across the stencil, since the central difference of
/// `λ₁` then may straddle an eigenvalue crossing. Sites two or more steps
/// from the boundary.
pub fn check_gradient_identity(u: &GridField) -> Result<ViscosityReport> {
    check_gradient_identity_with(u, &ViscosityConfig::default())
}

pub fn check_gradient_identity_with(u: &GridField, config: &ViscosityConfig) -> Result<ViscosityReport> {
    let cache = spectra(u)?;
    let idx = sites(u);
    let evals: Vec<Option<f64>> = idx
        .par_iter()
        .map(|&k| {
            let (hm, spec) = spectrum(&cache, k);
            let lam = &spec.eigenvalues;
            if lam.len() > 1 && lam[1] - lam[0] <= 10.0 * config.route_tol * hm.frobenius_norm().max(1.0) {
                return None;
            }
            // Weyl: a gap wider than twice the Hessian change across the
            // stencil keeps λ₁ on one branch at every stencil node
            let jump = u
                .strides()
                .iter()
                .flat_map(|&s| [k + s, k - s])
                .map(|j| spectrum(&cache, j).0.sub(hm).frobenius_norm())
                .fold(0.0, f64::max);
            if lam.len() > 1 && lam[1] - lam[0] <= 2.0 * jump {
                return None;
            }
            let lam1 = |j: usize| spectrum(&cache, j).1.eigenvalues[0];
            let dl = stencil_gradient(u, k, &lam1);
            let v = spec.vector(0);
            let h2 = 2.0 * u.spacing();
            let diff = u
                .strides()
                .iter()
                .zip(&dl)
                .map(|(&s, d)| {
                    let dh = spectrum(&cache, k + s).0.sub(&spectrum(&cache, k - s).0).scale(1.0 / h2);
                    (dh.quad_form(&v) - d).abs()
                })
                .fold(0.0, f64::max);
            Some(diff)
        })
        .collect();
    let mut report = empty_report(InequalityId::GradientIdentity, u, config);
    report.slack = config.slack_factor * u.spacing().powi(2);
    for (&k, e) in idx.iter().zip(&evals) {
        match e {
            Some(d) => {
                report.sites_checked += 1;
                report.simple_sites += 1;
                record(&mut report, u, k, *d);
            }
            None => report.excluded_sites += 1,
        }
    }
    if report.excluded_sites > 0 {
        report
            .notes
            .push(format!(
                "{} sites with repeated or unresolved lambda_1 excluded",
                report.excluded_sites
            ));
    }
    finish(&mut report);
    Ok(report)
}

/// `△_F λ₁ − B·Dλ₁` at interior sites of a solution, with `B` computed per
/// site from the drift terms. Sites where `λ₁` repeats with multiplicity
/// `s` are checked in the partial-sum form `△_F Σ_{m≤s} λ_m − drift`.
/// Positive margins are violations.
pub fn check_supersolution_lambda1(u: &GridField, op: &OperatorModel) -> Result<ViscosityReport> {
    check_supersolution_lambda1_with(u, op, &ViscosityConfig::default())
}

pub fn check_supersolution_lambda1_with(
    u: &GridField,
    op: &OperatorModel,
    config: &ViscosityConfig,
) -> Result<ViscosityReport> {
    bottom_block_check(u, op, config, InequalityId::Lambda1)
}

/// The partial-sum form alone: simple sites are excluded.
pub fn check_partial_sums_with(u: &GridField, op: &OperatorModel, config: &ViscosityConfig) -> Result<ViscosityReport> {
    bottom_block_check(u, op, config, InequalityId::PartialSum)
}

fn bottom_block_check(
    u: &GridField,
    op: &OperatorModel,
    config: &ViscosityConfig,
    id: InequalityId,
) -> Result<ViscosityReport> {
    ensure_solution(u, op, config)?;
    let form = inverse_convex_form(op)?;
    let cache = spectra(u)?;
    let idx = sites(u);
    let evals: Vec<Site> = idx
        .par_iter()
        .map(|&k| evaluate_site(u, &cache, form.as_ref(), k, 0, config.route_tol))
        .collect();
    let mut report = empty_report(id, u, config);
    let mut out_of_regime = 0;
    for (&k, site) in idx.iter().zip(&evals) {
        let Site::Checked(e) = site else {
            out_of_regime += 1;
            report.excluded_sites += 1;
            continue;
        };
        if e.s == 1 {
            if id == InequalityId::PartialSum {
                report.excluded_sites += 1;
                continue;
            }
            let (b, bd) = e.coefficient.expect("simple site carries its drift coefficient");
            report.simple_sites += 1;
            report.drift_bound = report.drift_bound.max(b);
            record(&mut report, u, k, e.laplacian - bd);
        } else {
            report.partial_sum_sites += 1;
            record(&mut report, u, k, e.laplacian - e.drift);
        }
        report.sites_checked += 1;
    }
    if out_of_regime > 0 {
        report
            .notes
            .push(format!("{out_of_regime} sites outside the inverse-convex regime skipped"));
    }
    if report.partial_sum_sites > 0 {
        report.notes.push(format!(
            "{} sites with repeated lambda_1 checked in partial-sum form",
            report.partial_sum_sites
        ));
    }
    if op.kind == OperatorKind::SlagPhase {
        let nonpositive = idx
            .iter()
            .filter(|&&k| spectrum(&cache, k).1.eigenvalues[0] <= 0.0)
            .count();
        if nonpositive > 0 {
            report.notes.push(format!(
                "{nonpositive} sites with lambda_1 <= 0: the phase operator is inverse-convex only on positive Hessians"
            ));
        }
    }
    finish(&mut report);
    Ok(report)
}

/// `△_F λ_{a+1} ≤ C λ_{a+1} + B|Dλ_{a+1}|` given `λ₁ = … = λ_a = 0` on the
/// field. The per-site drift plays the role of `B|Dλ_{a+1}|` (its sup
/// coefficient is reported as `B`); `C ≥ 0` is the least-squares slope of the
/// remainder against `λ_{a+1}`. `a = 0` is the λ₁ check.
pub fn check_higher_rank_inequality(u: &GridField, op: &OperatorModel, a: usize) -> Result<ViscosityReport> {
    check_higher_rank_inequality_with(u, op, a, &ViscosityConfig::default())
}

pub fn check_higher_rank_inequality_with(
    u: &GridField,
    op: &OperatorModel,
    a: usize,
    config: &ViscosityConfig,
) -> Result<ViscosityReport> {
    if a >= u.n_dims() {
        return crate::error::arg(format!("a = {a} must be below the dimension {}", u.n_dims()));
    }
    if a == 0 {
        let mut r = check_supersolution_lambda1_with(u, op, config)?;
        r.inequality = InequalityId::HigherRank;
        r.notes.push("a = 0: reduces to the lambda_1 check".into());
        return Ok(r);
    }
    ensure_solution(u, op, config)?;
    let form = inverse_convex_form(op)?;
    let cache = spectra(u)?;
    for m in 0..a {
        let worst = cache
            .iter()
            .flatten()
            .map(|(_, s)| s.eigenvalues[m].abs())
            .fold(0.0, f64::max);
        if worst > config.rank_tol {
            return Err(Error::Refused(format!(
                "lambda_{} reaches {worst:e} > {:e}; the check needs lambda_1 = ... = lambda_{a} = 0",
                m + 1,
                config.rank_tol
            )));
        }
    }
    let idx = sites(u);
    let evals: Vec<Site> = idx
        .par_iter()
        .map(|&k| evaluate_site(u, &cache, form.as_ref(), k, a, config.route_tol))
        .collect();
    let mut report = empty_report(InequalityId::HigherRank, u, config);
    let checked: Vec<(usize, &SiteEval)> = idx
        .iter()
        .zip(&evals)
        .filter_map(|(&k, s)| match s {
            Site::Checked(e) => Some((k, e)),
            Site::Excluded => None,
        })
        .collect();
    report.excluded_sites = idx.len() - checked.len();
    let (num, den) = checked.iter().fold((0.0, 0.0), |(n, d), (_, e)| {
        (n + (e.laplacian - e.drift) * e.lambda, d + e.lambda * e.lambda)
    });
    let c = if den > 0.0 { (num / den).max(0.0) } else { 0.0 };
    report.growth_constant = Some(c);
    let mut worst_gradient = 0.0f64;
    for (k, e) in checked {
        if e.s == 1 {
            report.simple_sites += 1;
            report.drift_bound = report.drift_bound.max(e.coefficient.map_or(0.0, |(b, _)| b));
        } else {
            report.partial_sum_sites += 1;
        }
        report.sites_checked += 1;
        worst_gradient = worst_gradient.max(e.grad_norm);
        record(&mut report, u, k, e.laplacian - e.drift - c * e.lambda);
    }
    report.notes.push(format!("max |D lambda_{}| = {worst_gradient:e}", a + 1));
    finish(&mut report);
    Ok(report)
}
