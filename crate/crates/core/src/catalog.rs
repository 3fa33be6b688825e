//! Closed-form solutions with exact jets, level-set samplers, and
//! degree-2 homogeneous extensions of sphere functions.

use std::f64::consts::{FRAC_PI_2, PI};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{arg, domain, Error, Result};
use crate::grid::GridField;
use crate::operators::PhaseSpec;
use crate::spectral::{dot, norm, solve_dense, SymMatrix};

/// Value, gradient and Hessian of a function at a point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Jet {
    pub value: f64,
    pub gradient: Vec<f64>,
    pub hessian: SymMatrix,
}

/// `W(x) = (x₁² + x₂² − 1)e^{x₃} + e^{−x₃}/4`, solving `σ₂(D²W) = 1`.
pub fn eval_warren(x: &[f64; 3]) -> Jet {
    let [x1, x2, x3] = *x;
    let e = x3.exp();
    let em = (-x3).exp() / 4.0;
    let r = x1 * x1 + x2 * x2 - 1.0;
    let value = r * e + em;
    let gradient = vec![2.0 * x1 * e, 2.0 * x2 * e, r * e - em];
    let mut h = SymMatrix::zeros(3);
    h.set(0, 0, 2.0 * e);
    h.set(1, 1, 2.0 * e);
    h.set(2, 2, r * e + em);
    h.set(0, 2, 2.0 * x1 * e);
    h.set(1, 2, 2.0 * x2 * e);
    Jet {
        value,
        gradient,
        hessian: h,
    }
}

/// `L(x) = x₁²x₂ − (2/3)x₂³ − x₂x₃`, solving `ΔL = det D²L`.
pub fn eval_li(x: &[f64; 3]) -> Jet {
    let [x1, x2, x3] = *x;
    let value = x1 * x1 * x2 - 2.0 / 3.0 * x2.powi(3) - x2 * x3;
    let gradient = vec![2.0 * x1 * x2, x1 * x1 - 2.0 * x2 * x2 - x3, -x2];
    let hessian = SymMatrix::from_rows(&[
        vec![2.0 * x2, 2.0 * x1, 0.0],
        vec![2.0 * x1, -4.0 * x2, -1.0],
        vec![0.0, -1.0, 0.0],
    ])
    .expect("finite entries");
    Jet {
        value,
        gradient,
        hessian,
    }
}

/// `u = ½⟨x, Qx⟩ + ⟨b, x⟩ + c`.
pub fn eval_quadratic(q: &SymMatrix, b: &[f64], c: f64, x: &[f64]) -> Jet {
    let qx = q.mul_vec(x);
    let value = 0.5 * dot(x, &qx) + dot(b, x) + c;
    let gradient = qx.iter().zip(b).map(|(a, b)| a + b).collect();
    Jet {
        value,
        gradient,
        hessian: q.clone(),
    }
}

/// Box of admissible angles for the free eigenvalues in level-set sampling.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AngleBox {
    pub lo: f64,
    pub hi: f64,
    /// Draws tried before giving up.
    pub budget: usize,
}

impl Default for AngleBox {
    fn default() -> Self {
        Self {
            lo: -FRAC_PI_2 + 1e-6,
            hi: FRAC_PI_2 - 1e-6,
            budget: 1_000_000,
        }
    }
}

/// Margin kept from `±π/2` for the solved residual angle.
const POLE_MARGIN: f64 = 1e-12;

/// Completes `draws = (λ₁, …, λ_{n−1})` to a point of `{Σ arctan λᵢ = Θ}`,
/// or `None` when the residual angle leaves `(−π/2, π/2)`.
pub fn level_set_point(theta: f64, draws: &[f64]) -> Option<Vec<f64>> {
    let used: f64 = draws.iter().map(|l| l.atan()).sum();
    let rest = theta - used;
    if rest.abs() >= FRAC_PI_2 - POLE_MARGIN {
        return None;
    }
    let mut out = draws.to_vec();
    out.push(rest.tan());
    Some(out)
}

/// Rejection sampler on the level set, drawing angles uniformly in `angles`.
pub fn sample_level_set_with<R: Rng + ?Sized>(
    spec: &PhaseSpec,
    angles: &AngleBox,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if !(angles.lo < angles.hi) || angles.lo < -FRAC_PI_2 || angles.hi > FRAC_PI_2 {
        return arg(format!("angle box [{}, {}] is not inside (-pi/2, pi/2)", angles.lo, angles.hi));
    }
    let mut draws = vec![0.0; spec.n - 1];
    for _ in 0..angles.budget {
        for d in draws.iter_mut() {
            *d = rng.gen_range(angles.lo..angles.hi).tan();
        }
        if let Some(p) = level_set_point(spec.theta, &draws) {
            return Ok(p);
        }
    }
    Err(Error::Domain(format!(
        "no admissible level-set point for theta = {} after {} draws",
        spec.theta, angles.budget
    )))
}

pub fn sample_level_set(spec: &PhaseSpec, rng_seed: u64) -> Result<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    sample_level_set_with(spec, &AngleBox::default(), &mut rng)
}

/// A function on the unit sphere with its tangential gradient and Riemannian
/// Hessian, both expressed as ambient vectors and matrices.
pub trait SphereFunction: Send + Sync {
    fn dim(&self) -> usize;
    /// `(g, ∇g, ∇²g)` at a unit vector `xi`.
    fn eval(&self, xi: &[f64]) -> (f64, Vec<f64>, SymMatrix);
}

fn tangent_projector(xi: &[f64]) -> SymMatrix {
    SymMatrix::identity(xi.len()).sub(&SymMatrix::outer(xi))
}

/// Restricts an ambient function `G` on `ℝⁿ` to the sphere.
pub struct AmbientRestriction<F> {
    n: usize,
    f: F,
}

impl<F: Fn(&[f64]) -> Jet + Send + Sync> AmbientRestriction<F> {
    pub fn new(n: usize, f: F) -> Self {
        Self { n, f }
    }
}

impl<F: Fn(&[f64]) -> Jet + Send + Sync> SphereFunction for AmbientRestriction<F> {
    fn dim(&self) -> usize {
        self.n
    }

    fn eval(&self, xi: &[f64]) -> (f64, Vec<f64>, SymMatrix) {
        let jet = (self.f)(xi);
        let p = tangent_projector(xi);
        let grad = p.mul_vec(&jet.gradient);
        let radial = dot(xi, &jet.gradient);
        let pm = p.to_matrix();
        let hp = jet.hessian.congruence(&pm);
        (jet.value, grad, hp.axpy(-radial, &p))
    }
}

/// `g(ξ) = ½⟨ξ, Aξ⟩` on the sphere.
pub fn quadratic_sphere_function(a: SymMatrix) -> impl SphereFunction {
    let n = a.dim();
    AmbientRestriction::new(n, move |x: &[f64]| eval_quadratic(&a, &vec![0.0; n], 0.0, x))
}

/// Geodesic grid on S² (subdivided icosahedron) holding samples of a sphere
/// function, evaluated by barycentric interpolation.
pub struct Icosphere {
    vertices: Vec<[f64; 3]>,
    faces: Vec<[usize; 3]>,
    values: Vec<f64>,
    gradients: Vec<Vec<f64>>,
    hessians: Vec<SymMatrix>,
}

impl Icosphere {
    /// Mesh with `20·4^subdivisions` faces; sample values all zero.
    pub fn new(subdivisions: usize) -> Self {
        let t = (1.0 + 5f64.sqrt()) / 2.0;
        let raw = [
            [-1.0, t, 0.0],
            [1.0, t, 0.0],
            [-1.0, -t, 0.0],
            [1.0, -t, 0.0],
            [0.0, -1.0, t],
            [0.0, 1.0, t],
            [0.0, -1.0, -t],
            [0.0, 1.0, -t],
            [t, 0.0, -1.0],
            [t, 0.0, 1.0],
            [-t, 0.0, -1.0],
            [-t, 0.0, 1.0],
        ];
        let mut vertices: Vec<[f64; 3]> = raw.iter().map(unit3).collect();
        let mut faces: Vec<[usize; 3]> = vec![
            [0, 11, 5],
            [0, 5, 1],
            [0, 1, 7],
            [0, 7, 10],
            [0, 10, 11],
            [1, 5, 9],
            [5, 11, 4],
            [11, 10, 2],
            [10, 7, 6],
            [7, 1, 8],
            [3, 9, 4],
            [3, 4, 2],
            [3, 2, 6],
            [3, 6, 8],
            [3, 8, 9],
            [4, 9, 5],
            [2, 4, 11],
            [6, 2, 10],
            [8, 6, 7],
            [9, 8, 1],
        ];
        for _ in 0..subdivisions {
            let mut cache = std::collections::HashMap::new();
            let mut mid = |a: usize, b: usize, verts: &mut Vec<[f64; 3]>| -> usize {
                let key = (a.min(b), a.max(b));
                *cache.entry(key).or_insert_with(|| {
                    let (p, q) = (verts[a], verts[b]);
                    verts.push(unit3(&[p[0] + q[0], p[1] + q[1], p[2] + q[2]]));
                    verts.len() - 1
                })
            };
            let mut next = Vec::with_capacity(faces.len() * 4);
            for f in &faces {
                let ab = mid(f[0], f[1], &mut vertices);
                let bc = mid(f[1], f[2], &mut vertices);
                let ca = mid(f[2], f[0], &mut vertices);
                next.push([f[0], ab, ca]);
                next.push([f[1], bc, ab]);
                next.push([f[2], ca, bc]);
                next.push([ab, bc, ca]);
            }
            faces = next;
        }
        let nv = vertices.len();
        Self {
            vertices,
            faces,
            values: vec![0.0; nv],
            gradients: vec![vec![0.0; 3]; nv],
            hessians: vec![SymMatrix::zeros(3); nv],
        }
    }

    /// Samples `g` at every vertex.
    pub fn sample(subdivisions: usize, g: &dyn SphereFunction) -> Result<Self> {
        if g.dim() != 3 {
            return arg("icosphere sampling needs a function on S^2");
        }
        let mut s = Self::new(subdivisions);
        for (i, v) in s.vertices.iter().enumerate() {
            let (val, grad, hess) = g.eval(v);
            s.values[i] = val;
            s.gradients[i] = grad;
            s.hessians[i] = hess;
        }
        Ok(s)
    }

    pub fn vertices(&self) -> &[[f64; 3]] {
        &self.vertices
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }

    /// Mean geodesic edge length, the interpolation scale.
    pub fn mean_edge(&self) -> f64 {
        let mut total = 0.0;
        for f in &self.faces {
            let (a, b) = (self.vertices[f[0]], self.vertices[f[1]]);
            total += dot(&a, &b).clamp(-1.0, 1.0).acos();
        }
        total / self.faces.len() as f64
    }

    fn locate(&self, xi: &[f64]) -> (usize, [f64; 3]) {
        let mut best = (0, [0.0; 3], f64::NEG_INFINITY);
        for (k, f) in self.faces.iter().enumerate() {
            let cols: Vec<f64> = (0..3)
                .flat_map(|r| (0..3).map(move |c| (r, c)))
                .map(|(r, c)| self.vertices[f[c]][r])
                .collect();
            let Ok(w) = solve_dense(3, &cols, xi) else {
                continue;
            };
            let min = w.iter().cloned().fold(f64::INFINITY, f64::min);
            if min > best.2 {
                let s: f64 = w.iter().sum();
                best = (k, [w[0] / s, w[1] / s, w[2] / s], min);
                if min >= 0.0 {
                    break;
                }
            }
        }
        (best.0, best.1)
    }
}

fn unit3(v: &[f64; 3]) -> [f64; 3] {
    let r = norm(v);
    [v[0] / r, v[1] / r, v[2] / r]
}

impl SphereFunction for Icosphere {
    fn dim(&self) -> usize {
        3
    }

    fn eval(&self, xi: &[f64]) -> (f64, Vec<f64>, SymMatrix) {
        let (k, w) = self.locate(xi);
        let f = self.faces[k];
        let mut value = 0.0;
        let mut grad = vec![0.0; 3];
        let mut hess = SymMatrix::zeros(3);
        for c in 0..3 {
            value += w[c] * self.values[f[c]];
            for (g, v) in grad.iter_mut().zip(&self.gradients[f[c]]) {
                *g += w[c] * v;
            }
            hess = hess.axpy(w[c], &self.hessians[f[c]]);
        }
        let p = tangent_projector(xi);
        let grad = p.mul_vec(&grad);
        let hess = hess.congruence(&p.to_matrix());
        (value, grad, hess)
    }
}

/// `u(x) = |x|² g(x/|x|)` with its jet.
///
/// `Du = r(2gξ + ∇g)` and `D²u = 2gI + ξ∇gᵀ + ∇gξᵀ + ∇²g`, which is
/// 0-homogeneous.
pub fn homogeneous2_extension(g: &dyn SphereFunction, x: &[f64]) -> Result<Jet> {
    if x.len() != g.dim() {
        return arg(format!("point has dimension {}, sphere function {}", x.len(), g.dim()));
    }
    let r = norm(x);
    if r == 0.0 {
        return domain("degree-2 homogeneous extension is not differentiable twice at the origin");
    }
    let xi: Vec<f64> = x.iter().map(|v| v / r).collect();
    let (gv, grad, hess) = g.eval(&xi);
    let gradient = xi.iter().zip(&grad).map(|(a, b)| r * (2.0 * gv * a + b)).collect();
    let hessian = hess
        .add(&SymMatrix::sym_outer(&xi, &grad))
        .shift(2.0 * gv);
    Ok(Jet {
        value: r * r * gv,
        gradient,
        hessian,
    })
}

/// `tan(π/5)`: a nontrivial 2-homogeneous Θ = 0 solution in five dimensions
/// would need `λ_min ≤ −tan(π/5)` somewhere.
pub fn hom2_lower_bound_constant() -> f64 {
    (PI / 5.0).tan()
}

/// Equation level carried by a catalog entry.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Level {
    Phase(f64),
    Sigma2PositiveBranch,
    /// No equation asserted.
    Free,
}

#[derive(Clone)]
enum Evaluator {
    Warren,
    Li,
    Quadratic { q: SymMatrix, b: Vec<f64>, c: f64 },
    Hom2(Arc<dyn SphereFunction>),
}

/// A named closed-form function with its default evaluation box.
#[derive(Clone)]
pub struct CatalogEntry {
    pub name: String,
    pub n: usize,
    pub level: Level,
    /// Half-width of the default cube `[−a, a]ⁿ`.
    pub admissible_box: f64,
    evaluator: Evaluator,
}

impl std::fmt::Debug for CatalogEntry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CatalogEntry")
            .field("name", &self.name)
            .field("n", &self.n)
            .field("level", &self.level)
            .field("admissible_box", &self.admissible_box)
            .finish()
    }
}

impl CatalogEntry {
    pub fn warren() -> Self {
        Self {
            name: "warren".into(),
            n: 3,
            level: Level::Sigma2PositiveBranch,
            admissible_box: 1.5,
            evaluator: Evaluator::Warren,
        }
    }

    pub fn li() -> Self {
        Self {
            name: "li".into(),
            n: 3,
            level: Level::Phase(0.0),
            admissible_box: 1.5,
            evaluator: Evaluator::Li,
        }
    }

    pub fn quadratic(q: SymMatrix, b: Vec<f64>, c: f64) -> Result<Self> {
        if b.len() != q.dim() {
            return arg("linear term length does not match the matrix");
        }
        let lam = crate::spectral::eigenvalues(&q)?;
        let level = Level::Phase(lam.iter().map(|l| l.atan()).sum());
        Ok(Self {
            name: "quadratic".into(),
            n: q.dim(),
            level,
            admissible_box: 1.0,
            evaluator: Evaluator::Quadratic { q, b, c },
        })
    }

    pub fn hom2(g: Arc<dyn SphereFunction>, level: Level) -> Self {
        Self {
            name: "hom2".into(),
            n: g.dim(),
            level,
            admissible_box: 1.0,
            evaluator: Evaluator::Hom2(g),
        }
    }

    /// Entry by name with default parameters: `quadratic` is `diag(1, 1, 0)`
    /// and `hom2` extends `½⟨ξ, diag(1, 1, 0)ξ⟩`.
    pub fn by_name(name: &str) -> Result<Self> {
        let q = SymMatrix::diag(&[1.0, 1.0, 0.0]);
        match name {
            "warren" => Ok(Self::warren()),
            "li" => Ok(Self::li()),
            "quadratic" => Self::quadratic(q, vec![0.0; 3], 0.0),
            "hom2" => Ok(Self::hom2(
                Arc::new(quadratic_sphere_function(q)),
                Level::Sigma2PositiveBranch,
            )),
            other => arg(format!("unknown catalog entry '{other}' (expected warren, li, quadratic, hom2)")),
        }
    }

    pub fn jet(&self, x: &[f64]) -> Result<Jet> {
        if x.len() != self.n {
            return arg(format!("{} takes {} coordinates, got {}", self.name, self.n, x.len()));
        }
        match &self.evaluator {
            Evaluator::Warren => Ok(eval_warren(&[x[0], x[1], x[2]])),
            Evaluator::Li => Ok(eval_li(&[x[0], x[1], x[2]])),
            Evaluator::Quadratic { q, b, c } => Ok(eval_quadratic(q, b, *c, x)),
            Evaluator::Hom2(g) => homogeneous2_extension(g.as_ref(), x),
        }
    }

    /// Function value; unlike [`CatalogEntry::jet`] this is defined at the
    /// origin for `hom2`.
    pub fn value(&self, x: &[f64]) -> Result<f64> {
        if let Evaluator::Hom2(_) = self.evaluator {
            if x.len() == self.n && norm(x) == 0.0 {
                return Ok(0.0);
            }
        }
        self.jet(x).map(|j| j.value)
    }

    /// Values on a cube `[−half_width, half_width]ⁿ` with `nodes` per axis.
    pub fn sample_field(&self, nodes: usize, half_width: f64) -> Result<GridField> {
        let shape = vec![nodes; self.n];
        let spacing = 2.0 * half_width / (nodes as f64 - 1.0);
        let origin = vec![-half_width; self.n];
        let mut err = None;
        let field = GridField::from_fn(shape, origin, spacing, |x| match self.value(x) {
            Ok(v) => v,
            Err(e) => {
                err.get_or_insert(e);
                0.0
            }
        })?;
        match err {
            Some(e) => Err(e),
            None => Ok(field),
        }
    }
}
