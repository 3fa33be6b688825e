//! Dense symmetric linear algebra for small matrices (n ≤ ~10).
//!
//! Everything here works on Hessian-sized matrices: a cyclic Jacobi
//! eigensolver with deterministic sweep order, elementary symmetric
//! polynomials, and one-sided directional derivatives of eigenvalues at
//! matrices with repeated eigenvalues.
//!
//! Indices are 0-based throughout: eigenvalue `i` is the `(i+1)`-th smallest.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{arg, domain, Error, Result};

/// Maximum number of cyclic Jacobi sweeps.
pub const MAX_SWEEPS: usize = 30;
/// Relative off-diagonal Frobenius norm at which Jacobi stops.
pub const CONVERGENCE_RATIO: f64 = 1e-13;
/// Default relative tolerance for grouping repeated eigenvalues.
pub const DEFAULT_GROUP_TOL: f64 = 1e-9;

/// A real symmetric `dim × dim` matrix stored row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SymMatrix {
    dim: usize,
    entries: Vec<f64>,
}

/// A dense real matrix, row-major. Used for eigenvector bases.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_columns(columns: &[Vec<f64>]) -> Self {
        let cols = columns.len();
        let rows = columns.first().map_or(0, Vec::len);
        let mut m = Self::zeros(rows, cols);
        for (j, c) in columns.iter().enumerate() {
            assert_eq!(c.len(), rows, "ragged columns");
            for (i, &v) in c.iter().enumerate() {
                m.data[i * cols + j] = v;
            }
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.set(j, i, self.get(i, j));
            }
        }
        t
    }

    pub fn mul(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.cols, other.rows);
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                if a == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    out.data[i * other.cols + j] += a * other.get(k, j);
                }
            }
        }
        out
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(self.cols, v.len());
        (0..self.rows)
            .map(|i| (0..self.cols).map(|j| self.get(i, j) * v[j]).sum())
            .collect()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    /// ‖QᵀQ − I‖_F.
    pub fn orthonormality_defect(&self) -> f64 {
        let g = self.transpose().mul(self);
        let mut s = 0.0;
        for i in 0..g.rows {
            for j in 0..g.cols {
                let d = g.get(i, j) - if i == j { 1.0 } else { 0.0 };
                s += d * d;
            }
        }
        s.sqrt()
    }
}

impl SymMatrix {
    /// Builds a symmetric matrix from row-major entries. The input is
    /// symmetrized as `(A + Aᵀ)/2`; non-finite entries are rejected.
    pub fn new(dim: usize, entries: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return arg("matrix dimension must be at least 1");
        }
        if entries.len() != dim * dim {
            return arg(format!(
                "expected {} entries for a {dim}x{dim} matrix, got {}",
                dim * dim,
                entries.len()
            ));
        }
        if let Some(pos) = entries.iter().position(|x| !x.is_finite()) {
            return domain(format!("non-finite matrix entry at position {pos}"));
        }
        let mut m = Self { dim, entries };
        for i in 0..dim {
            for j in (i + 1)..dim {
                let avg = 0.5 * (m.entries[i * dim + j] + m.entries[j * dim + i]);
                m.entries[i * dim + j] = avg;
                m.entries[j * dim + i] = avg;
            }
        }
        Ok(m)
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.len();
        if rows.iter().any(|r| r.len() != dim) {
            return arg("matrix rows must form a square array");
        }
        Self::new(dim, rows.concat())
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            entries: vec![0.0; dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self::scalar(dim, 1.0)
    }

    pub fn scalar(dim: usize, a: f64) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m.entries[i * dim + i] = a;
        }
        m
    }

    pub fn diag(values: &[f64]) -> Self {
        let dim = values.len();
        let mut m = Self::zeros(dim);
        for (i, &v) in values.iter().enumerate() {
            m.entries[i * dim + i] = v;
        }
        m
    }

    /// `u vᵀ + v uᵀ`.
    pub fn sym_outer(u: &[f64], v: &[f64]) -> Self {
        let dim = u.len();
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            for j in 0..dim {
                m.entries[i * dim + j] = u[i] * v[j] + v[i] * u[j];
            }
        }
        m
    }

    pub fn outer(u: &[f64]) -> Self {
        let dim = u.len();
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            for j in 0..dim {
                m.entries[i * dim + j] = u[i] * u[j];
            }
        }
        m
    }

    /// `Q diag(values) Qᵀ` for `Q` with orthonormal columns.
    pub fn from_spectrum(values: &[f64], vectors: &Matrix) -> Self {
        let n = vectors.rows();
        let mut m = Self::zeros(n);
        for i in 0..n {
            for j in i..n {
                let s: f64 = values
                    .iter()
                    .enumerate()
                    .map(|(k, &l)| l * vectors.get(i, k) * vectors.get(j, k))
                    .sum();
                m.entries[i * n + j] = s;
                m.entries[j * n + i] = s;
            }
        }
        m
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.dim + j]
    }

    /// Sets both `(i, j)` and `(j, i)`.
    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.entries[i * self.dim + j] = v;
        self.entries[j * self.dim + i] = v;
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn to_matrix(&self) -> Matrix {
        Matrix {
            rows: self.dim,
            cols: self.dim,
            data: self.entries.clone(),
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.entries.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|i| self.get(i, i)).sum()
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.dim).map(|i| self.get(i, i)).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.entries.iter().all(|x| x.is_finite())
    }

    pub fn add(&self, other: &SymMatrix) -> SymMatrix {
        self.zip(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &SymMatrix) -> SymMatrix {
        self.zip(other, |a, b| a - b)
    }

    pub fn scale(&self, s: f64) -> SymMatrix {
        SymMatrix {
            dim: self.dim,
            entries: self.entries.iter().map(|x| x * s).collect(),
        }
    }

    /// `self + t·other`.
    pub fn axpy(&self, t: f64, other: &SymMatrix) -> SymMatrix {
        self.zip(other, |a, b| a + t * b)
    }

    pub fn shift(&self, a: f64) -> SymMatrix {
        let mut m = self.clone();
        for i in 0..self.dim {
            m.entries[i * self.dim + i] += a;
        }
        m
    }

    fn zip(&self, other: &SymMatrix, f: impl Fn(f64, f64) -> f64) -> SymMatrix {
        assert_eq!(self.dim, other.dim, "dimension mismatch");
        SymMatrix {
            dim: self.dim,
            entries: self
                .entries
                .iter()
                .zip(&other.entries)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    /// Frobenius inner product ⟨A, B⟩ = tr(AB).
    pub fn inner(&self, other: &SymMatrix) -> f64 {
        self.entries.iter().zip(&other.entries).map(|(a, b)| a * b).sum()
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        (0..self.dim)
            .map(|i| (0..self.dim).map(|j| self.get(i, j) * v[j]).sum())
            .collect()
    }

    pub fn quad_form(&self, v: &[f64]) -> f64 {
        dot(v, &self.mul_vec(v))
    }

    /// Plain matrix product `A·B` (not symmetric in general).
    pub fn matmul(&self, other: &SymMatrix) -> Matrix {
        self.to_matrix().mul(&other.to_matrix())
    }

    /// `Bᵀ A B` for a basis `B` with `dim` rows.
    pub fn congruence(&self, basis: &Matrix) -> SymMatrix {
        assert_eq!(basis.rows(), self.dim);
        let ab = self.to_matrix().mul(basis);
        let k = basis.cols();
        let mut out = SymMatrix::zeros(k);
        for r in 0..k {
            for s in r..k {
                let v: f64 = (0..self.dim).map(|i| basis.get(i, r) * ab.get(i, s)).sum();
                out.set(r, s, v);
            }
        }
        out
    }

    /// Inverse by Gauss–Jordan elimination with partial pivoting.
    pub fn inverse(&self) -> Result<SymMatrix> {
        let n = self.dim;
        let mut a = self.entries.clone();
        let mut inv = Matrix::identity(n).data;
        let scale = self.frobenius_norm().max(f64::MIN_POSITIVE);
        for col in 0..n {
            let (piv, pval) = (col..n)
                .map(|r| (r, a[r * n + col].abs()))
                .fold((col, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
            if pval <= 1e-14 * scale {
                return domain(format!("matrix is singular (pivot {pval:e} in column {col})"));
            }
            if piv != col {
                for j in 0..n {
                    a.swap(piv * n + j, col * n + j);
                    inv.swap(piv * n + j, col * n + j);
                }
            }
            let d = a[col * n + col];
            for j in 0..n {
                a[col * n + j] /= d;
                inv[col * n + j] /= d;
            }
            for r in 0..n {
                if r == col {
                    continue;
                }
                let f = a[r * n + col];
                if f == 0.0 {
                    continue;
                }
                for j in 0..n {
                    a[r * n + j] -= f * a[col * n + j];
                    inv[r * n + j] -= f * inv[col * n + j];
                }
            }
        }
        SymMatrix::new(n, inv)
    }

    pub fn determinant(&self) -> f64 {
        let n = self.dim;
        let mut a = self.entries.clone();
        let mut det = 1.0;
        for col in 0..n {
            let piv = (col..n)
                .max_by(|&x, &y| a[x * n + col].abs().total_cmp(&a[y * n + col].abs()))
                .unwrap_or(col);
            if a[piv * n + col] == 0.0 {
                return 0.0;
            }
            if piv != col {
                for j in 0..n {
                    a.swap(piv * n + j, col * n + j);
                }
                det = -det;
            }
            let d = a[col * n + col];
            det *= d;
            for r in (col + 1)..n {
                let f = a[r * n + col] / d;
                for j in col..n {
                    a[r * n + j] -= f * a[col * n + j];
                }
            }
        }
        det
    }

    /// Largest absolute eigenvalue bound used for relative tolerances.
    pub fn scale_for_tol(&self) -> f64 {
        self.frobenius_norm().max(1.0)
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Sorted eigen-decomposition of a symmetric matrix.
#[derive(Clone, Debug)]
pub struct Spectrum {
    /// Nondecreasing eigenvalues.
    pub eigenvalues: Vec<f64>,
    /// Orthonormal eigenvectors as columns, matching `eigenvalues`.
    pub eigenvectors: Matrix,
    /// Inclusive index ranges `(j, k)` of eigenvalues equal within tolerance.
    /// Every index belongs to exactly one block.
    pub multiplicity_blocks: Vec<(usize, usize)>,
}

/// Orthonormal basis of one eigenspace.
#[derive(Clone, Debug)]
pub struct EigenBlock {
    pub range: (usize, usize),
    pub basis: Matrix,
}

impl Spectrum {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn min(&self) -> f64 {
        self.eigenvalues[0]
    }

    pub fn max(&self) -> f64 {
        *self.eigenvalues.last().expect("nonempty spectrum")
    }

    pub fn vector(&self, i: usize) -> Vec<f64> {
        self.eigenvectors.column(i)
    }

    /// The block containing eigenvalue index `i`.
    pub fn block_of(&self, i: usize) -> (usize, usize) {
        *self
            .multiplicity_blocks
            .iter()
            .find(|(j, k)| *j <= i && i <= *k)
            .expect("blocks cover all indices")
    }

    pub fn eigen_block(&self, i: usize) -> EigenBlock {
        let (j, k) = self.block_of(i);
        let cols: Vec<Vec<f64>> = (j..=k).map(|c| self.vector(c)).collect();
        EigenBlock {
            range: (j, k),
            basis: Matrix::from_columns(&cols),
        }
    }

    pub fn reconstruct(&self) -> SymMatrix {
        SymMatrix::from_spectrum(&self.eigenvalues, &self.eigenvectors)
    }

    /// Multiplicity of eigenvalue `i` (size of its block).
    pub fn multiplicity(&self, i: usize) -> usize {
        let (j, k) = self.block_of(i);
        k - j + 1
    }
}

/// Eigen-decomposition by cyclic Jacobi rotations.
///
/// `tol` groups eigenvalues into multiplicity blocks: neighbours with
/// `|λᵢ − λᵢ₊₁| ≤ tol · max(1, ‖M‖_F)` share a block.
pub fn eig_sym(m: &SymMatrix, tol: f64) -> Result<Spectrum> {
    if !(tol > 0.0) {
        return arg("grouping tolerance must be positive");
    }
    if !m.is_finite() {
        return domain("matrix has non-finite entries");
    }
    let n = m.dim();
    let mut a = m.entries.clone();
    let mut v = Matrix::identity(n).data;
    let norm_f = m.frobenius_norm();

    let off_norm = |a: &[f64]| -> f64 {
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    s += a[i * n + j] * a[i * n + j];
                }
            }
        }
        s.sqrt()
    };

    let mut sweeps = 0;
    loop {
        let off = off_norm(&a);
        if off <= CONVERGENCE_RATIO * norm_f || off == 0.0 {
            break;
        }
        if sweeps == MAX_SWEEPS {
            return Err(Error::NoConvergence {
                sweeps,
                off_norm: off,
            });
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
                let t = if theta.abs() > 1e150 {
                    0.5 / theta
                } else {
                    theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
                };
                // signum(0) == 1 for f64, so theta == 0 gives t == 1
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                a[p * n + p] -= t * apq;
                a[q * n + q] += t * apq;
                a[p * n + q] = 0.0;
                a[q * n + p] = 0.0;
                for r in 0..n {
                    if r == p || r == q {
                        continue;
                    }
                    let arp = a[r * n + p];
                    let arq = a[r * n + q];
                    let np = c * arp - s * arq;
                    let nq = s * arp + c * arq;
                    a[r * n + p] = np;
                    a[p * n + r] = np;
                    a[r * n + q] = nq;
                    a[q * n + r] = nq;
                }
                for r in 0..n {
                    let vrp = v[r * n + p];
                    let vrq = v[r * n + q];
                    v[r * n + p] = c * vrp - s * vrq;
                    v[r * n + q] = s * vrp + c * vrq;
                }
            }
        }
        sweeps += 1;
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[i * n + i].total_cmp(&a[j * n + j]).then(i.cmp(&j)));
    let eigenvalues: Vec<f64> = order.iter().map(|&i| a[i * n + i]).collect();
    let mut vectors = Matrix::zeros(n, n);
    for (newc, &oldc) in order.iter().enumerate() {
        let mut col: Vec<f64> = (0..n).map(|r| v[r * n + oldc]).collect();
        normalize_sign(&mut col);
        for (r, x) in col.into_iter().enumerate() {
            vectors.set(r, newc, x);
        }
    }
    let multiplicity_blocks = group_blocks(&eigenvalues, tol * m.scale_for_tol());
    Ok(Spectrum {
        eigenvalues,
        eigenvectors: vectors,
        multiplicity_blocks,
    })
}

/// Eigenvalues only, with the default grouping tolerance.
pub fn eigenvalues(m: &SymMatrix) -> Result<Vec<f64>> {
    Ok(eig_sym(m, DEFAULT_GROUP_TOL)?.eigenvalues)
}

/// Largest-magnitude component made positive (first one on ties).
pub fn normalize_sign(v: &mut [f64]) {
    let mut best = 0;
    for i in 1..v.len() {
        if v[i].abs() > v[best].abs() {
            best = i;
        }
    }
    if v.get(best).is_some_and(|&x| x < 0.0) {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

fn group_blocks(sorted: &[f64], threshold: f64) -> Vec<(usize, usize)> {
    let mut blocks = Vec::new();
    let mut start = 0;
    for i in 1..=sorted.len() {
        if i == sorted.len() || sorted[i] - sorted[i - 1] > threshold {
            blocks.push((start, i - 1));
            start = i;
        }
    }
    blocks
}

/// k-th elementary symmetric polynomial; `σ₀ = 1`.
pub fn sigma_k(lambda: &[f64], k: usize) -> Result<f64> {
    if k > lambda.len() {
        return arg(format!("sigma_{k} undefined for {} variables", lambda.len()));
    }
    Ok(elementary_symmetric(lambda)[k])
}

/// All of `σ₀ … σₙ` at once.
pub fn elementary_symmetric(lambda: &[f64]) -> Vec<f64> {
    let n = lambda.len();
    let mut e = vec![0.0; n + 1];
    e[0] = 1.0;
    for (count, &x) in lambda.iter().enumerate() {
        for k in (1..=count + 1).rev() {
            e[k] += x * e[k - 1];
        }
    }
    e
}

/// Right derivative `d⁺/dt λᵢ(M + tA)` at `t = 0`.
///
/// If `λᵢ` sits in the multiplicity block `[j, k]` with eigenspace `E`, the
/// derivative is the `(i − j)`-th smallest eigenvalue of `A|_E`. For a simple
/// eigenvalue this is the classical `qᵢᵀ A qᵢ`.
pub fn one_sided_eig_derivative(m: &SymMatrix, a: &SymMatrix, i: usize, tol: f64) -> Result<f64> {
    let (restricted, offset) = restricted_block(m, a, i, tol)?;
    Ok(restricted[offset])
}

/// Whether `λᵢ(M + tA)` is differentiable at `t = 0`, i.e. whether the
/// right derivative equals the left one: `λ_{i−j}(A|_E) = λ_{k−i}(A|_E)`.
pub fn is_direction_differentiable(m: &SymMatrix, a: &SymMatrix, i: usize, tol: f64) -> Result<bool> {
    let (restricted, offset) = restricted_block(m, a, i, tol)?;
    let mirror = restricted.len() - 1 - offset;
    let diff = (restricted[offset] - restricted[mirror]).abs();
    Ok(diff <= tol * a.scale_for_tol())
}

fn restricted_block(m: &SymMatrix, a: &SymMatrix, i: usize, tol: f64) -> Result<(Vec<f64>, usize)> {
    if m.dim() != a.dim() {
        return arg("M and A must have the same dimension");
    }
    if i >= m.dim() {
        return arg(format!("eigenvalue index {i} out of range for dimension {}", m.dim()));
    }
    let spec = eig_sym(m, tol)?;
    let block = spec.eigen_block(i);
    let restricted = a.congruence(&block.basis);
    let vals = eig_sym(&restricted, tol)?.eigenvalues;
    Ok((vals, i - block.range.0))
}

/// Solves `A x = b` for a general dense row-major `A` (partial pivoting).
pub fn solve_dense(n: usize, a: &[f64], b: &[f64]) -> Result<Vec<f64>> {
    if a.len() != n * n || b.len() != n {
        return arg("solve_dense: dimension mismatch");
    }
    let mut m = a.to_vec();
    let mut x = b.to_vec();
    let scale = m.iter().fold(0.0f64, |s, v| s.max(v.abs())).max(f64::MIN_POSITIVE);
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&p, &q| m[p * n + col].abs().total_cmp(&m[q * n + col].abs()))
            .unwrap_or(col);
        if m[piv * n + col].abs() <= 1e-14 * scale {
            return domain("singular linear system");
        }
        if piv != col {
            for j in 0..n {
                m.swap(piv * n + j, col * n + j);
            }
            x.swap(piv, col);
        }
        for r in (col + 1)..n {
            let f = m[r * n + col] / m[col * n + col];
            if f == 0.0 {
                continue;
            }
            for j in col..n {
                m[r * n + j] -= f * m[col * n + j];
            }
            x[r] -= f * x[col];
        }
    }
    for col in (0..n).rev() {
        let s: f64 = ((col + 1)..n).map(|j| m[col * n + j] * x[j]).sum();
        x[col] = (x[col] - s) / m[col * n + col];
    }
    Ok(x)
}

/// Haar-ish random orthogonal matrix from Gram–Schmidt on Gaussian columns.
pub fn random_orthogonal<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Matrix {
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(n);
    while cols.len() < n {
        let mut v: Vec<f64> = (0..n).map(|_| gaussian(rng)).collect();
        for c in &cols {
            let p = dot(&v, c);
            v.iter_mut().zip(c).for_each(|(x, y)| *x -= p * y);
        }
        let nv = norm(&v);
        if nv > 1e-8 {
            v.iter_mut().for_each(|x| *x /= nv);
            cols.push(v);
        }
    }
    Matrix::from_columns(&cols)
}

/// Random symmetric matrix with prescribed eigenvalues.
pub fn random_with_spectrum<R: Rng + ?Sized>(values: &[f64], rng: &mut R) -> SymMatrix {
    let q = random_orthogonal(values.len(), rng);
    SymMatrix::from_spectrum(values, &q)
}

/// Random symmetric matrix with independent entries in `[-scale, scale]`.
pub fn random_symmetric<R: Rng + ?Sized>(n: usize, scale: f64, rng: &mut R) -> SymMatrix {
    let mut m = SymMatrix::zeros(n);
    for i in 0..n {
        for j in i..n {
            m.set(i, j, rng.gen_range(-scale..=scale));
        }
    }
    m
}

/// Standard normal draw (Box–Muller).
pub fn gaussian<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn approx(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn diagonal_input_is_exact_with_repeated_block() {
        let m = SymMatrix::diag(&[2.0, 2.0, -0.75]);
        let s = eig_sym(&m, DEFAULT_GROUP_TOL).unwrap();
        assert_eq!(s.eigenvalues, vec![-0.75, 2.0, 2.0]);
        assert_eq!(s.multiplicity_blocks, vec![(0, 0), (1, 2)]);
    }

    #[test]
    fn identity_is_one_block() {
        let s = eig_sym(&SymMatrix::identity(3), DEFAULT_GROUP_TOL).unwrap();
        assert_eq!(s.eigenvalues, vec![1.0; 3]);
        assert_eq!(s.multiplicity_blocks, vec![(0, 2)]);
        assert!(s.eigenvectors.orthonormality_defect() < 1e-12);
    }

    #[test]
    fn two_by_two_swap() {
        let m = SymMatrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        let s = eig_sym(&m, DEFAULT_GROUP_TOL).unwrap();
        assert!(approx(s.eigenvalues[0], -1.0, 1e-15));
        assert!(approx(s.eigenvalues[1], 1.0, 1e-15));
    }

    #[test]
    fn sign_convention_largest_component_positive() {
        let m = SymMatrix::from_rows(&[vec![2.0, -1.0], vec![-1.0, 2.0]]).unwrap();
        let s = eig_sym(&m, DEFAULT_GROUP_TOL).unwrap();
        for c in 0..2 {
            let v = s.vector(c);
            let big = v.iter().cloned().fold(0.0f64, |a, x| if x.abs() > a.abs() { x } else { a });
            assert!(big > 0.0);
        }
    }

    #[test]
    fn zero_matrix() {
        let s = eig_sym(&SymMatrix::zeros(4), DEFAULT_GROUP_TOL).unwrap();
        assert_eq!(s.eigenvalues, vec![0.0; 4]);
    }

    #[test]
    fn constructor_rejects_nan_and_symmetrizes() {
        assert!(SymMatrix::new(2, vec![1.0, f64::NAN, 0.0, 1.0]).is_err());
        assert!(SymMatrix::new(2, vec![1.0, 2.0]).is_err());
        let m = SymMatrix::new(2, vec![1.0, 2.0, 4.0, 1.0]).unwrap();
        assert_eq!(m.get(0, 1), 3.0);
        assert_eq!(m.get(1, 0), 3.0);
    }

    #[test]
    fn sigma_k_examples() {
        assert_eq!(sigma_k(&[1.0, 1.0, 0.0], 2).unwrap(), 1.0);
        assert!(approx(sigma_k(&[2.0, 2.0, -0.75], 2).unwrap(), 1.0, 1e-15));
        assert_eq!(sigma_k(&[1.0, 2.0, 3.0], 3).unwrap(), 6.0);
        assert_eq!(sigma_k(&[1.0, 2.0, 3.0], 0).unwrap(), 1.0);
        assert!(sigma_k(&[1.0, 2.0], 3).is_err());
    }

    #[test]
    fn one_sided_derivative_repeated_block() {
        let m = SymMatrix::diag(&[0.0, 0.0, 1.0]);
        let a = SymMatrix::from_rows(&[
            vec![0.0, 1.0, 0.0],
            vec![1.0, 0.0, 0.0],
            vec![0.0, 0.0, 0.0],
        ])
        .unwrap();
        let d0 = one_sided_eig_derivative(&m, &a, 0, DEFAULT_GROUP_TOL).unwrap();
        let d1 = one_sided_eig_derivative(&m, &a, 1, DEFAULT_GROUP_TOL).unwrap();
        assert!(approx(d0, -1.0, 1e-14));
        assert!(approx(d1, 1.0, 1e-14));

        // finite-difference oracle at t = 1e-6
        let t = 1e-6;
        let lam = eigenvalues(&m.axpy(t, &a)).unwrap();
        assert!(approx(lam[0] / t, d0, 1e-5));
        assert!(approx(lam[1] / t, d1, 1e-5));

        assert!(!is_direction_differentiable(&m, &a, 0, DEFAULT_GROUP_TOL).unwrap());
        assert!(is_direction_differentiable(&m, &SymMatrix::identity(3), 0, DEFAULT_GROUP_TOL).unwrap());
    }

    #[test]
    fn one_sided_derivative_simple_eigenvalue() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let m = SymMatrix::diag(&[1.0, 2.0, 3.0]);
        let a = random_symmetric(3, 1.0, &mut rng);
        let d = one_sided_eig_derivative(&m, &a, 1, DEFAULT_GROUP_TOL).unwrap();
        assert!(approx(d, a.get(1, 1), 1e-14));
        assert!(is_direction_differentiable(&m, &a, 0, DEFAULT_GROUP_TOL).unwrap());
        assert!(one_sided_eig_derivative(&m, &a, 3, DEFAULT_GROUP_TOL).is_err());
    }

    #[test]
    fn inverse_and_determinant() {
        let m = SymMatrix::from_rows(&[vec![4.0, 1.0], vec![1.0, 3.0]]).unwrap();
        let inv = m.inverse().unwrap();
        let prod = m.matmul(&inv);
        assert!(prod.orthonormality_defect() < 1e-14 || (prod.get(0, 0) - 1.0).abs() < 1e-14);
        assert!(approx(m.determinant(), 11.0, 1e-13));
        assert!(SymMatrix::diag(&[1.0, 0.0]).inverse().is_err());
    }

    #[test]
    fn solve_dense_small() {
        let x = solve_dense(2, &[2.0, 1.0, 1.0, 3.0], &[3.0, 5.0]).unwrap();
        assert!(approx(x[0], 0.8, 1e-14) && approx(x[1], 1.4, 1e-14));
    }
}
