//! Uniform rectangular grids, finite differences, the Dirichlet solver and
//! the on-disk field format.

mod fd;
mod io;
mod linear;
mod slice;
mod solver;

pub use fd::{
    fd_gradient, fd_gradient_fields, fd_hessian, fd_hessians, hessian_at, residual_field,
    ResidualField,
};
pub use io::{read_field, write_field, field_from_bytes, field_to_bytes, GRID_MAGIC, GRID_VERSION};
pub use linear::{bicgstab, LinearOperator, LinearSolve};
pub use slice::{slice_2d, slice_to_csv, slice_to_pgm, Slice};
pub use solver::{initial_guess, solve_dirichlet, LineSearch, SolveConfig, SolveReport};

use serde::{Deserialize, Serialize};

use crate::error::{arg, Result};

/// Minimum nodes per axis, so every interior node has a full stencil and
/// there is at least one ring of nodes two steps from the boundary.
pub const MIN_AXIS_NODES: usize = 5;

/// Scalar field sampled on a uniform grid, row-major with the last axis
/// fastest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridField {
    n_dims: usize,
    shape: Vec<usize>,
    origin: Vec<f64>,
    spacing: f64,
    values: Vec<f64>,
}

impl GridField {
    pub fn new(shape: Vec<usize>, origin: Vec<f64>, spacing: f64, values: Vec<f64>) -> Result<Self> {
        let n_dims = shape.len();
        if !(2..=3).contains(&n_dims) {
            return arg(format!("grids are 2- or 3-dimensional, got {n_dims} axes"));
        }
        if origin.len() != n_dims {
            return arg(format!("origin has {} entries for {n_dims} axes", origin.len()));
        }
        if let Some(s) = shape.iter().find(|&&s| s < MIN_AXIS_NODES) {
            return arg(format!("axis with {s} nodes; at least {MIN_AXIS_NODES} required"));
        }
        if !(spacing > 0.0) || !spacing.is_finite() {
            return arg(format!("spacing must be positive and finite, got {spacing}"));
        }
        let count: usize = shape.iter().product();
        if values.len() != count {
            return arg(format!("{} values for shape {:?} ({count} nodes)", values.len(), shape));
        }
        if origin.iter().chain(&values).any(|v| !v.is_finite()) {
            return arg("grid field contains non-finite values");
        }
        Ok(Self {
            n_dims,
            shape,
            origin,
            spacing,
            values,
        })
    }

    /// Samples `f` at every node.
    pub fn from_fn(
        shape: Vec<usize>,
        origin: Vec<f64>,
        spacing: f64,
        mut f: impl FnMut(&[f64]) -> f64,
    ) -> Result<Self> {
        let count: usize = shape.iter().product();
        let mut probe = Self {
            n_dims: shape.len(),
            shape: shape.clone(),
            origin: origin.clone(),
            spacing,
            values: Vec::new(),
        };
        let mut values = Vec::with_capacity(count);
        let mut x = vec![0.0; shape.len()];
        for k in 0..count {
            probe.coords_into(k, &mut x);
            values.push(f(&x));
        }
        probe.values = values;
        Self::new(probe.shape, probe.origin, probe.spacing, probe.values)
    }

    /// Cube `[−half_width, half_width]^n_dims` with `nodes` per axis.
    pub fn cube(n_dims: usize, nodes: usize, half_width: f64, f: impl FnMut(&[f64]) -> f64) -> Result<Self> {
        let spacing = 2.0 * half_width / (nodes as f64 - 1.0);
        Self::from_fn(vec![nodes; n_dims], vec![-half_width; n_dims], spacing, f)
    }

    /// Same geometry, new values.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        Self::new(self.shape.clone(), self.origin.clone(), self.spacing, values)
    }

    pub fn n_dims(&self) -> usize {
        self.n_dims
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn origin(&self) -> &[f64] {
        &self.origin
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Flat-index step for each axis.
    pub fn strides(&self) -> Vec<usize> {
        let mut s = vec![1; self.n_dims];
        for d in (0..self.n_dims - 1).rev() {
            s[d] = s[d + 1] * self.shape[d + 1];
        }
        s
    }

    pub fn flat_index(&self, node: &[usize]) -> Result<usize> {
        if node.len() != self.n_dims || node.iter().zip(&self.shape).any(|(i, s)| i >= s) {
            return arg(format!("node {node:?} outside grid of shape {:?}", self.shape));
        }
        Ok(node.iter().zip(self.strides()).map(|(i, s)| i * s).sum())
    }

    pub fn node(&self, flat: usize) -> Vec<usize> {
        let mut rest = flat;
        let mut out = vec![0; self.n_dims];
        for d in (0..self.n_dims).rev() {
            out[d] = rest % self.shape[d];
            rest /= self.shape[d];
        }
        out
    }

    fn coords_into(&self, flat: usize, x: &mut [f64]) {
        let mut rest = flat;
        for d in (0..self.n_dims).rev() {
            x[d] = self.origin[d] + (rest % self.shape[d]) as f64 * self.spacing;
            rest /= self.shape[d];
        }
    }

    pub fn coords(&self, flat: usize) -> Vec<f64> {
        let mut x = vec![0.0; self.n_dims];
        self.coords_into(flat, &mut x);
        x
    }

    pub fn value(&self, node: &[usize]) -> Result<f64> {
        Ok(self.values[self.flat_index(node)?])
    }

    /// Distance in index steps to the nearest boundary face.
    pub fn boundary_distance(&self, flat: usize) -> usize {
        self.node(flat)
            .iter()
            .zip(&self.shape)
            .map(|(&i, &s)| i.min(s - 1 - i))
            .min()
            .unwrap_or(0)
    }

    pub fn is_interior(&self, flat: usize) -> bool {
        self.boundary_distance(flat) >= 1
    }

    /// Flat indices of nodes at least `depth` steps from every face.
    pub fn interior_indices(&self, depth: usize) -> Vec<usize> {
        (0..self.len())
            .filter(|&k| self.boundary_distance(k) >= depth)
            .collect()
    }

    /// Node closest to the geometric center.
    pub fn center_flat(&self) -> usize {
        let node: Vec<usize> = self.shape.iter().map(|s| s / 2).collect();
        self.flat_index(&node).expect("center inside grid")
    }

    /// Upper corner of the grid box.
    pub fn extent_max(&self) -> Vec<f64> {
        self.origin
            .iter()
            .zip(&self.shape)
            .map(|(o, s)| o + (*s as f64 - 1.0) * self.spacing)
            .collect()
    }

    /// Whether `other` has identical shape, origin and spacing.
    pub fn same_geometry(&self, other: &GridField) -> bool {
        self.shape == other.shape && self.origin == other.origin && self.spacing == other.spacing
    }

    /// `max |self − other|` over the nodes selected by `filter`.
    pub fn sup_diff(&self, other: &GridField, filter: impl Fn(usize) -> bool) -> Result<f64> {
        if !self.same_geometry(other) {
            return arg("fields have different grid geometry");
        }
        Ok((0..self.len())
            .filter(|&k| filter(k))
            .map(|k| (self.values[k] - other.values[k]).abs())
            .fold(0.0, f64::max))
    }

    /// Multilinear interpolation at `x`, or `None` outside the grid box.
    pub fn interpolate(&self, x: &[f64]) -> Option<f64> {
        let strides = self.strides();
        let mut base = 0;
        let mut frac = vec![0.0; self.n_dims];
        for d in 0..self.n_dims {
            let t = (x[d] - self.origin[d]) / self.spacing;
            let top = (self.shape[d] - 1) as f64;
            if !(t >= -1e-9 && t <= top + 1e-9) {
                return None;
            }
            let t = t.clamp(0.0, top);
            let i = (t.floor() as usize).min(self.shape[d] - 2);
            frac[d] = t - i as f64;
            base += i * strides[d];
        }
        let mut total = 0.0;
        for corner in 0..(1usize << self.n_dims) {
            let mut w = 1.0;
            let mut k = base;
            for d in 0..self.n_dims {
                if corner >> d & 1 == 1 {
                    w *= frac[d];
                    k += strides[d];
                } else {
                    w *= 1.0 - frac[d];
                }
            }
            if w != 0.0 {
                total += w * self.values[k];
            }
        }
        Some(total)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn indexing_round_trip() {
        let f = GridField::from_fn(vec![5, 6, 7], vec![0.0; 3], 0.1, |x| x[0] + 10.0 * x[2]).unwrap();
        assert_eq!(f.strides(), vec![42, 7, 1]);
        for k in [0, 17, 100, 209] {
            assert_eq!(f.flat_index(&f.node(k)).unwrap(), k);
        }
        let k = f.flat_index(&[1, 2, 3]).unwrap();
        assert!((f.values()[k] - (0.1 + 3.0)).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_geometry() {
        assert!(GridField::new(vec![4, 5], vec![0.0; 2], 0.1, vec![0.0; 20]).is_err());
        assert!(GridField::new(vec![5, 5], vec![0.0; 2], 0.0, vec![0.0; 25]).is_err());
        assert!(GridField::new(vec![5, 5], vec![0.0; 2], 0.1, vec![0.0; 24]).is_err());
        assert!(GridField::new(vec![5, 5], vec![0.0; 2], 0.1, vec![f64::NAN; 25]).is_err());
    }

    #[test]
    fn interpolation_reproduces_bilinear() {
        let f = GridField::cube(2, 9, 1.0, |x| 1.0 + 2.0 * x[0] - x[1] + 0.5 * x[0] * x[1]).unwrap();
        let v = f.interpolate(&[0.33, -0.71]).unwrap();
        assert!((v - (1.0 + 0.66 + 0.71 - 0.5 * 0.33 * 0.71)).abs() < 1e-12);
        assert!(f.interpolate(&[1.2, 0.0]).is_none());
    }
}
