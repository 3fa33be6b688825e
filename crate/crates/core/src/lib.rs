//! Numerical laboratory for the special Lagrangian equation and the
//! quadratic Hessian equation `σ₂(D²u) = 1`.
//!
//! Building blocks, bottom up:
//!
//! - [`spectral`]: dense symmetric eigen-decomposition, elementary symmetric
//!   polynomials, one-sided eigenvalue derivatives at repeated eigenvalues.
//! - [`operators`]: the phase operator `Σ arctan λᵢ`, `σ₂` on its positive
//!   branch, the ratio `σ_{n−1}/σ_{n−2}`, their derivatives, phase classes.
//! - [`catalog`]: exact solutions with closed-form jets.
//! - [`grid`]: uniform grids, finite differences, a Newton Dirichlet solver
//!   and the field file format.
//! - [`transforms`]: graph rotation, Legendre and Legendre–Lewy transforms.
//! - [`rank`]: eigenvalue fields, rank counts, minimum-principle and
//!   Hessian-splitting verdicts.
//! - [`viscosity`]: checks of the differential inequalities satisfied by the
//!   smallest eigenvalue along solutions.

pub mod catalog;
pub mod error;
pub mod grid;
pub mod operators;
pub mod rank;
pub mod spectral;
pub mod transforms;
pub mod viscosity;

pub use error::{Error, Result};
