//! Riemannian geometry of ground-state manifolds of parametrized quantum
//! Hamiltonians, specialized to a two-parameter interacting-boson (LMG-type)
//! model and the two-level crossing model.
//!
//! The pipeline goes from Hamiltonian families ([`model`]) through exact
//! diagonalization and degeneracy hunting ([`spectrum`]) to the quantum
//! metric tensor, Christoffel symbols and Ricci scalar ([`geometry`]),
//! geodesic flow ([`geodesic`]), mean-field condensate approximations
//! ([`meanfield`]) and the near-degeneracy two-level analysis ([`dpgeom`]).

pub mod dpgeom;
pub mod geodesic;
pub mod geometry;
pub mod meanfield;
pub mod model;
pub mod spectrum;

pub use model::{HamiltonianFamily, LmgModel, ParameterPoint};
pub use spectrum::{DiabolicPoint, SpectrumResult};

/// Dense complex matrix used for Hamiltonians and eigenvector sets.
pub type CMatrix = nalgebra::DMatrix<num_complex::Complex<f64>>;
/// Dense complex column vector (states).
pub type CVector = nalgebra::DVector<num_complex::Complex<f64>>;
/// Real 2x2 matrix (metric tensors in two-parameter charts).
pub type Matrix2 = nalgebra::Matrix2<f64>;

/// Complex scalar shorthand used throughout.
pub type C64 = num_complex::Complex<f64>;
