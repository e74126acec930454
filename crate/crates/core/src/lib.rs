//! Numerical laboratory for the sharp Hardy–Sobolev inequality on compact
//! manifolds.
//!
//! The crate covers the optimal Euclidean constant `K(n, s)` and its extremal
//! bubbles, a conforming radial discretization on model manifolds (round
//! sphere, flat disk), the constrained minimization of the penalized quotient
//! `I_α`, the blow-up diagnostics of its minimizers, and the test-function
//! expansion that bounds the second constant `B₀` from below by the scalar
//! curvature at the base point.

pub mod blowup;
pub mod bubble;
pub mod cli;
pub mod constants;
pub mod error;
pub mod expansion;
pub mod functional;
pub mod geometry;
pub mod quadrature;
pub mod radial;
pub mod solver;
pub mod stencil;

pub use constants::Params;
pub use error::{Error, Result};
pub use geometry::ManifoldModel;
pub use radial::{RadialFunction, RadialGrid};
