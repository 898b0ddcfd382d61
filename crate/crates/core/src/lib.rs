//! Nonlinear maximal monotone extensions of semi-bounded symmetric operators.
//!
//! The crate works with finite-dimensional surrogates: a symmetric generator
//! `A°` (standing in for the Friedrichs extension), a trace map `τ` onto a
//! boundary space, and a maximal monotone boundary relation `Θ`. From these it
//! assembles the nonlinear Krein-type resolvent
//!
//! ```text
//! R_λ = R°_λ + G_λ (Θ + M°_λ)^{-1} G_λᵀ,    λ > λ°
//! ```
//!
//! evolves the induced nonlinear semigroup by implicit Euler, and checks the
//! algebraic identities the construction relies on. The [`point3d`] module
//! carries the exact boundary calculus for point perturbations of the 3D
//! Laplacian, where states are finite combinations of Green functions.

pub mod error;
pub mod extension;
pub mod hilbert;
pub mod inclusion;
pub mod point3d;
pub mod relations;
pub mod report;
pub mod rng;
pub mod scenario;
pub mod semigroup;

pub use error::{Error, Result};
pub use extension::{GraphPoint, IdentityReport, KreinExtension};
pub use hilbert::{GeneratorSpec, SelfAdjointGenerator};
pub use inclusion::{InclusionSolution, SolverOptions};
pub use relations::{ConvexFunction, MonotoneRelation, ScalarGraph};
pub use semigroup::{EvolveOptions, Trajectory};

/// Dense real vector.
pub type Vector = nalgebra::DVector<f64>;
/// Dense real matrix.
pub type Matrix = nalgebra::DMatrix<f64>;
