//! Discrete potential theory for Schrödinger operators on weighted graphs
//! with boundary: Green functions, perturbation classes, positive
//! solutions, heat kernels, p-capacity and Riesz transforms.
//!
//! The numerical core is generic over [`Real`]; the aliases below fix `f64`.

pub mod error;
pub mod fit;
pub mod geometry;
pub mod green;
pub mod heat;
pub mod linalg;
pub mod num;
pub mod operators;
pub mod parabolicity;
pub mod perturbation;
pub mod positive_solutions;
pub mod riesz;

pub use error::{Error, Result};
pub use num::Real;

pub type Graph = geometry::GraphWithBoundary<f64>;
pub type Operator = operators::SchrodingerOperator<f64>;
pub type Pot = operators::Potential<f64>;
pub type Kernel = green::KernelTable<f64>;
