//! Upper bounds on uniform Lyapunov exponents and Lyapunov dimension for
//! delay-differential-equation attractors, together with the numerical
//! machinery used to check them: exterior-power linear algebra, finite
//! cocycle experiments, a discretized delay-operator calculus, a method of
//! steps integrator with linearized monodromy, and characteristic roots of
//! scalar delay equations.

// `!(x > 0.0)` guards reject NaN on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod charroots;
pub mod cli;
pub mod cocycle;
pub mod config;
pub mod dde;
pub mod delayop;
pub mod error;
pub mod output;
pub mod sweep;
pub mod tensor;
pub mod verify;

pub use error::{Error, Result};

/// Real dense matrix used throughout the crate.
pub type DenseMatrix = nalgebra::DMatrix<f64>;
/// Complex dense matrix (exterior algebra and characteristic roots only).
pub type ComplexMatrix = nalgebra::DMatrix<num_complex::Complex64>;
