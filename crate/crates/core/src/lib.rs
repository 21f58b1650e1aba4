//! Exact symbolic reduction and zero counting for first-order Melnikov
//! functions of piecewise smooth integrable systems.
#![no_std]

extern crate alloc;

pub mod algebraic;
pub mod chart;
pub mod error;
pub mod eval;
pub mod expr;
pub mod instances;
pub mod integrator;
pub mod poly;
pub mod ratfunc;
pub mod reduction;
pub mod scalar;
pub mod sturm;
pub mod zeros;

pub use algebraic::{AlgebraicElement, RadicalMonomial};
pub use chart::{Chart, Interval};
pub use error::{Error, Result};
pub use eval::{evaluate, CompiledExpression, EvalPolicy, Evaluation, Rung};
pub use expr::{Expression, Transcendental};
pub use poly::Poly;
pub use ratfunc::RatFunc;
pub use scalar::{Rational, Scalar};
