//! Modular theory on finite direct sums of matrix algebras: relative
//! modular flows, analytic sections of the modular bundle, the crossed
//! product by the modular flow with its canonical trace, and the
//! correspondence between functionals and relatively invariant operators.

pub mod algebra;
pub mod crossed;
pub mod error;
pub mod haagerup;
pub mod interpolator;
pub mod json;
pub mod lambda;
pub mod matrix;
pub mod section;
pub mod standard_form;
pub mod tolerance;

pub type C64 = num_complex::Complex64;

pub use algebra::{AlgebraElement, FiniteAlgebra, Functional, Weight};
pub use error::{Error, Result};
pub use tolerance::Tolerances;
