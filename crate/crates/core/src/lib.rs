//! Planar Korn constants under tangential boundary conditions and the
//! constant of the 2D rigidity estimate, computed numerically.
//!
//! * [`mat2kit`]: conformal/anticonformal calculus of 2×2 matrices.
//! * [`gridfield`]: spectral calculus on a periodic grid standing in for ℝ².
//! * [`rigidity`]: extremal deformations for the rigidity constant √2.
//! * [`kornfem`]: P1 finite-element lower bounds for κ(Ω).
//! * [`shells`]: thin shells whose Korn constant blows up like `h⁻¹`.
//! * [`cli`]: the `kornlab` command-line front end.

pub mod cli;
pub mod gridfield;
pub mod kornfem;
pub mod mat2kit;
pub mod rigidity;
pub mod shells;

pub(crate) mod summation;

pub use summation::compensated_sum;
