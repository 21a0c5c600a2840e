//! Fixed-gain LQR synthesis for discrete-time linear systems whose matrices
//! depend on a uniformly distributed scalar parameter.
//!
//! The random plant `x⁺ = (A(Δ) + B(Δ)K) x` is expanded in Legendre
//! polynomials of `Δ ∈ [-1, 1]`. A Galerkin projection turns it into a
//! deterministic surrogate on the stacked expansion coefficients, on which a
//! single parameter-independent gain `K` is synthesized. Stability of the
//! random closed loop is certified in the mean-square sense with a
//! parameter-dependent quadratic Lyapunov function and checked by sampling.
//!
//! The crate is `no_std` (it needs `alloc`); file formats and the command
//! line front end live in the `pcdlqr-cli` crate.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod basis;
mod error;
pub mod galerkin;
pub mod model;
pub mod numerics;
pub mod sim;
pub mod stability;
pub mod synthesis;

pub use error::{Error, Result, Warning};

/// Dense real matrix used throughout the crate.
pub type Matrix = nalgebra::DMatrix<f64>;
/// Dense real column vector.
pub type Vector = nalgebra::DVector<f64>;
