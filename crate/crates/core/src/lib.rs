//! Density-function certificates for almost-global stability of stochastic
//! differential equations with polynomial and rational coefficients.
//!
//! The crate applies the adjoint generator symbolically in exact rational
//! arithmetic, reduces the sign condition on the result to a sum-of-squares
//! program, solves it with a small dense interior-point SDP solver, and
//! checks conclusions with Euler–Maruyama Monte Carlo runs.

pub mod mc;
pub mod ops;
pub mod poly;
pub mod sdp;
pub mod sos;
pub mod synth;
