//! Pseudospectral laboratory for multi-bubble blow-up of the focusing
//! mass-critical nonlinear Schrödinger equation
//!
//! ```text
//! i ∂_t u + Δu + |u|^{4/d} u + b·∇u + c u = 0,   d = 1, 2,
//! ```
//!
//! where `b = 2∇W`, `c = Σ_j (∂_j W)² + ΔW` come from a conservative
//! multiplicative noise `W = i Σ_k φ_k B_k(t)`.
//!
//! The crate is organised bottom-up:
//!
//! - [`spectral`]: periodic grids, FFT derivatives, quadrature and norms.
//! - [`ground_state`]: the ground state `Q`, the profile `ρ` with `L₊ρ = −|x|²Q`,
//!   and the linearized operators `L±`.
//! - [`profiles`]: modulated bubbles, pseudo-conformal solutions and symmetries.
//! - [`noise`]: flat noise weights, Brownian paths, the coefficients `b`, `c`.
//! - [`evolution`]: Strang split-step integration forward and backward in time.
//! - [`modulation`]: localizers, the orthogonality-constrained decomposition,
//!   modulation residuals and unstable-direction scalar products.
//! - [`diagnostics`]: conservation laws, energy variation, generalized energy,
//!   difference functional and blow-up rate fits.
//! - [`uniqueness`]: pair runs, difference functionals and Cauchy checks.
//! - [`fit`]: least-squares line and power-law fits.
//! - [`io`]: binary checkpoint and profile-cache formats.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod diagnostics;
pub mod error;
pub mod evolution;
pub mod fit;
pub mod ground_state;
pub mod io;
pub mod modulation;
pub mod noise;
pub mod profiles;
pub mod spectral;
pub mod uniqueness;

pub use error::{Error, Result};
pub use num_complex::Complex64;
