//! Quasi-periodic solutions of the forced quasi-linear Hamiltonian NLS
//!
//!   i ω·∂_φ u = u_xx + m u + ε f(φ, x, u, u_x, u_xx),  (φ, x) ∈ T^d × T,
//!
//! computed constructively: spectral representation, a seven-step
//! regularization of the linearized operator, KAM block-diagonalization,
//! Melnikov screening on a frequency grid and a Nash-Moser Newton loop.

pub mod error;
pub mod fourier_core;
pub mod grid;
pub mod kam_reducibility;
pub mod melnikov_measure;
pub mod nls_model;
pub mod operator_algebra;
pub mod regularization;
pub mod solver_driver;

pub use error::{Error, Result};
pub use num_complex::Complex64 as C64;
