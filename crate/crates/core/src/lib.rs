//! Numerical toolkit for affine Markov processes.
//!
//! The crate evaluates exponential-affine Fourier–Laplace transforms
//! `E_x[exp<u, X_t>] = Φ(t,u) exp<ψ(t,u), x>` by integrating the generalized
//! Riccati equations `∂_t Φ = Φ F(ψ)`, `∂_t ψ = R(ψ)`, simulates sample paths
//! from the affine semimartingale characteristics, and checks semiflow,
//! martingale and regularity properties against closed forms and Monte Carlo.
//!
//! Module map:
//!
//! * [`model`] — state spaces, jump measures, the affine parameter set and the
//!   Lévy–Khintchine functions `F` and `R`.
//! * [`riccati`] — adaptive Dormand–Prince integration of the Riccati system.
//! * [`closed_forms`] — Wishart, deterministic drift and finite-chain oracles.
//! * [`simulate`] — Euler–Maruyama / thinned-jump / killing path simulation and
//!   exact event-driven simulation on finite chains.
//! * [`verify`] — Monte Carlo, martingale, regularity and semiflow checks.
//! * [`cli`] — the `affine-kit` command-line front end.

pub mod cli;
pub mod closed_forms;
pub mod error;
pub mod linalg;
pub mod model;
pub mod presets;
pub mod riccati;
pub mod simulate;
pub mod verify;

pub use error::{Error, Result};
pub use num_complex::Complex64;
