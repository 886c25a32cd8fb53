//! Numerical laboratory for parabolic SPDEs with super-linear multiplicative
//! coefficient `ξ|u|^{1+λ}` driven by spatially homogeneous colored noise.
//!
//! Modules, bottom to top:
//! - [`covariance`]: covariance kernels, spectral measures, Bessel kernels.
//! - [`solvability`]: exact admissibility conditions and Hölder targets.
//! - [`noise`]: spectral synthesis of noise increments on periodic grids.
//! - [`solver`]: the truncated semi-implicit scheme and its monitors.
//! - [`regularity`]: structure-function Hölder estimates.
//! - [`harness`]: configuration, orchestration, persistence and the CLI.

pub mod covariance;
pub mod fft;
pub mod harness;
pub mod noise;
pub mod quadrature;
pub mod regularity;
pub mod solvability;
pub mod solver;
pub mod stats;
