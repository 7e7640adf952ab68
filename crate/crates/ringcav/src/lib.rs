//! Linearized quantum dynamics of an annular atomic superfluid coupled to a
//! Laguerre-Gaussian cavity mode and a torsionally oscillating end mirror:
//! steady states and bistability, drift-matrix stability, homodyne output
//! noise spectra with angle optimization, stationary Gaussian entanglement,
//! and a stochastic-trajectory cross-check.

pub mod dynamics;
pub mod entangle;
pub mod mc;
pub mod params;
pub mod presets;
pub mod spectra;
pub mod steady;

pub use dynamics::{build_drift, stability, DriftMatrix, StabilityReport};
pub use entangle::{log_negativity, solve_lyapunov, Mode};
pub use params::{derive, DerivedParams, PhysicalParams};
pub use spectra::{homodyne_spectrum, optimal_angle, optimized_spectrum, transfer};
pub use steady::{critical_thresholds, solve_steady, SteadyState};
