//! Numerical laboratory for the logarithmic fractional diffusion equation
//! `∂ₜu + (-Δ)^{1/2} log(1+u) = 0` on a periodic line.
//!
//! The production path is pseudospectral: an implicit Euler stepper whose
//! inner resolvent problem is a smooth convex minimization. Around it sit
//! independent oracles (Riesz quadrature, explicit RK4, a direct conjugated
//! Hilbert formula) and verifiers for conservation laws, Lyapunov functionals,
//! smoothing bounds, the transport reformulation and the functional
//! inequalities that drive the theory.

pub mod diagnostics;
pub mod error;
pub mod evolve;
pub mod experiment;
pub mod grid;
pub mod inequality;
pub mod nonlinearity;
pub mod poisson;
pub mod quadrature;
pub mod riesz;
pub mod solver;
pub mod spectral;
pub mod transport;
pub mod zeta;

pub use error::{Error, Result};
pub use evolve::{
    evolve, evolve_explicit, mild_form_residual, DiagnosticsRecord, Frame, LpNorms, RunConfig,
    TimeSchedule, Trajectory,
};
pub use grid::{integrate, lp_norm, lx_functional, psi, Field, Grid1D, Snapshot};
pub use nonlinearity::Nonlinearity;
pub use poisson::{a_kernel, poisson_kernel, poisson_value};
pub use riesz::frac_laplacian_riesz;
pub use solver::{minimize_j, resolvent_step, ResolventSolution, StepConfig};
pub use spectral::{
    extension_energy, frac_laplacian_spectral, harmonic_extension_slice, hilbert_transform,
    quarter_laplacian_energy, spectral_derivative, SpectralMultiplier,
};
pub use transport::{modified_hilbert, to_transport, transport_residual, TransportField};
