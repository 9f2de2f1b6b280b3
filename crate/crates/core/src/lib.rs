//! Discrete-velocity solver and verification kit for the fermionic quantum BGK
//! relaxation model
//!
//! ```text
//! ∂t F + p·∇x F = (𝓕(F) − F) / τ,     𝓕 = 1 / (exp(a|p − b|² + c) + 1)
//! ```
//!
//! The crate is `no_std` (it needs `alloc`) and is organized bottom-up:
//!
//! - [`fdintegrals`]: Fermi-Dirac radial integrals, the ratio function β, its
//!   derivative and its inverse on the monotone branch `c > −ln 3`.
//! - [`equilibrium`]: moments ↔ equilibrium parameters, local Fermi-Dirac
//!   evaluation, the discrete (quadrature-exact) inversion and the relaxation
//!   frequency law.
//! - [`phasegrid`]: velocity/spatial grids, phase-space states, moments, the
//!   H-functional, the global equilibrium and perturbed initial data.
//! - [`linearized`]: orthonormal null-space basis, projection, the linearized
//!   operator and closed-form derivative formulas.
//! - [`solver`]: Strang-split time integration and the Picard iteration.
//! - [`diagnostics`]: perturbation extraction, decay fits and smallness monitors.
//!
//! With the `parallel` feature, per-cell relaxation runs on the rayon pool.
//! Results are bit-identical to the serial path.

#![cfg_attr(not(feature = "std"), no_std)]
// `!(x > 0.0)` deliberately rejects NaN as well
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

extern crate alloc;

pub mod diagnostics;
pub mod equilibrium;
mod error;
pub mod fdintegrals;
mod linalg;
pub mod linearized;
pub mod phasegrid;
pub mod solver;

pub use error::{Error, Result};

pub use equilibrium::{FermiParams, Moments, TauCoefficients};
pub use phasegrid::{GlobalEquilibrium, PhaseGrid, PhaseState, SpatialGrid, VelocityGrid};
pub use solver::{InversionMode, RunConfig, TransportScheme};

