//! Positive-energy trajectories of the anisotropic Kepler problem
//! `ẍ = ∇U(x)` with an α-homogeneous potential, computed by direct
//! minimisation of the (free-time, possibly winding-constrained) action.
//!
//! Modules:
//! * [`potential`]: the potential, its gradients and structural conditions;
//! * [`dynamics`]: adaptive integration, monitors `I`, `Γ`, collision fits;
//! * [`paths`]: discrete paths, action quadrature, winding lifts;
//! * [`minimize`]: fixed-time, free-time and constrained minimisers;
//! * [`scatter`]: hyperbolic and bi-hyperbolic continuation drivers;
//! * [`blowup`]: blow-up scaling and the homothetic deformation test.

pub mod blowup;
pub mod dynamics;
pub mod error;
pub mod minimize;
pub mod numfmt;
pub mod paths;
pub mod potential;
pub mod quad;
pub mod scatter;
pub mod vecops;

pub use error::{Error, Result};
pub use potential::PotentialParams;
