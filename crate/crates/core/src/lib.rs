//! Two-qubit quantum process tomography.
//!
//! The crate simulates tomographic coincidence-count experiments, reconstructs
//! a physical process matrix from count data with a penalized maximum-likelihood
//! fit, and evaluates gate-performance measures on the result.
//!
//! Module layout follows the data flow:
//!
//! - [`qcore`]: dense complex linear algebra, quantum states and state measures.
//! - [`process`]: operator bases and process matrices (the `chi` representation).
//! - [`tomo`]: tomographic settings, forward model and count simulation.
//! - [`recon`]: linear inversion and maximum-likelihood reconstruction.
//! - [`metrics`]: process-level figures of merit and Monte-Carlo sweeps.

pub mod error;
pub mod metrics;
pub mod optim;
pub mod process;
pub mod qcore;
pub mod recon;
pub mod tomo;

pub use error::{QptError, Result};
pub use process::{Constraint, OperatorBasis, ProcessMatrix, UnitaryGate};
pub use qcore::{CMatrix, CVector, DensityMatrix, PureState, Rng, C64};
