//! Juvenile/adult population model with nonlocal dispersal, free boundaries
//! and periodic harvesting pulses.
//!
//! The crate provides the time stepper for the pulsed system, principal
//! eigenvalues of the linearized periodic problem, periodic states, and
//! spreading/vanishing classification built on those pieces.

pub mod classify;
pub mod eigen;
pub mod error;
pub mod kernel;
pub mod model;
mod ode;
pub mod periodic;
pub mod simulator;

pub use error::{Error, Result};
pub use kernel::{KernelFamily, KernelSpec, Side};
pub use model::{Coefficients, FrontierParams, HarvestRule, InitialData, ModelParams, Periodic, Rates};
pub use simulator::{FrontState, SimConfig, Trajectory};
