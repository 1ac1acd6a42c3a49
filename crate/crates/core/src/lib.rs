//! NARX neural-network identification of quadrotor attitude-rate dynamics
//! from closed-loop PRBS experiments.

pub mod cli;
pub mod control;
pub mod error;
pub mod metrics;
pub mod narx;
pub mod plant;
pub mod signals;
pub mod train;

pub use error::{Error, Result};
