//! Random and quenched pressures of two-body mean-field spin glasses under
//! general coupling laws, with numerical checks of comparison bounds.

pub mod bounds;
pub mod config;
pub mod disorder_mc;
pub mod distributions;
pub mod error;
pub mod levy;
pub mod models;
pub mod numeric;
pub mod pressure;
pub mod quadrature;
pub mod report;
pub mod run;
pub mod seeds;
pub mod stats;
pub mod verify;

pub use error::{Error, Result};
