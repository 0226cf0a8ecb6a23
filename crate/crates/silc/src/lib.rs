//! IO, model gateway, experiment orchestration and the `silc` command line
//! around the `silc-core` algorithms.

pub mod cli;
pub mod error;
pub mod experiment;
pub mod forecast_io;
pub mod gateway;
pub mod io;
pub mod logging;
pub mod restructure;
pub mod runner;
pub mod synth;

pub use error::{Error, Result};
