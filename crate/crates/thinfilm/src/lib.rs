//! Configuration, file formats, ensembles and refinement studies around
//! [`thinfilm_core`].

pub mod config;
pub mod convergence;
pub mod ensemble;
pub mod error;
pub mod io;
pub mod simulate;
pub mod verify;

pub use config::{load_config, parse_config, RunConfig};
pub use error::{ConfigError, Error, Result, Violation};
