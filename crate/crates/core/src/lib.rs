pub mod cli_io;
pub mod error;
pub mod experiments;
pub mod profiles;
pub mod residuals;
pub mod solver;
pub mod spectral;

pub use error::{Error, Result};
