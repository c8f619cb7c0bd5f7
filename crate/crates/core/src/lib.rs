pub mod cli;
pub mod dataio;
pub mod error;
pub mod experiment;
pub mod inference;
pub mod losses;
pub mod metrics;
pub mod nets;
pub mod training;

pub use error::{Error, Result};
