//! Config-driven pipeline over `xids-core`: preprocess, train, explain and
//! report, each writing its part of an output bundle.

pub mod config;
pub mod error;
pub mod io;
pub mod pipeline;
pub mod report;

pub use config::{Method, PipelineConfig};
pub use error::{CliError, CliResult};
pub use pipeline::Bundle;
