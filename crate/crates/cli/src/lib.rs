pub mod args;
pub mod error;
pub mod ingest;
pub mod run;

pub use args::Cli;
pub use error::{CliError, Result};
pub use run::{run, RunOutput};
