//! Batch front end for `pg_lab_core`: model files, seeded runs, CSV and
//! JSONL output.

pub mod cli;
pub mod error;
pub mod harness;
pub mod model_file;
pub mod records;

pub use cli::{run, Cli};
pub use error::{CliError, CliResult};
pub use model_file::{parse_model, ModelFile, ModelSpec};
pub use records::{Format, ResultRecord};
