//! File formats, staged pipeline and command-line front end of the
//! augmentation engine. The math lives in `augforge-core`.

pub mod cli;
pub mod config;
pub mod error;
pub mod eval;
pub mod formats;
pub mod pipeline;
pub mod records;
pub mod stats;
pub mod synthetic;

pub use config::{Mode, Overrides, RunConfig};
pub use error::{AppError, ErrorCategory, Result};
pub use pipeline::{run, RunOutcome};
