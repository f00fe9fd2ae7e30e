//! Configuration files, text formats, a thread-pool executor and the
//! commands behind the `dasmc` binary.

pub mod config;
pub mod error;
pub mod exec;
pub mod experiment;
pub mod format;

pub use config::{Config, Overrides};
pub use error::{CliError, CliResult};
pub use exec::PoolExecutor;
