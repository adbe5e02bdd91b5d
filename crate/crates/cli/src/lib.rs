//! Configuration, orchestration and plotting for the `tetramer` command.

pub mod config;
pub mod output;
pub mod plot;
pub mod run;

/// Environment variable holding the worker-thread count.
pub const WORKERS_ENV: &str = "TETRAMER_WORKERS";

