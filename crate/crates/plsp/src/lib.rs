//! File formats, run configuration, metrics output and the `plsp` command
//! line on top of [`plsp_core`].

pub mod cli;
pub mod config;
pub mod format;
pub mod metrics;
pub mod run;
pub mod verify;
