//! Configuration, sweep execution and output formats on top of `hysim-core`.

pub mod config;
pub mod format;
pub mod run;
