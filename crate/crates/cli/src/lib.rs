//! Library surface of the pipeline CLI so integration tests can drive the
//! subcommands in-process.

pub mod commands;
pub mod config;
pub mod manifest;
