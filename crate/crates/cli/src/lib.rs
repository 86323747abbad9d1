//! Front end for the `rabmod` binary: configuration and commands.

pub mod config;
pub mod run;
