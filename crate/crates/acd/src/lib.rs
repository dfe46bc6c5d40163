//! Files, configuration and commands around `acd-core`.

pub mod cli;
pub mod config;
pub mod error;
pub mod io;
pub mod pipeline;
