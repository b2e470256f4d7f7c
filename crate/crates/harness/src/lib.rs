//! Experiment runner: config loading, scenario assembly and output files.

pub mod cli;
pub mod commands;
pub mod config;
pub mod error;
pub mod scenario;
