//! Command-line front end: config layering and the `sample`, `train`,
//! `score`, `eval` and `split` subcommands.

pub mod commands;
pub mod config;
