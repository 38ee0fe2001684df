//! Configuration loading, batch execution and artifact writing for the
//! `se3obs` command.

pub mod config;
pub mod output;
pub mod runner;
