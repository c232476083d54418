//! Command-line front end and JSON-lines episode server for viewplan.

pub mod commands;
pub mod config;
pub mod wire;
