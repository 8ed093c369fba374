//! Command-line front end: single stages, the fingerprinted pipeline
//! runner and the HTTP service launcher.

pub mod commands;
pub mod pipeline;
