//! Command line and HTTP service over the proof engine.

pub mod cli;
pub mod config;
pub mod server;
pub mod session;
