//! Command-line front end: batch experiment commands and the session server.

pub mod commands;
pub mod server;
