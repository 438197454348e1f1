//! Operator commands and the HTTP task server.

pub mod commands;
pub mod http;
