//! Operator surface for the heterograph decoupled-learning toolkit:
//! subcommands with file-based handoff between pipeline stages.

pub mod commands;
pub mod config;
pub mod lock;
