//! File formats, session logs, the HTTP service and the command line for
//! `ezaudit-core`.

pub mod cli;
pub mod config;
pub mod cvr;
pub mod log;
pub mod manifest_csv;
pub mod server;
pub mod sim;
pub mod view;

pub use ezaudit_core as core;
