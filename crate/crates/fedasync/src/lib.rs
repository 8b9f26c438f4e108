//! Command-line front end, file formats and TCP deployment for FedAsync.

pub mod commands;
pub mod config;
pub mod io;
pub mod net;
