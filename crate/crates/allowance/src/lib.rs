//! Configuration, file formats, parallel execution and the command-line
//! driver around `allowance-core`.

pub mod app;
pub mod config;
pub mod exec;
pub mod io;

pub use config::Config;
