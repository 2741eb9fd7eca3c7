//! Command-line frontend: config loading, dataset file formats, the
//! synthetic fixture generator, and one module per subcommand.

pub mod commands;
pub mod config;
pub mod error;
pub mod fixture;
pub mod io;
