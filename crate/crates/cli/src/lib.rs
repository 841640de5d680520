//! Command-line companion to `crane-core`: file formats, configuration,
//! reports, plots, benchmarks and the `crane` binary's subcommand logic.

pub mod bench;
pub mod config_file;
pub mod data;
pub mod report;
pub mod runner;
pub mod svg;
