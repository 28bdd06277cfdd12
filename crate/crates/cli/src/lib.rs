//! Command implementations behind the `voxrnn` binary. Each command takes
//! its parsed arguments and a writer for its report, so it can be driven
//! in-process as well as from the command line.

pub mod bench;
pub mod config;
pub mod generate;
pub mod prepare;
pub mod report;
pub mod train;
