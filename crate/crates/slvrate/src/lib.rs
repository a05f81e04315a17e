//! File formats, parallel drivers, simulation experiments and the command-line
//! interface around [`slvrate_core`].

pub mod cli;
pub mod config;
pub mod experiment;
pub mod format;
pub mod io;
pub mod parallel;
