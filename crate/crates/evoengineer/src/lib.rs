//! IO, file formats and the command line for the evoengineer search engine.
//! The search itself lives in `evoengineer_core`.

pub mod archive_io;
pub mod cli;
pub mod config;
pub mod corpus;
pub mod echo;
pub mod protocol;
pub mod remote;
pub mod report;
pub mod runner;
pub mod subprocess;
