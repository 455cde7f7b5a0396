//! Command-line front end for the `mimicache` toolkit: predict, compare,
//! sweep, simulate, and gen-trace commands over trace files on disk.

pub mod cli;
pub mod manifest;
pub mod pipeline;
pub mod report;
pub mod table;
