//! Experiment drivers and output tables for the `fitpa` command line.

pub mod experiments;
pub mod table;
