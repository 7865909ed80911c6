//! Experiment harness: dataset ingestion, configuration, persistence and
//! the figure sweeps.

pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod image;
pub mod mnist;
pub mod records;
pub mod sweep;
