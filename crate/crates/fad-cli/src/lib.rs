//! Command-line front end: dataset synthesis, training, clip-streaming
//! generation, metric reports, and the sampling-efficiency benchmark.

pub mod commands;
pub mod config;
pub mod predictions;
