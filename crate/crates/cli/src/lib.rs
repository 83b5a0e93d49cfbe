//! Batch front end: run a kernel, validate the whole suite, build
//! comparison reports.

pub mod commands;
pub mod pipeline;
pub mod suite;
