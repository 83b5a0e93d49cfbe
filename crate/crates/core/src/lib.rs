//! Cycle-level model of a reconfigurable weight-stationary spatial array and
//! the kernel mappers, reference models and performance accounting around it.

pub mod fabric;
pub mod mappers;
pub mod numeric;
pub mod oracle;
pub mod perf;
