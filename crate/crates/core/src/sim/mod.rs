//! Simulation lab: designs, data generation, metrics and Monte Carlo studies.

pub mod expr;
pub mod metrics;
pub mod rng;
pub mod scenario;
pub mod study;
