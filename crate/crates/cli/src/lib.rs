//! Experiment runner binding the toolkit's modules: declarative configs,
//! a staged pipeline with content-hash idempotence, and synthetic
//! fixture generation.

pub mod config;
pub mod pipeline;
pub mod synth;
