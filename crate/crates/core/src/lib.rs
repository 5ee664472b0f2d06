//! Core of a white-box AutoML engine.
//!
//! Candidate generation (profiling, schema detection, strategy recommendation)
//! produces a handful of editable pipelines; a bandit tuner then spends the
//! trial budget across them.

pub mod data;
pub mod learners;
pub mod matrix;
pub mod schema;
pub mod strategy;
pub mod transforms;
pub mod resources;
pub mod tuner;
pub mod zeroshot;
