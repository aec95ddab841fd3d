//! Code review network construction and information diffusion measurement.
//!
//! The pipeline turns pull-request timelines into a directed network of
//! human-made references between reviews, enriches every review with its
//! participants, affected components and owning teams, and measures how
//! similar linked reviews are along each of those dimensions.

pub mod catalog;
pub mod cli;
pub mod ingest;
pub mod metrics;
pub mod model;
pub mod report;
pub mod similarity;
pub mod synth;
