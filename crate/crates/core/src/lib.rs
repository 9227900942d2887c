//! Surface-code syndrome decoding with a dual-head GATv2 network, optionally
//! trained with a knowledge-distillation loss against matching-derived edge
//! probabilities, plus the minimum-weight perfect matching reference decoder.
//!
//! Pipeline: [`formats`] loads a detector error model and shot tables,
//! [`graph`] flattens each shot over time into a small complete graph,
//! [`model`] and [`tensor`] implement the network, [`training`] runs the
//! baseline or distillation arm, [`matching`] decodes with MWPM and
//! [`sampler`] generates synthetic shots.

pub mod cli;
pub mod error;
pub mod formats;
pub mod graph;
pub mod matching;
pub mod model;
pub mod sampler;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
