//! GIG: rule-guided imputation for property graphs.
//!
//! The pipeline mines (or loads) graph differential dependency rules over
//! a scope pattern's pseudo-relational table, trains an encoder-decoder
//! sequence model on the rule-satisfying instances, and imputes missing
//! attribute values with semantic-consistency validation.

pub mod constraint;
pub mod distance;
pub mod dsl;
pub mod error;
pub mod fixtures;
pub mod graph;
pub mod impute;
pub mod ingest;
pub mod metrics;
pub mod miner;
pub mod model;
pub mod pattern;
pub mod pipeline;
pub mod rule;
pub mod table;
pub mod value;

pub use error::{GigError, Result};
