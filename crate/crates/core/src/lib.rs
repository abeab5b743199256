//! Structural-fairness toolkit for node classification: graphs, centrality,
//! debiased neighborhood expansion, multi-hop attention models, and
//! degree-group fairness metrics.

pub mod centrality;
pub mod error;
pub mod expansion;
pub mod fairness;
pub mod graph;
pub mod models;
pub mod nn;
pub mod synthetic;

pub use error::{Error, Result};
