//! Dual-graph multitask delivery-time estimation.
//!
//! Orders are embedded through three attribute relation graphs (OD pairs,
//! hour-of-week, merchants), routed into head and tail branches by a
//! delivery-time classifier, and regressed by a shared DNN. Tail-branch
//! embeddings are re-weighted by the inverse square root of a Gaussian
//! kernel density over tail labels.

pub mod error;
pub mod data;
pub mod graphs;
pub mod imbalance;
pub mod layers;
pub mod metrics;
pub mod model;
pub mod numerics;
pub mod parallel;
pub mod pipeline;

pub use error::{Error, Result};
