//! Graph and dense building blocks: GAT, GCN, per-dimension embedding
//! normalization, three-token attention fusion, and MLP heads.
//!
//! Layers only carry shapes and parameter names; weights live in a
//! [`ParamStore`](crate::numerics::ParamStore) and are pulled onto the tape
//! at forward time.

mod fusion;
mod gat;
mod gcn;
mod mlp;

use serde::{Deserialize, Serialize};

use crate::numerics::{Tape, Var};

pub use fusion::FusionBlock;
pub use gat::{GatLayer, GatOutput};
pub use gcn::GcnLayer;
pub use mlp::MlpHead;

/// Nonlinearity applied after graph aggregation and between MLP layers.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Relu,
    LeakyRelu(f64),
    Sigmoid,
    Identity,
}

impl Activation {
    pub fn apply(self, tape: &mut Tape, x: Var) -> Var {
        match self {
            Activation::Relu => tape.relu(x),
            Activation::LeakyRelu(s) => tape.leaky_relu(x, s),
            Activation::Sigmoid => tape.sigmoid(x),
            Activation::Identity => x,
        }
    }

    pub fn eval(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::LeakyRelu(s) => {
                if x > 0.0 {
                    x
                } else {
                    s * x
                }
            }
            Activation::Sigmoid => crate::numerics::sigmoid(x),
            Activation::Identity => x,
        }
    }
}

/// Divides every embedding dimension (column) by its L2 norm across nodes.
/// Columns whose norm is below `1e-12` come out as zeros.
pub fn normalize_embeddings(tape: &mut Tape, e: Var) -> Var {
    tape.col_normalize(e)
}
