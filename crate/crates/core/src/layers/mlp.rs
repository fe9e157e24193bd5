use rand::Rng;

use super::Activation;
use crate::numerics::{ParamStore, Tape, Var};

/// Affine layers with an activation between them; the last layer is linear.
#[derive(Clone, Debug)]
pub struct MlpHead {
    pub prefix: String,
    /// Input width followed by every layer's output width.
    pub widths: Vec<usize>,
    pub activation: Activation,
}

impl MlpHead {
    pub fn new(prefix: impl Into<String>, widths: Vec<usize>, activation: Activation) -> Self {
        assert!(widths.len() >= 2, "MLP needs an input width and at least one layer");
        MlpHead { prefix: prefix.into(), widths, activation }
    }

    pub fn num_layers(&self) -> usize {
        self.widths.len() - 1
    }

    pub fn weight_name(&self, layer: usize) -> String {
        format!("{}.l{layer}.w", self.prefix)
    }

    pub fn bias_name(&self, layer: usize) -> String {
        format!("{}.l{layer}.b", self.prefix)
    }

    pub fn init<R: Rng>(&self, store: &mut ParamStore, rng: &mut R) {
        for l in 0..self.num_layers() {
            store.init_glorot(&self.weight_name(l), self.widths[l], self.widths[l + 1], rng);
            store.init_zeros(&self.bias_name(l), vec![self.widths[l + 1]]);
        }
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Var {
        let mut h = x;
        for l in 0..self.num_layers() {
            let w = tape.param(store, &self.weight_name(l));
            let b = tape.param(store, &self.bias_name(l));
            let z = tape.matmul(h, w);
            h = tape.add_row(z, b);
            if l + 1 < self.num_layers() {
                h = self.activation.apply(tape, h);
            }
        }
        h
    }
}
