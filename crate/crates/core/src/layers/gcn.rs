use std::rc::Rc;

use rand::Rng;

use super::Activation;
use crate::numerics::{ParamStore, SparseMatrix, Tape, Var};

/// `σ(D̃^{-1/2} Ã D̃^{-1/2} E W)` with `Ã = A + I` precomputed as a
/// constant sparse matrix.
#[derive(Clone, Debug)]
pub struct GcnLayer {
    pub prefix: String,
    pub in_dim: usize,
    pub out_dim: usize,
    pub activation: Activation,
}

impl GcnLayer {
    pub fn new(prefix: impl Into<String>, in_dim: usize, out_dim: usize, activation: Activation) -> Self {
        GcnLayer { prefix: prefix.into(), in_dim, out_dim, activation }
    }

    pub fn weight_name(&self) -> String {
        format!("{}.w", self.prefix)
    }

    pub fn init<R: Rng>(&self, store: &mut ParamStore, rng: &mut R) {
        store.init_glorot(&self.weight_name(), self.in_dim, self.out_dim, rng);
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, adj: &Rc<SparseMatrix>, e_prev: Var) -> Var {
        let w = tape.param(store, &self.weight_name());
        let xw = tape.matmul(e_prev, w);
        let prop = tape.spmm(Rc::clone(adj), xw);
        self.activation.apply(tape, prop)
    }
}
