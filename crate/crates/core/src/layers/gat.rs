use std::rc::Rc;

use rand::Rng;

use super::Activation;
use crate::numerics::{EdgeIndex, ParamStore, Tape, Var};

/// Multi-head graph attention with heads averaged, not concatenated.
///
/// Per head `k`: `h = X W_k`, edge logit
/// `ReLU(a_k · [h_i | h_j] + b_k)`, softmax over the neighborhood of `i`,
/// and aggregation `Σ_j α_ij h_j`. The layer output is
/// `σ(mean_k(aggregation_k))`.
#[derive(Clone, Debug)]
pub struct GatLayer {
    pub prefix: String,
    pub in_dim: usize,
    pub out_dim: usize,
    pub heads: usize,
    pub activation: Activation,
}

/// Layer output plus per-head attention coefficients (aligned with the
/// edge index), kept for inspection and tests.
pub struct GatOutput {
    pub out: Var,
    pub attention: Vec<Var>,
}

impl GatLayer {
    pub fn new(prefix: impl Into<String>, in_dim: usize, out_dim: usize, heads: usize, activation: Activation) -> Self {
        assert!(heads >= 1, "GAT needs at least one head");
        GatLayer { prefix: prefix.into(), in_dim, out_dim, heads, activation }
    }

    pub fn weight_name(&self, head: usize) -> String {
        format!("{}.h{head}.w", self.prefix)
    }

    pub fn attn_name(&self, head: usize) -> String {
        format!("{}.h{head}.attn", self.prefix)
    }

    pub fn attn_bias_name(&self, head: usize) -> String {
        format!("{}.h{head}.attn_b", self.prefix)
    }

    pub fn init<R: Rng>(&self, store: &mut ParamStore, rng: &mut R) {
        for k in 0..self.heads {
            store.init_glorot(&self.weight_name(k), self.in_dim, self.out_dim, rng);
            store.init_glorot(&self.attn_name(k), 2 * self.out_dim, 1, rng);
            store.init_zeros(&self.attn_bias_name(k), vec![1]);
        }
    }

    /// `edges` must give every node a nonempty neighborhood (self edges
    /// included by the caller). `logit_bias`, if given, is added to each
    /// edge's post-ReLU logit.
    pub fn forward(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        edges: &Rc<EdgeIndex>,
        x: Var,
        logit_bias: Option<Var>,
    ) -> GatOutput {
        if let Some(i) = (0..edges.nodes).find(|&i| edges.offsets[i] == edges.offsets[i + 1]) {
            panic!("gat_forward: node {i} has an empty neighborhood; enable self edges");
        }
        let src = Rc::new(edges.sources());
        let dst = Rc::new(edges.targets.clone());
        let d = self.out_dim;
        let mut total: Option<Var> = None;
        let mut attention = Vec::with_capacity(self.heads);
        for k in 0..self.heads {
            let w = tape.param(store, &self.weight_name(k));
            let a = tape.param(store, &self.attn_name(k));
            let b = tape.param(store, &self.attn_bias_name(k));
            let h = tape.matmul(x, w);
            let a_src = tape.slice_rows(a, 0, d);
            let a_dst = tape.slice_rows(a, d, 2 * d);
            let s_src = tape.matmul(h, a_src);
            let s_dst = tape.matmul(h, a_dst);
            let e_src = tape.gather_rows(s_src, Rc::clone(&src));
            let e_dst = tape.gather_rows(s_dst, Rc::clone(&dst));
            let logit = tape.add(e_src, e_dst);
            let logit = tape.add_row(logit, b);
            let mut logit = tape.relu(logit);
            if let Some(bias) = logit_bias {
                logit = tape.add(logit, bias);
            }
            let alpha = tape.segment_softmax(logit, Rc::clone(edges));
            let agg = tape.edge_aggregate(alpha, h, Rc::clone(edges));
            total = Some(match total {
                None => agg,
                Some(t) => tape.add(t, agg),
            });
            attention.push(alpha);
        }
        let mean = tape.scale(total.expect("heads >= 1"), 1.0 / self.heads as f64);
        GatOutput { out: self.activation.apply(tape, mean), attention }
    }
}
