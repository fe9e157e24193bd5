use rand::Rng;

use crate::numerics::{ParamStore, Tape, Var};

/// Attention fusion of the three attribute embeddings of each order.
///
/// `Q = e_od·Wq`, `K = e_t·Wk`, `V = e_m·Wv` are stacked as a 3-token
/// sequence. Each head projects every token with its own `W_i^Q`, `W_i^K`,
/// `W_i^V`, runs scaled dot-product self-attention over the 3 tokens, and
/// the token outputs are mean-pooled. Heads are concatenated and projected
/// by `W^O`. No biases anywhere, so zero inputs give a zero embedding.
#[derive(Clone, Debug)]
pub struct FusionBlock {
    pub prefix: String,
    pub d_od: usize,
    pub d_t: usize,
    pub d_m: usize,
    pub d_o: usize,
    pub heads: usize,
}

pub const TOKENS: usize = 3;

impl FusionBlock {
    pub fn new(prefix: impl Into<String>, d_od: usize, d_t: usize, d_m: usize, d_o: usize, heads: usize) -> Self {
        assert!(heads >= 1 && d_o.is_multiple_of(heads), "fusion: d_O = {d_o} not divisible by {heads} heads");
        FusionBlock { prefix: prefix.into(), d_od, d_t, d_m, d_o, heads }
    }

    pub fn head_dim(&self) -> usize {
        self.d_o / self.heads
    }

    pub fn input_name(&self, which: &str) -> String {
        format!("{}.w{which}", self.prefix)
    }

    /// `which` is one of `q`, `k`, `v`.
    pub fn head_name(&self, head: usize, which: &str) -> String {
        format!("{}.h{head}.{which}", self.prefix)
    }

    pub fn output_name(&self) -> String {
        format!("{}.wo", self.prefix)
    }

    pub fn init<R: Rng>(&self, store: &mut ParamStore, rng: &mut R) {
        store.init_glorot(&self.input_name("q"), self.d_od, self.d_o, rng);
        store.init_glorot(&self.input_name("k"), self.d_t, self.d_o, rng);
        store.init_glorot(&self.input_name("v"), self.d_m, self.d_o, rng);
        for h in 0..self.heads {
            for which in ["q", "k", "v"] {
                store.init_glorot(&self.head_name(h, which), self.d_o, self.head_dim(), rng);
            }
        }
        store.init_glorot(&self.output_name(), self.d_o, self.d_o, rng);
    }

    /// Inputs are per-order rows `[B × d_*]`; returns `[B × d_O]`.
    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, e_od: Var, e_t: Var, e_m: Var) -> Var {
        let rows = [e_od, e_t, e_m].map(|v| tape.value(v).rows());
        assert!(
            rows.iter().all(|&r| r == rows[0]),
            "fuse: incompatible shapes {:?} and {:?} and {:?}",
            tape.value(e_od).shape(),
            tape.value(e_t).shape(),
            tape.value(e_m).shape()
        );
        let wq = tape.param(store, &self.input_name("q"));
        let wk = tape.param(store, &self.input_name("k"));
        let wv = tape.param(store, &self.input_name("v"));
        let tokens = [tape.matmul(e_od, wq), tape.matmul(e_t, wk), tape.matmul(e_m, wv)];
        let scale = 1.0 / (self.head_dim() as f64).sqrt();

        let mut heads = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let pq = tape.param(store, &self.head_name(h, "q"));
            let pk = tape.param(store, &self.head_name(h, "k"));
            let pv = tape.param(store, &self.head_name(h, "v"));
            let q: Vec<Var> = tokens.iter().map(|&t| tape.matmul(t, pq)).collect();
            let k: Vec<Var> = tokens.iter().map(|&t| tape.matmul(t, pk)).collect();
            let v: Vec<Var> = tokens.iter().map(|&t| tape.matmul(t, pv)).collect();
            let mut pooled: Option<Var> = None;
            for &qt in &q {
                let logits: Vec<Var> = k
                    .iter()
                    .map(|&ks| {
                        let prod = tape.mul(qt, ks);
                        tape.row_sum(prod)
                    })
                    .collect();
                let logits = tape.concat_cols(&logits);
                let logits = tape.scale(logits, scale);
                let attn = tape.softmax_rows(logits);
                for (s, &vs) in v.iter().enumerate() {
                    let a = tape.slice_cols(attn, s, s + 1);
                    let term = tape.scale_rows(vs, a);
                    pooled = Some(match pooled {
                        None => term,
                        Some(p) => tape.add(p, term),
                    });
                }
            }
            let pooled = tape.scale(pooled.expect("three tokens"), 1.0 / TOKENS as f64);
            heads.push(pooled);
        }
        let cat = if heads.len() == 1 { heads[0] } else { tape.concat_cols(&heads) };
        let wo = tape.param(store, &self.output_name());
        tape.matmul(cat, wo)
    }
}
