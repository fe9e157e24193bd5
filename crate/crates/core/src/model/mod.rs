//! The DGM-DTE network: classification routing, dual graph branches with
//! tail re-weighting, index merge, shared regression DNN, and joint loss.

mod checkpoint;
mod train;

use std::fmt;
use std::rc::Rc;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::graphs::{AttributeGraphs, GraphConfig, GraphTensors, OrderIndex};
use crate::imbalance::reweight_embeddings;
use crate::layers::{normalize_embeddings, Activation, FusionBlock, GatLayer, GcnLayer, MlpHead};
use crate::numerics::{ParamStore, Tape, Tensor, Var};
use crate::{Error, Result};

pub use checkpoint::{load_checkpoint, meta_path, restore, save_checkpoint};
pub use train::{
    evaluate, fit_density, predict_orders, train, train_with_init, EpochLog, PreparedData, TrainOutcome,
    LOG_HEADER,
};

/// Model variant: the full method and the four ablations.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    /// Classifier routing into head and re-weighted tail branches.
    #[default]
    Full,
    /// Ground-truth routing during training, no classifier; test orders
    /// have no known class and all go through the head branch.
    HtReg,
    /// No classifier; every order passes through both branches and the two
    /// embeddings are averaged.
    ImReg,
    /// A single (head) branch for all orders.
    OrderRep,
    /// A single re-weighted (tail) branch for all orders, density fit on
    /// all training labels.
    ReWeight,
}

impl Variant {
    pub const ALL: [Variant; 5] = [Variant::Full, Variant::HtReg, Variant::ImReg, Variant::OrderRep, Variant::ReWeight];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::HtReg => "ht-reg",
            Variant::ImReg => "im-reg",
            Variant::OrderRep => "order-rep",
            Variant::ReWeight => "re-weight",
        }
    }

    pub fn has_classifier(self) -> bool {
        self == Variant::Full
    }

    pub fn has_head(self) -> bool {
        self != Variant::ReWeight
    }

    pub fn has_tail(self) -> bool {
        self != Variant::OrderRep
    }

    /// Whether the tail density is fit on every training label rather than
    /// only on labels above `t_c`.
    pub fn density_on_all_labels(self) -> bool {
        self == Variant::ReWeight
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown variant {s:?}; expected one of full, ht-reg, im-reg, order-rep, re-weight")))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoutingMode {
    /// Route training orders by their ground-truth class.
    #[default]
    TeacherForcing,
    /// Route training orders by the classifier's prediction.
    Predicted,
}

/// Hyperparameters, with defaults sized for 10k orders on one machine.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DgmConfig {
    pub variant: Variant,
    /// Classification threshold in hours: tail iff `y > t_c`.
    pub t_c: f64,
    /// Order embedding size after fusion.
    pub d_o: usize,
    /// Per-graph node embedding size.
    pub gnn_dim: usize,
    pub gat_heads: usize,
    pub fusion_heads: usize,
    pub classifier_hidden: Vec<usize>,
    pub dnn_widths: Vec<usize>,
    pub activation: Activation,
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub reweight_on: bool,
    /// Rescale tail weights to mean 1 per batch.
    pub normalize_weights: bool,
    /// KDE bandwidth in hours; `None` uses Silverman's rule.
    pub bandwidth: Option<f64>,
    pub routing_mode: RoutingMode,
    /// Weight of the cross-entropy term in the joint loss.
    pub bce_weight: f64,
    pub self_loops: bool,
    /// Hours per unit of DNN output; `None` means the training-label mean,
    /// filled in when training starts.
    pub output_scale: Option<f64>,
    pub graph: GraphConfig,
}

impl Default for DgmConfig {
    fn default() -> Self {
        DgmConfig {
            variant: Variant::Full,
            t_c: 96.0,
            d_o: 32,
            gnn_dim: 16,
            gat_heads: 2,
            fusion_heads: 4,
            classifier_hidden: vec![32],
            dnn_widths: vec![128, 64, 32],
            activation: Activation::Relu,
            lr: 5e-4,
            batch_size: 256,
            epochs: 30,
            seed: 0,
            reweight_on: true,
            normalize_weights: true,
            bandwidth: None,
            routing_mode: RoutingMode::TeacherForcing,
            bce_weight: 1.0,
            self_loops: true,
            output_scale: None,
            graph: GraphConfig::default(),
        }
    }
}

impl DgmConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.t_c > 0.0) {
            return bad(format!("t_c must be positive, got {}", self.t_c));
        }
        if self.d_o == 0 || self.gnn_dim == 0 || self.gat_heads == 0 || self.fusion_heads == 0 {
            return bad("d_o, gnn_dim, gat_heads and fusion_heads must be positive".into());
        }
        if !self.d_o.is_multiple_of(self.fusion_heads) {
            return bad(format!("d_o = {} is not divisible by fusion_heads = {}", self.d_o, self.fusion_heads));
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return bad(format!("lr must be a nonnegative number, got {}", self.lr));
        }
        if self.dnn_widths.contains(&0) || self.classifier_hidden.contains(&0) {
            return bad("layer widths must be positive".into());
        }
        if let Some(s) = self.output_scale {
            if !(s > 0.0 && s.is_finite()) {
                return bad(format!("output_scale must be positive, got {s}"));
            }
        }
        // The fallback node has no edges, so GAT always needs self edges.
        if !self.self_loops {
            return bad("self_loops = false leaves the fallback node with an empty neighborhood".into());
        }
        Ok(())
    }

    /// Ground-truth class: 1 (tail) iff `y > t_c`.
    pub fn class_of(&self, y: f64) -> u8 {
        u8::from(y > self.t_c)
    }
}

/// Feature widths of the three graphs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputDims {
    pub spatial: usize,
    pub temporal: usize,
    pub merchant: usize,
}

impl InputDims {
    pub fn of(graphs: &AttributeGraphs) -> Self {
        InputDims {
            spatial: graphs.spatial.feature_dim(),
            temporal: graphs.temporal.feature_dim(),
            merchant: graphs.merchant.feature_dim(),
        }
    }
}

/// Two GAT layers on the spatial graph, two GCN layers on each of the
/// temporal and merchant graphs, per-dimension normalization of each final
/// node embedding, and attention fusion into one order embedding.
#[derive(Clone, Debug)]
pub struct RepresentationStack {
    pub prefix: String,
    pub gat: [GatLayer; 2],
    pub temporal: [GcnLayer; 2],
    pub merchant: [GcnLayer; 2],
    pub fusion: FusionBlock,
}

impl RepresentationStack {
    pub fn new(prefix: &str, dims: InputDims, cfg: &DgmConfig) -> Self {
        let (g, a) = (cfg.gnn_dim, cfg.activation);
        RepresentationStack {
            prefix: prefix.to_string(),
            gat: [
                GatLayer::new(format!("{prefix}.gat0"), dims.spatial, g, cfg.gat_heads, a),
                GatLayer::new(format!("{prefix}.gat1"), g, g, cfg.gat_heads, a),
            ],
            temporal: [
                GcnLayer::new(format!("{prefix}.tgcn0"), dims.temporal, g, a),
                GcnLayer::new(format!("{prefix}.tgcn1"), g, g, a),
            ],
            merchant: [
                GcnLayer::new(format!("{prefix}.mgcn0"), dims.merchant, g, a),
                GcnLayer::new(format!("{prefix}.mgcn1"), g, g, a),
            ],
            fusion: FusionBlock::new(format!("{prefix}.fuse"), g, g, g, cfg.d_o, cfg.fusion_heads),
        }
    }

    pub fn init<R: Rng>(&self, store: &mut ParamStore, rng: &mut R) {
        for l in &self.gat {
            l.init(store, rng);
        }
        for l in self.temporal.iter().chain(&self.merchant) {
            l.init(store, rng);
        }
        self.fusion.init(store, rng);
    }

    /// Normalized node embeddings of all three graphs.
    pub fn node_embeddings(&self, tape: &mut Tape, store: &ParamStore, gt: &GraphTensors) -> [Var; 3] {
        let bias = gt.spatial_bias.as_ref().map(|b| tape.constant(b.clone()));
        let mut s = tape.constant(gt.spatial_features.clone());
        for l in &self.gat {
            s = l.forward(tape, store, &gt.spatial_edges, s, bias).out;
        }
        let mut t = tape.constant(gt.temporal_features.clone());
        for l in &self.temporal {
            t = l.forward(tape, store, &gt.temporal_adj, t);
        }
        let mut m = tape.constant(gt.merchant_features.clone());
        for l in &self.merchant {
            m = l.forward(tape, store, &gt.merchant_adj, m);
        }
        [normalize_embeddings(tape, s), normalize_embeddings(tape, t), normalize_embeddings(tape, m)]
    }

    /// Order embeddings `[B × d_O]` for the indexed orders.
    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, gt: &GraphTensors, idx: &OrderIndex) -> Var {
        let [s, t, m] = self.node_embeddings(tape, store, gt);
        let e_od = tape.gather_rows(s, Rc::new(idx.od.clone()));
        let e_t = tape.gather_rows(t, Rc::new(idx.t.clone()));
        let e_m = tape.gather_rows(m, Rc::new(idx.m.clone()));
        self.fusion.forward(tape, store, e_od, e_t, e_m)
    }
}

/// Stable partition of a batch by class plus the merge permutation.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Routing {
    /// Batch positions with class 0, in batch order.
    pub head: Vec<usize>,
    /// Batch positions with class 1, in batch order.
    pub tail: Vec<usize>,
    /// `merge[i]` is the row of batch position `i` in `head ++ tail`.
    pub merge: Vec<usize>,
}

pub fn route(classes: &[u8]) -> Routing {
    let head: Vec<usize> = (0..classes.len()).filter(|&i| classes[i] == 0).collect();
    let tail: Vec<usize> = (0..classes.len()).filter(|&i| classes[i] != 0).collect();
    let mut merge = vec![0; classes.len()];
    for (row, &i) in head.iter().chain(&tail).enumerate() {
        merge[i] = row;
    }
    Routing { head, tail, merge }
}

/// Applies the merge permutation to rows stacked as `head ++ tail`.
pub fn merge_rows<T: Clone>(stacked: &[T], routing: &Routing) -> Vec<T> {
    routing.merge.iter().map(|&r| stacked[r].clone()).collect()
}

/// Argmax over `[z_head, z_tail]` rows; exact ties go to head.
pub fn argmax_classes(logits: &Tensor) -> Vec<u8> {
    (0..logits.rows()).map(|r| u8::from(logits.at(r, 1) > logits.at(r, 0))).collect()
}

/// How one batch is routed and weighted.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchPlan {
    /// Routing class per order. Ignored by single-branch variants and
    /// im-reg.
    pub classes: Vec<u8>,
    /// Multiplier for each order's tail-branch embedding.
    pub tail_weights: Vec<f64>,
}

impl BatchPlan {
    pub fn unweighted(classes: Vec<u8>) -> Self {
        let n = classes.len();
        BatchPlan { classes, tail_weights: vec![1.0; n] }
    }
}

pub struct BatchOutput {
    /// `[B × 1]` predictions in hours.
    pub y_hat: Var,
    /// `[B × 2]` classifier logits, when the variant has a classifier.
    pub logits: Option<Var>,
}

/// The network structure; parameters live in a [`ParamStore`].
#[derive(Clone, Debug)]
pub struct DgmModel {
    pub config: DgmConfig,
    pub dims: InputDims,
    pub classifier: Option<(RepresentationStack, MlpHead)>,
    pub head: Option<RepresentationStack>,
    pub tail: Option<RepresentationStack>,
    pub dnn: MlpHead,
}

impl DgmModel {
    pub fn new(config: &DgmConfig, dims: InputDims) -> Self {
        let v = config.variant;
        let classifier = v.has_classifier().then(|| {
            let mut widths = vec![config.d_o];
            widths.extend(&config.classifier_hidden);
            widths.push(2);
            (RepresentationStack::new("cls", dims, config), MlpHead::new("cls.mlp", widths, config.activation))
        });
        let mut widths = vec![config.d_o];
        widths.extend(&config.dnn_widths);
        widths.push(1);
        DgmModel {
            config: config.clone(),
            dims,
            classifier,
            head: v.has_head().then(|| RepresentationStack::new("head", dims, config)),
            tail: v.has_tail().then(|| RepresentationStack::new("tail", dims, config)),
            dnn: MlpHead::new("dnn", widths, config.activation),
        }
    }

    /// Fresh parameters; every component draws from one seeded stream in a
    /// fixed order (classifier, head, tail, DNN).
    pub fn init<R: Rng>(&self, rng: &mut R) -> ParamStore {
        let mut store = ParamStore::new();
        if let Some((stack, mlp)) = &self.classifier {
            stack.init(&mut store, rng);
            mlp.init(&mut store, rng);
        }
        for stack in self.head.iter().chain(&self.tail) {
            stack.init(&mut store, rng);
        }
        self.dnn.init(&mut store, rng);
        store
    }

    pub fn output_scale(&self) -> f64 {
        self.config.output_scale.unwrap_or(1.0)
    }

    pub fn classify(&self, tape: &mut Tape, store: &ParamStore, gt: &GraphTensors, idx: &OrderIndex) -> Option<Var> {
        let (stack, mlp) = self.classifier.as_ref()?;
        let e = stack.forward(tape, store, gt, idx);
        Some(mlp.forward(tape, store, e))
    }

    /// Shared DNN on order embeddings, `ŷ = max(0, scale · DNN(E))`.
    pub fn regress(&self, tape: &mut Tape, store: &ParamStore, e: Var) -> Var {
        let out = self.dnn.forward(tape, store, e);
        let out = tape.scale(out, self.output_scale());
        tape.relu(out)
    }

    /// Order embeddings routed through the branches and merged back into
    /// batch order.
    pub fn embed(&self, tape: &mut Tape, store: &ParamStore, gt: &GraphTensors, idx: &OrderIndex, plan: &BatchPlan) -> Var {
        let n = idx.len();
        assert_eq!(plan.classes.len(), n, "plan: {} classes for {n} orders", plan.classes.len());
        assert_eq!(plan.tail_weights.len(), n, "plan: {} weights for {n} orders", plan.tail_weights.len());
        match (self.config.variant, &self.head, &self.tail) {
            (Variant::OrderRep, Some(head), _) => head.forward(tape, store, gt, idx),
            (Variant::ReWeight, _, Some(tail)) => {
                let e = tail.forward(tape, store, gt, idx);
                reweight_embeddings(tape, e, &plan.tail_weights)
            }
            (Variant::ImReg, Some(head), Some(tail)) => {
                let h = head.forward(tape, store, gt, idx);
                let t = tail.forward(tape, store, gt, idx);
                let t = reweight_embeddings(tape, t, &plan.tail_weights);
                let sum = tape.add(h, t);
                tape.scale(sum, 0.5)
            }
            (Variant::Full | Variant::HtReg, Some(head), Some(tail)) => {
                let routing = route(&plan.classes);
                let mut parts = Vec::with_capacity(2);
                if !routing.head.is_empty() {
                    parts.push(head.forward(tape, store, gt, &idx.select(&routing.head)));
                }
                if !routing.tail.is_empty() {
                    let e = tail.forward(tape, store, gt, &idx.select(&routing.tail));
                    let w: Vec<f64> = routing.tail.iter().map(|&i| plan.tail_weights[i]).collect();
                    parts.push(reweight_embeddings(tape, e, &w));
                }
                let stacked = if parts.len() == 1 { parts[0] } else { tape.concat_rows(&parts) };
                if routing.tail.is_empty() || routing.head.is_empty() {
                    stacked
                } else {
                    tape.gather_rows(stacked, Rc::new(routing.merge))
                }
            }
            (v, _, _) => unreachable!("variant {v} built without its branches"),
        }
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, gt: &GraphTensors, idx: &OrderIndex, plan: &BatchPlan) -> BatchOutput {
        let logits = self.classify(tape, store, gt, idx);
        let e = self.embed(tape, store, gt, idx, plan);
        BatchOutput { y_hat: self.regress(tape, store, e), logits }
    }

    /// Evaluation routing: predicted classes for the full variant, all head
    /// for ht-reg (classes are unknown at test time), weight 1 everywhere.
    pub fn predict(&self, store: &ParamStore, gt: &GraphTensors, idx: &OrderIndex) -> Vec<f64> {
        if idx.is_empty() {
            return Vec::new();
        }
        let mut tape = Tape::new();
        let classes = match self.classify(&mut tape, store, gt, idx) {
            Some(z) => argmax_classes(tape.value(z)),
            None => vec![0; idx.len()],
        };
        let e = self.embed(&mut tape, store, gt, idx, &BatchPlan::unweighted(classes));
        let y = self.regress(&mut tape, store, e);
        tape.value(y).data().to_vec()
    }

    /// Predicted classes, or `None` without a classifier.
    pub fn predict_classes(&self, store: &ParamStore, gt: &GraphTensors, idx: &OrderIndex) -> Option<Vec<u8>> {
        let mut tape = Tape::new();
        let z = self.classify(&mut tape, store, gt, idx)?;
        Some(argmax_classes(tape.value(z)))
    }
}

/// `mean|y − ŷ| + bce_weight · mean CE(softmax(z), y_c)` on the tape.
pub fn joint_loss(tape: &mut Tape, y_hat: Var, y: &[f64], logits: Option<Var>, y_c: &[u8], bce_weight: f64) -> Var {
    let n = y.len();
    let target = tape.constant(Tensor::matrix(n, 1, y.to_vec()));
    let diff = tape.sub(y_hat, target);
    let abs = tape.abs(diff);
    let mae = tape.mean(abs);
    let Some(z) = logits else {
        return mae;
    };
    assert_eq!(y_c.len(), n, "loss: {} classes for {n} labels", y_c.len());
    let logp = tape.log_softmax_rows(z);
    let onehot: Vec<f64> = y_c.iter().flat_map(|&c| if c == 0 { [1.0, 0.0] } else { [0.0, 1.0] }).collect();
    let onehot = tape.constant(Tensor::matrix(n, 2, onehot));
    let picked = tape.mul(logp, onehot);
    let total = tape.sum(picked);
    let ce = tape.scale(total, -bce_weight / n as f64);
    tape.add(mae, ce)
}

/// Plain-number version of [`joint_loss`].
pub fn loss_value(y_hat: &[f64], y: &[f64], logits: Option<&[[f64; 2]]>, y_c: &[u8], bce_weight: f64) -> f64 {
    let n = y.len() as f64;
    let mae = y.iter().zip(y_hat).map(|(a, b)| (a - b).abs()).sum::<f64>() / n;
    let ce = logits.map_or(0.0, |z| {
        z.iter()
            .zip(y_c)
            .map(|(row, &c)| {
                let m = row[0].max(row[1]);
                let lse = m + ((row[0] - m).exp() + (row[1] - m).exp()).ln();
                lse - row[c as usize]
            })
            .sum::<f64>()
            / n
    });
    mae + bce_weight * ce
}

/// Checkpoint companion: everything besides the weights needed to rebuild
/// the model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub config: DgmConfig,
    pub dims: InputDims,
}

impl ModelMeta {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests;
