//! Attribute relation graphs built from an order table.

mod merchant;
mod spatial;
mod temporal;

use std::collections::HashMap;
use std::rc::Rc;

use serde::{Deserialize, Serialize};

use crate::numerics::{EdgeIndex, SparseMatrix, Tensor};

pub use merchant::{build_merchant, label_histogram};
pub use spatial::{build_spatial, od_distance};
pub use temporal::{build_temporal, hour_of_week, TEMPORAL_NODES};

/// One shipment record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Order {
    pub order_id: String,
    pub merchant_id: String,
    pub sender_id: String,
    pub receiver_id: String,
    /// Epoch seconds.
    pub payment_ts: i64,
    pub origin_x: f64,
    pub origin_y: f64,
    pub dest_x: f64,
    pub dest_y: f64,
    /// Delivery time label in hours, strictly positive.
    pub delivery_hours: f64,
}

impl Order {
    pub fn od_key(&self) -> (String, String) {
        (self.sender_id.clone(), self.receiver_id.clone())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GraphKind {
    Spatial,
    Temporal,
    Merchant,
}

/// Undirected edge with `a < b`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Edge {
    pub a: usize,
    pub b: usize,
    pub weight: Option<f64>,
}

/// Node set, symmetric edge list, and initial features for one attribute.
///
/// The last node is always the fallback node: it has no edges and its
/// feature row is the mean of all other rows. Orders whose attribute value
/// was not seen when the graph was built map to it.
#[derive(Clone, Debug)]
pub struct RelationGraph {
    pub kind: GraphKind,
    pub node_ids: Vec<String>,
    pub edges: Vec<Edge>,
    pub features: Tensor,
}

pub const FALLBACK_ID: &str = "<fallback>";

impl RelationGraph {
    /// Appends the fallback node and assembles the graph.
    pub(crate) fn assemble(kind: GraphKind, mut node_ids: Vec<String>, mut edges: Vec<Edge>, rows: Vec<Vec<f64>>) -> Self {
        let dim = rows.first().map_or(0, Vec::len);
        let mut mean = vec![0.0; dim];
        for r in &rows {
            for (m, v) in mean.iter_mut().zip(r) {
                *m += v;
            }
        }
        if !rows.is_empty() {
            mean.iter_mut().for_each(|m| *m /= rows.len() as f64);
        }
        let mut all = rows;
        all.push(mean);
        node_ids.push(FALLBACK_ID.to_string());
        edges.sort_by_key(|e| (e.a, e.b));
        edges.dedup_by_key(|e| (e.a, e.b));
        RelationGraph { kind, node_ids, edges, features: Tensor::from_rows(&all) }
    }

    /// Node count including the fallback node.
    pub fn num_nodes(&self) -> usize {
        self.node_ids.len()
    }

    pub fn fallback(&self) -> usize {
        self.node_ids.len() - 1
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }

    pub fn is_weighted(&self) -> bool {
        self.edges.iter().any(|e| e.weight.is_some())
    }

    /// Sorted neighbor lists (no self entries).
    pub fn neighbors(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.num_nodes()];
        for e in &self.edges {
            adj[e.a].push(e.b);
            adj[e.b].push(e.a);
        }
        adj.iter_mut().for_each(|v| v.sort_unstable());
        adj
    }

    pub fn degree(&self, node: usize) -> usize {
        self.edges.iter().filter(|e| e.a == node || e.b == node).count()
    }

    /// Attention neighborhoods: each node's own index first (when
    /// `self_loops`), then its neighbors in ascending order.
    pub fn attention_edges(&self, self_loops: bool) -> EdgeIndex {
        let adj = self.neighbors();
        let mut offsets = Vec::with_capacity(adj.len() + 1);
        let mut targets = Vec::new();
        offsets.push(0);
        for (i, nbrs) in adj.iter().enumerate() {
            if self_loops {
                targets.push(i);
            }
            targets.extend_from_slice(nbrs);
            offsets.push(targets.len());
        }
        EdgeIndex { nodes: adj.len(), offsets, targets }
    }

    /// Per-attention-edge weights aligned with `attention_edges`; self
    /// edges get weight 0.
    pub fn attention_edge_weights(&self, self_loops: bool) -> Vec<f64> {
        let mut w: HashMap<(usize, usize), f64> = HashMap::new();
        for e in &self.edges {
            let v = e.weight.unwrap_or(0.0);
            w.insert((e.a, e.b), v);
            w.insert((e.b, e.a), v);
        }
        let idx = self.attention_edges(self_loops);
        let mut out = Vec::with_capacity(idx.num_edges());
        for i in 0..idx.nodes {
            for e in idx.offsets[i]..idx.offsets[i + 1] {
                let j = idx.targets[e];
                out.push(if i == j { 0.0 } else { w[&(i, j)] });
            }
        }
        out
    }

    /// `D̃^{-1/2} (A + I) D̃^{-1/2}` over the unweighted topology.
    pub fn normalized_adjacency(&self) -> SparseMatrix {
        let adj = self.neighbors();
        let n = adj.len();
        let deg: Vec<f64> = adj.iter().map(|v| (v.len() + 1) as f64).collect();
        let mut offsets = vec![0];
        let mut indices = Vec::new();
        let mut values = Vec::new();
        for i in 0..n {
            let mut row: Vec<usize> = adj[i].clone();
            row.push(i);
            row.sort_unstable();
            for j in row {
                indices.push(j);
                values.push(1.0 / (deg[i] * deg[j]).sqrt());
            }
            offsets.push(indices.len());
        }
        SparseMatrix { rows: n, cols: n, offsets, indices, values }
    }

    pub fn is_symmetric(&self) -> bool {
        self.edges.iter().all(|e| e.a < e.b)
    }
}

/// Construction knobs for the three graphs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GraphConfig {
    /// Nearest OD neighbors per spatial node.
    pub knn_k: usize,
    /// Cosine threshold for merchant edges.
    pub merchant_tau: f64,
    /// Side length of the coordinate box, km; coordinates are divided by it.
    pub box_km: f64,
    /// Region one-hot grid per axis for OD origin and destination.
    pub region_grid: usize,
    /// Extra sin/cos hour-of-week harmonics beyond the first.
    pub temporal_extra_harmonics: usize,
    /// Offset added to epoch seconds before taking hour-of-week.
    pub tz_offset_secs: i64,
    pub hist_bin_hours: f64,
    pub hist_max_hours: f64,
    /// Adds `-w_ij / mean(w)` to spatial attention logits.
    pub spatial_weight_bias: bool,
}

impl Default for GraphConfig {
    fn default() -> Self {
        GraphConfig {
            knn_k: 8,
            merchant_tau: 0.5,
            box_km: 500.0,
            region_grid: 3,
            temporal_extra_harmonics: 0,
            tz_offset_secs: 0,
            hist_bin_hours: 12.0,
            hist_max_hours: 360.0,
            spatial_weight_bias: false,
        }
    }
}

/// Per order: node indices into the spatial, temporal and merchant graphs.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct OrderIndex {
    pub od: Vec<usize>,
    pub t: Vec<usize>,
    pub m: Vec<usize>,
}

impl OrderIndex {
    pub fn len(&self) -> usize {
        self.od.len()
    }

    pub fn is_empty(&self) -> bool {
        self.od.is_empty()
    }

    /// Restriction to the given positions.
    pub fn select(&self, rows: &[usize]) -> OrderIndex {
        OrderIndex {
            od: rows.iter().map(|&r| self.od[r]).collect(),
            t: rows.iter().map(|&r| self.t[r]).collect(),
            m: rows.iter().map(|&r| self.m[r]).collect(),
        }
    }
}

/// The three relation graphs plus the lookups needed to index orders.
#[derive(Clone, Debug)]
pub struct AttributeGraphs {
    pub spatial: RelationGraph,
    pub temporal: RelationGraph,
    pub merchant: RelationGraph,
    pub config: GraphConfig,
    od_lookup: HashMap<(String, String), usize>,
    merchant_lookup: HashMap<String, usize>,
}

/// Constant per-graph structures shared by every forward pass.
#[derive(Clone, Debug)]
pub struct GraphTensors {
    pub spatial_features: Tensor,
    pub spatial_edges: Rc<EdgeIndex>,
    /// Additive attention-logit bias per spatial edge, if enabled.
    pub spatial_bias: Option<Tensor>,
    pub temporal_features: Tensor,
    pub temporal_adj: Rc<SparseMatrix>,
    pub merchant_features: Tensor,
    pub merchant_adj: Rc<SparseMatrix>,
}

impl AttributeGraphs {
    /// Builds all graphs from the (training) order table.
    pub fn build(orders: &[Order], config: &GraphConfig) -> crate::Result<Self> {
        if orders.is_empty() {
            return Err(crate::Error::Data("cannot build graphs from an empty order table".into()));
        }
        let spatial = build_spatial(orders, config.knn_k, config);
        let temporal = build_temporal(config.temporal_extra_harmonics);
        let merchant = build_merchant(orders, config.merchant_tau, config);
        let mut od_lookup = HashMap::new();
        for (i, id) in spatial.node_ids[..spatial.fallback()].iter().enumerate() {
            let (s, r) = spatial::split_od_id(id);
            od_lookup.insert((s.to_string(), r.to_string()), i);
        }
        let merchant_lookup = merchant.node_ids[..merchant.fallback()]
            .iter()
            .enumerate()
            .map(|(i, id)| (id.clone(), i))
            .collect();
        Ok(AttributeGraphs { spatial, temporal, merchant, config: config.clone(), od_lookup, merchant_lookup })
    }

    /// Maps each order to its three attribute nodes; unseen OD pairs and
    /// merchants map to the fallback nodes.
    pub fn index_orders(&self, orders: &[Order]) -> OrderIndex {
        let mut idx = OrderIndex::default();
        for o in orders {
            let od = self.od_lookup.get(&o.od_key()).copied().unwrap_or(self.spatial.fallback());
            let m = self.merchant_lookup.get(&o.merchant_id).copied().unwrap_or(self.merchant.fallback());
            idx.od.push(od);
            idx.t.push(hour_of_week(o.payment_ts, self.config.tz_offset_secs));
            idx.m.push(m);
        }
        idx
    }

    pub fn tensors(&self, self_loops: bool) -> GraphTensors {
        let spatial_bias = self.config.spatial_weight_bias.then(|| {
            let w = self.spatial.attention_edge_weights(self_loops);
            let positive: Vec<f64> = self.spatial.edges.iter().filter_map(|e| e.weight).collect();
            let mean = if positive.is_empty() { 0.0 } else { positive.iter().sum::<f64>() / positive.len() as f64 };
            let bias: Vec<f64> = w.iter().map(|&x| if mean > 0.0 { -x / mean } else { 0.0 }).collect();
            Tensor::matrix(bias.len(), 1, bias)
        });
        GraphTensors {
            spatial_features: self.spatial.features.clone(),
            spatial_edges: Rc::new(self.spatial.attention_edges(self_loops)),
            spatial_bias,
            temporal_features: self.temporal.features.clone(),
            temporal_adj: Rc::new(self.temporal.normalized_adjacency()),
            merchant_features: self.merchant.features.clone(),
            merchant_adj: Rc::new(self.merchant.normalized_adjacency()),
        }
    }
}

/// Mean and population standard deviation.
pub(crate) fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}
