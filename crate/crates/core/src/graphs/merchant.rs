use std::collections::BTreeMap;

use super::{mean_std, Edge, GraphConfig, GraphKind, Order, RelationGraph};

/// Normalized delivery-time histogram; values past the range land in the
/// last bin.
pub fn label_histogram(labels: &[f64], bin_hours: f64, max_hours: f64) -> Vec<f64> {
    let bins = (max_hours / bin_hours).ceil() as usize;
    let mut h = vec![0.0; bins];
    for &y in labels {
        let b = ((y / bin_hours).floor().max(0.0) as usize).min(bins - 1);
        h[b] += 1.0;
    }
    let total: f64 = h.iter().sum();
    if total > 0.0 {
        h.iter_mut().for_each(|v| *v /= total);
    }
    h
}

pub(crate) fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// One node per merchant; an unweighted edge joins two merchants whose
/// label histograms have cosine similarity `>= tau`.
///
/// Features: the histogram itself plus standardized label mean, label std
/// and log order count.
pub fn build_merchant(orders: &[Order], tau: f64, config: &GraphConfig) -> RelationGraph {
    let mut labels: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for o in orders {
        labels.entry(o.merchant_id.as_str()).or_default().push(o.delivery_hours);
    }
    let hists: Vec<Vec<f64>> =
        labels.values().map(|l| label_histogram(l, config.hist_bin_hours, config.hist_max_hours)).collect();
    let n = hists.len();
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if cosine(&hists[i], &hists[j]) >= tau {
                edges.push(Edge { a: i, b: j, weight: None });
            }
        }
    }
    let all: Vec<f64> = orders.iter().map(|o| o.delivery_hours).collect();
    let (gmean, gstd) = mean_std(&all);
    let gstd = if gstd > 0.0 { gstd } else { 1.0 };
    let max_count = labels.values().map(Vec::len).max().unwrap_or(1) as f64;
    let rows = labels
        .values()
        .zip(&hists)
        .map(|(l, h)| {
            let (m, s) = mean_std(l);
            let mut f = h.clone();
            f.push((m - gmean) / gstd);
            f.push(s / gstd);
            f.push((l.len() as f64).ln_1p() / max_count.ln_1p());
            f
        })
        .collect();
    let ids = labels.keys().map(|k| k.to_string()).collect();
    RelationGraph::assemble(GraphKind::Merchant, ids, edges, rows)
}
