use std::collections::BTreeMap;

use super::{mean_std, Edge, GraphConfig, GraphKind, Order, RelationGraph};

const OD_SEP: char = '\u{1f}';

pub(crate) fn od_id(sender: &str, receiver: &str) -> String {
    format!("{sender}{OD_SEP}{receiver}")
}

pub(crate) fn split_od_id(id: &str) -> (&str, &str) {
    id.split_once(OD_SEP).expect("OD node ids contain the separator")
}

/// `|origin_i − origin_j| + |dest_i − dest_j|`, Euclidean, in km.
pub fn od_distance(a: [f64; 4], b: [f64; 4]) -> f64 {
    ((a[0] - b[0]).hypot(a[1] - b[1])) + ((a[2] - b[2]).hypot(a[3] - b[3]))
}

struct OdNode {
    coords: [f64; 4],
    labels: Vec<f64>,
}

/// One node per distinct (sender, receiver) pair, connected to its `k`
/// nearest OD pairs, then symmetrically closed. Edge weight is the OD
/// distance. Ties are broken by node index, which follows lexicographic
/// (sender, receiver) order.
pub fn build_spatial(orders: &[Order], k: usize, config: &GraphConfig) -> RelationGraph {
    let mut groups: BTreeMap<(String, String), OdNode> = BTreeMap::new();
    for o in orders {
        let node = groups.entry(o.od_key()).or_insert_with(|| OdNode { coords: [0.0; 4], labels: Vec::new() });
        node.coords[0] += o.origin_x;
        node.coords[1] += o.origin_y;
        node.coords[2] += o.dest_x;
        node.coords[3] += o.dest_y;
        node.labels.push(o.delivery_hours);
    }
    for node in groups.values_mut() {
        let n = node.labels.len() as f64;
        node.coords.iter_mut().for_each(|c| *c /= n);
    }
    let nodes: Vec<((String, String), OdNode)> = groups.into_iter().collect();
    let n = nodes.len();

    let k = if n > 0 && k >= n {
        log::warn!("spatial graph: k = {k} >= {n} nodes, clamping to {}", n - 1);
        n - 1
    } else {
        k
    };

    let coords: Vec<[f64; 4]> = nodes.iter().map(|(_, v)| v.coords).collect();
    let nearest: Vec<Vec<(usize, f64)>> = crate::parallel::map_range(n, |i| {
        let mut cand: Vec<(usize, f64)> =
            (0..n).filter(|&j| j != i).map(|j| (j, od_distance(coords[i], coords[j]))).collect();
        cand.sort_by(|x, y| x.1.total_cmp(&y.1).then(x.0.cmp(&y.0)));
        cand.truncate(k);
        cand
    });
    let mut edges = Vec::new();
    for (i, list) in nearest.iter().enumerate() {
        for &(j, d) in list {
            let (a, b) = if i < j { (i, j) } else { (j, i) };
            edges.push(Edge { a, b, weight: Some(d) });
        }
    }

    let all_labels: Vec<f64> = orders.iter().map(|o| o.delivery_hours).collect();
    let (gmean, gstd) = mean_std(&all_labels);
    let gstd = if gstd > 0.0 { gstd } else { 1.0 };
    let g = config.region_grid.max(1);
    let cell = |x: f64, y: f64| {
        let cx = ((x / config.box_km * g as f64).floor().max(0.0) as usize).min(g - 1);
        let cy = ((y / config.box_km * g as f64).floor().max(0.0) as usize).min(g - 1);
        cy * g + cx
    };
    let rows: Vec<Vec<f64>> = nodes
        .iter()
        .map(|(_, node)| {
            let c = node.coords;
            let mut f: Vec<f64> = c.iter().map(|v| v / config.box_km).collect();
            let mut one_hot = vec![0.0; 2 * g * g];
            one_hot[cell(c[0], c[1])] = 1.0;
            one_hot[g * g + cell(c[2], c[3])] = 1.0;
            f.extend(one_hot);
            let (m, s) = mean_std(&node.labels);
            f.push((m - gmean) / gstd);
            f.push(s / gstd);
            f
        })
        .collect();
    let ids = nodes.iter().map(|((s, r), _)| od_id(s, r)).collect();
    RelationGraph::assemble(GraphKind::Spatial, ids, edges, rows)
}
