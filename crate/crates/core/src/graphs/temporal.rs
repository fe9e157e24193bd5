use std::f64::consts::PI;

use super::{Edge, GraphKind, RelationGraph};

pub const TEMPORAL_NODES: usize = 168;

/// Monday 1970-01-05 00:00:00 UTC.
const MONDAY_ANCHOR: i64 = 4 * 86_400;
const WEEK: i64 = 7 * 86_400;

/// Hour-of-week slot (0 = Monday 00:00–00:59) after applying `tz_offset`.
pub fn hour_of_week(ts: i64, tz_offset_secs: i64) -> usize {
    ((ts + tz_offset_secs - MONDAY_ANCHOR).rem_euclid(WEEK) / 3600) as usize
}

/// The 168-node hour-of-week graph: a ring over adjacent hours plus edges
/// between the same hour of day on different days.
///
/// Node features: one-hot hour-of-day (24), one-hot day-of-week (7), and
/// `1 + extra_harmonics` sin/cos pairs of the hour-of-week phase.
pub fn build_temporal(extra_harmonics: usize) -> RelationGraph {
    let n = TEMPORAL_NODES;
    let mut edges = Vec::new();
    let mut push = |i: usize, j: usize| {
        let (a, b) = if i < j { (i, j) } else { (j, i) };
        edges.push(Edge { a, b, weight: None });
    };
    for i in 0..n {
        push(i, (i + 1) % n);
        for day in 1..7 {
            push(i, (i + 24 * day) % n);
        }
    }
    let rows = (0..n)
        .map(|h| {
            let mut f = vec![0.0; 31];
            f[h % 24] = 1.0;
            f[24 + h / 24] = 1.0;
            for k in 1..=1 + extra_harmonics {
                let phase = 2.0 * PI * (k * h) as f64 / n as f64;
                f.push(phase.sin());
                f.push(phase.cos());
            }
            f
        })
        .collect();
    let ids = (0..n).map(|h| format!("how{h:03}")).collect();
    RelationGraph::assemble(GraphKind::Temporal, ids, edges, rows)
}
