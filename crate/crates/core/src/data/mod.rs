//! Synthetic orders, CSV ingestion, temporal splits, shot regions, and
//! balanced resampling.

mod csvio;
mod generator;

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::graphs::Order;
use crate::{Error, Result};

pub use csvio::{load_csv, read_csv, save_csv, write_csv, LoadReport, Rejection, CSV_HEADER};
pub use generator::{fraction_above, generate, GeneratorSpec, DEFAULT_START_TS};

const DAY: i64 = 86_400;

/// Chronological split by payment day (UTC day boundaries, half-open).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSpec {
    pub train_days: u32,
    pub val_days: u32,
    pub test_days: u32,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec { train_days: 20, val_days: 4, test_days: 4 }
    }
}

impl SplitSpec {
    pub fn total_days(&self) -> u32 {
        self.train_days + self.val_days + self.test_days
    }
}

#[derive(Clone, Debug, Default)]
pub struct Split {
    pub train: Vec<Order>,
    pub val: Vec<Order>,
    pub test: Vec<Order>,
    /// Orders after the last requested day.
    pub dropped: usize,
}

fn day_of(ts: i64) -> i64 {
    ts.div_euclid(DAY)
}

/// Days are counted from the first order's UTC day; an order exactly at
/// midnight belongs to the day that starts there. Within each part orders
/// are sorted by `(payment_ts, order_id)`, so input order does not matter.
pub fn split_temporal(orders: &[Order], spec: &SplitSpec) -> Result<Split> {
    if spec.train_days == 0 || spec.val_days == 0 || spec.test_days == 0 {
        return Err(Error::Config(format!("split days must all be at least 1, got {spec:?}")));
    }
    let Some(first) = orders.iter().map(|o| day_of(o.payment_ts)).min() else {
        return Err(Error::Data("cannot split an empty order table".into()));
    };
    let last = orders.iter().map(|o| day_of(o.payment_ts)).max().unwrap_or(first);
    let covered = last - first + 1;
    let needed = i64::from(spec.total_days());
    if covered < needed {
        return Err(Error::Data(format!(
            "insufficient span: data covers {covered} days but the split needs {needed} ({} + {} + {})",
            spec.train_days, spec.val_days, spec.test_days
        )));
    }
    let mut sorted: Vec<&Order> = orders.iter().collect();
    sorted.sort_by(|a, b| (a.payment_ts, &a.order_id).cmp(&(b.payment_ts, &b.order_id)));
    let t_end = i64::from(spec.train_days);
    let v_end = t_end + i64::from(spec.val_days);
    let mut split = Split::default();
    for o in sorted {
        let d = day_of(o.payment_ts) - first;
        let part = if d < t_end {
            &mut split.train
        } else if d < v_end {
            &mut split.val
        } else if d < needed {
            &mut split.test
        } else {
            split.dropped += 1;
            continue;
        };
        part.push(o.clone());
    }
    if split.dropped > 0 {
        log::warn!("{} orders fall after the last split day and were dropped", split.dropped);
    }
    Ok(split)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Shot {
    High,
    Medium,
    Low,
}

impl Shot {
    pub const ALL: [Shot; 3] = [Shot::High, Shot::Medium, Shot::Low];

    pub fn as_str(self) -> &'static str {
        match self {
            Shot::High => "high",
            Shot::Medium => "medium",
            Shot::Low => "low",
        }
    }
}

/// Label-frequency regions: a bin is high-shot if it holds at least
/// `n_high` training labels and low-shot if at most `n_low`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ShotSpec {
    pub bin_hours: f64,
    pub n_high: usize,
    pub n_low: usize,
}

impl Default for ShotSpec {
    fn default() -> Self {
        ShotSpec { bin_hours: 12.0, n_high: 100, n_low: 20 }
    }
}

impl ShotSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.bin_hours > 0.0) || self.n_low < 1 || self.n_high <= self.n_low {
            return Err(Error::Config(format!("shot spec needs bin_hours > 0 and n_high > n_low >= 1, got {self:?}")));
        }
        Ok(())
    }

    pub fn bin(&self, y: f64) -> i64 {
        (y / self.bin_hours).floor() as i64
    }
}

fn bin_counts(labels: &[f64], spec: &ShotSpec) -> BTreeMap<i64, usize> {
    let mut counts = BTreeMap::new();
    for &y in labels {
        *counts.entry(spec.bin(y)).or_insert(0) += 1;
    }
    counts
}

pub fn shot_labels(train_labels: &[f64], eval_labels: &[f64], spec: &ShotSpec) -> Vec<Shot> {
    let counts = bin_counts(train_labels, spec);
    eval_labels
        .iter()
        .map(|&y| {
            let c = counts.get(&spec.bin(y)).copied().unwrap_or(0);
            if c >= spec.n_high {
                Shot::High
            } else if c <= spec.n_low {
                Shot::Low
            } else {
                Shot::Medium
            }
        })
        .collect()
}

/// Indices of a per-bin uniform subsample down to the smallest occupied
/// bin count, returned in ascending order.
pub fn balanced_indices(labels: &[f64], bin_hours: f64, seed: u64) -> Vec<usize> {
    let spec = ShotSpec { bin_hours, ..ShotSpec::default() };
    let mut bins: BTreeMap<i64, Vec<usize>> = BTreeMap::new();
    for (i, &y) in labels.iter().enumerate() {
        bins.entry(spec.bin(y)).or_default().push(i);
    }
    let Some(min) = bins.values().map(Vec::len).min() else {
        return Vec::new();
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(min * bins.len());
    for members in bins.values_mut() {
        members.shuffle(&mut rng);
        out.extend_from_slice(&members[..min]);
    }
    out.sort_unstable();
    out
}

pub fn balanced_resample(orders: &[Order], bin_hours: f64, seed: u64) -> Vec<Order> {
    let labels: Vec<f64> = orders.iter().map(|o| o.delivery_hours).collect();
    balanced_indices(&labels, bin_hours, seed).into_iter().map(|i| orders[i].clone()).collect()
}

pub fn labels(orders: &[Order]) -> Vec<f64> {
    orders.iter().map(|o| o.delivery_hours).collect()
}
