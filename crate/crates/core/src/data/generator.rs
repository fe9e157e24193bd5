use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Normal, Pareto, Zipf};
use serde::{Deserialize, Serialize};

use crate::graphs::{hour_of_week, Order};
use crate::{Error, Result};

/// Monday 2023-01-02 00:00 UTC.
pub const DEFAULT_START_TS: i64 = 1_672_617_600;

/// Synthetic order generator.
///
/// Each label is a base draw (lognormal bulk with probability `1 − p`,
/// truncated Pareto tail with probability `p`) plus additive merchant,
/// route and hour-of-week shifts, clamped at 1 h. The per-order tail
/// probability `p` is `tail_weight` modulated by merchant and route
/// multipliers (lognormal with log-sd `tail_heterogeneity`, normalized to
/// mean 1), so tail membership is partly predictable from the attributes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorSpec {
    pub seed: u64,
    pub n_orders: usize,
    pub n_merchants: usize,
    pub n_senders: usize,
    pub n_receivers: usize,
    /// Candidate OD routes; orders pick them by a Zipf popularity law.
    pub n_routes: usize,
    pub route_zipf_exponent: f64,
    pub days: u32,
    pub start_ts: i64,
    pub box_km: f64,
    /// Log-space mean and sd of the bulk lognormal.
    pub bulk_mu: f64,
    pub bulk_sigma: f64,
    pub tail_xmin: f64,
    pub tail_alpha: f64,
    /// Tail draws above this are redrawn.
    pub tail_max: f64,
    /// Mixture weight ρ of the tail component.
    pub tail_weight: f64,
    pub tail_heterogeneity: f64,
    pub merchant_effect_sd: f64,
    pub route_effect_sd: f64,
    /// Hours per km of OD distance above the mean distance.
    pub distance_effect: f64,
    /// Amplitude of the daily payment-hour cycle.
    pub hour_effect_amp: f64,
    /// Extra hours for weekend payments.
    pub weekend_effect: f64,
}

impl Default for GeneratorSpec {
    fn default() -> Self {
        GeneratorSpec {
            seed: 7,
            n_orders: 10_000,
            n_merchants: 60,
            n_senders: 150,
            n_receivers: 400,
            n_routes: 1500,
            route_zipf_exponent: 0.8,
            days: 28,
            start_ts: DEFAULT_START_TS,
            box_km: 500.0,
            bulk_mu: 50f64.ln(),
            bulk_sigma: 0.2,
            tail_xmin: 100.0,
            tail_alpha: 1.7,
            tail_max: 480.0,
            tail_weight: 0.1,
            tail_heterogeneity: 1.0,
            merchant_effect_sd: 6.0,
            route_effect_sd: 3.0,
            distance_effect: 0.03,
            hour_effect_amp: 4.0,
            weekend_effect: 6.0,
        }
    }
}

impl GeneratorSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if !(0.0..1.0).contains(&self.tail_weight) {
            return bad(format!("tail_weight must be in [0, 1), got {}", self.tail_weight));
        }
        for (name, v) in [
            ("bulk_sigma", self.bulk_sigma),
            ("tail_xmin", self.tail_xmin),
            ("tail_alpha", self.tail_alpha),
            ("box_km", self.box_km),
            ("route_zipf_exponent", self.route_zipf_exponent),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        if self.tail_max <= self.tail_xmin {
            return bad(format!("tail_max {} must exceed tail_xmin {}", self.tail_max, self.tail_xmin));
        }
        for (name, v) in [
            ("n_merchants", self.n_merchants),
            ("n_senders", self.n_senders),
            ("n_receivers", self.n_receivers),
            ("n_routes", self.n_routes),
            ("days", self.days as usize),
        ] {
            if v == 0 {
                return bad(format!("{name} must be at least 1"));
            }
        }
        for (name, v) in [
            ("tail_heterogeneity", self.tail_heterogeneity),
            ("merchant_effect_sd", self.merchant_effect_sd),
            ("route_effect_sd", self.route_effect_sd),
        ] {
            if !(v >= 0.0) {
                return bad(format!("{name} must be nonnegative, got {v}"));
            }
        }
        Ok(())
    }
}

fn unit_mean_multipliers(rng: &mut ChaCha8Rng, n: usize, log_sd: f64) -> Vec<f64> {
    if log_sd == 0.0 {
        return vec![1.0; n];
    }
    let d = Normal::new(0.0, log_sd).expect("finite sd");
    let raw: Vec<f64> = (0..n).map(|_| d.sample(rng).exp()).collect();
    let mean = raw.iter().sum::<f64>() / n as f64;
    raw.into_iter().map(|x| x / mean).collect()
}

fn normal_effects(rng: &mut ChaCha8Rng, n: usize, sd: f64) -> Vec<f64> {
    if sd == 0.0 {
        return vec![0.0; n];
    }
    let d = Normal::new(0.0, sd).expect("finite sd");
    (0..n).map(|_| d.sample(rng)).collect()
}

struct Route {
    sender: usize,
    receiver: usize,
    effect: f64,
    tail_mult: f64,
}

/// Deterministic in `spec.seed`. Orders come out sorted by payment time
/// with ids assigned in that order.
pub fn generate(spec: &GeneratorSpec) -> Result<Vec<Order>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let b = spec.box_km;
    let senders: Vec<(f64, f64)> =
        (0..spec.n_senders).map(|_| (rng.random_range(0.0..b), rng.random_range(0.0..b))).collect();
    let receivers: Vec<(f64, f64)> =
        (0..spec.n_receivers).map(|_| (rng.random_range(0.0..b), rng.random_range(0.0..b))).collect();
    let sender_merchant: Vec<usize> = (0..spec.n_senders).map(|_| rng.random_range(0..spec.n_merchants)).collect();
    let merchant_effect = normal_effects(&mut rng, spec.n_merchants, spec.merchant_effect_sd);
    let merchant_tail = unit_mean_multipliers(&mut rng, spec.n_merchants, spec.tail_heterogeneity);

    let pairs: Vec<(usize, usize)> = (0..spec.n_routes)
        .map(|_| (rng.random_range(0..spec.n_senders), rng.random_range(0..spec.n_receivers)))
        .collect();
    let dist = |s: usize, r: usize| {
        let (a, c) = (senders[s], receivers[r]);
        ((a.0 - c.0).powi(2) + (a.1 - c.1).powi(2)).sqrt()
    };
    let mean_dist = pairs.iter().map(|&(s, r)| dist(s, r)).sum::<f64>() / pairs.len() as f64;
    let route_noise = normal_effects(&mut rng, spec.n_routes, spec.route_effect_sd);
    let route_tail = unit_mean_multipliers(&mut rng, spec.n_routes, spec.tail_heterogeneity);
    let routes: Vec<Route> = pairs
        .iter()
        .enumerate()
        .map(|(i, &(s, r))| Route {
            sender: s,
            receiver: r,
            effect: spec.distance_effect * (dist(s, r) - mean_dist) + route_noise[i],
            tail_mult: route_tail[i],
        })
        .collect();
    // Popularity rank -> route, so the most popular routes are random ones.
    let mut rank: Vec<usize> = (0..spec.n_routes).collect();
    rank.shuffle(&mut rng);

    let zipf = Zipf::new(spec.n_routes as f64, spec.route_zipf_exponent)
        .map_err(|e| Error::Config(format!("route popularity: {e}")))?;
    let bulk = LogNormal::new(spec.bulk_mu, spec.bulk_sigma).map_err(|e| Error::Config(format!("bulk: {e}")))?;
    let tail = Pareto::new(spec.tail_xmin, spec.tail_alpha).map_err(|e| Error::Config(format!("tail: {e}")))?;
    let span = i64::from(spec.days) * 86_400;

    let mut rows: Vec<(i64, usize, f64)> = Vec::with_capacity(spec.n_orders);
    for _ in 0..spec.n_orders {
        let route_idx = rank[zipf.sample(&mut rng) as usize - 1];
        let route = &routes[route_idx];
        let merchant = sender_merchant[route.sender];
        let ts = spec.start_ts + rng.random_range(0..span);
        let p_tail = (spec.tail_weight * merchant_tail[merchant] * route.tail_mult).min(0.95);
        let base = if rng.random::<f64>() < p_tail {
            loop {
                let x: f64 = tail.sample(&mut rng);
                if x <= spec.tail_max {
                    break x;
                }
            }
        } else {
            bulk.sample(&mut rng)
        };
        let how = hour_of_week(ts, 0);
        let hour_of_day = (how % 24) as f64;
        let weekend = if how >= 5 * 24 { spec.weekend_effect } else { 0.0 };
        let hour_effect = spec.hour_effect_amp * (2.0 * PI * hour_of_day / 24.0).sin() + weekend;
        let y = (base + merchant_effect[merchant] + route.effect + hour_effect).max(1.0);
        rows.push((ts, route_idx, y));
    }
    rows.sort_by_key(|r| r.0);

    Ok(rows
        .into_iter()
        .enumerate()
        .map(|(i, (ts, route_idx, y))| {
            let route = &routes[route_idx];
            let (o, d) = (senders[route.sender], receivers[route.receiver]);
            Order {
                order_id: format!("o{i:06}"),
                merchant_id: format!("m{:03}", sender_merchant[route.sender]),
                sender_id: format!("s{:04}", route.sender),
                receiver_id: format!("r{:04}", route.receiver),
                payment_ts: ts,
                origin_x: o.0,
                origin_y: o.1,
                dest_x: d.0,
                dest_y: d.1,
                delivery_hours: y,
            }
        })
        .collect())
}

/// Fraction of labels strictly above `threshold` hours.
pub fn fraction_above(orders: &[Order], threshold: f64) -> f64 {
    if orders.is_empty() {
        return 0.0;
    }
    orders.iter().filter(|o| o.delivery_hours > threshold).count() as f64 / orders.len() as f64
}
