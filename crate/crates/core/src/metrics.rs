//! MAE, MAPE, window of error, and per-shot reports.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::data::Shot;

fn check_lengths(y: &[f64], y_hat: &[f64], what: &str) {
    assert_eq!(y.len(), y_hat.len(), "{what}: length mismatch ({} labels, {} predictions)", y.len(), y_hat.len());
    assert!(!y.is_empty(), "{what}: empty input");
}

/// Neumaier-compensated running sum.
#[derive(Default)]
struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        self.carry += if self.sum.abs() >= x.abs() { (self.sum - t) + x } else { (x - t) + self.sum };
        self.sum = t;
    }

    /// Adds `num / den` together with the rounding residual of the
    /// division, recovered exactly by a fused multiply-add.
    fn add_ratio(&mut self, num: f64, den: f64) {
        let q = num / den;
        self.add(q);
        if q.is_finite() {
            self.add((-q).mul_add(den, num) / den);
        }
    }

    fn total(&self) -> f64 {
        self.sum + self.carry
    }
}

/// Means are accumulated with compensated summation, so small hand
/// examples come out as the double nearest the exact value.
pub fn mae(y: &[f64], y_hat: &[f64]) -> f64 {
    check_lengths(y, y_hat, "mae");
    let mut acc = CompensatedSum::default();
    y.iter().zip(y_hat).for_each(|(a, b)| acc.add((a - b).abs()));
    acc.total() / y.len() as f64
}

/// Mean relative error as a fraction (0.1 = 10%).
pub fn mape(y: &[f64], y_hat: &[f64]) -> f64 {
    check_lengths(y, y_hat, "mape");
    if let Some(bad) = y.iter().find(|&&v| !(v > 0.0)) {
        panic!("mape: labels must be positive, got {bad}");
    }
    let mut acc = CompensatedSum::default();
    y.iter().zip(y_hat).for_each(|(a, b)| acc.add_ratio((a - b).abs(), *a));
    acc.total() / y.len() as f64
}

/// Smallest `w` with `(1/N) Σ H(w − |y − ŷ|) ≥ p`, `H(0) = 1`: the
/// `⌈pN⌉`-th smallest absolute error.
pub fn ew(y: &[f64], y_hat: &[f64], p: f64) -> f64 {
    check_lengths(y, y_hat, "ew");
    assert!(p > 0.0 && p <= 1.0, "ew: p must be in (0, 1], got {p}");
    let mut errs: Vec<f64> = y.iter().zip(y_hat).map(|(a, b)| (a - b).abs()).collect();
    errs.sort_by(f64::total_cmp);
    let n = errs.len();
    // Guard against p·N landing a rounding error above an integer.
    let k = ((p * n as f64) - 1e-9).ceil().max(1.0) as usize;
    errs[k.min(n) - 1]
}

pub const DEFAULT_EW_P: f64 = 0.9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Overall {
    pub mae: f64,
    pub mape: f64,
    pub ew: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShotMae {
    pub mae: f64,
    pub n: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub variant: String,
    pub n_orders: usize,
    pub overall: Overall,
    /// Shot classes with no orders are absent.
    pub per_shot: BTreeMap<Shot, ShotMae>,
}

pub fn report(y: &[f64], y_hat: &[f64], shots: &[Shot], variant: &str) -> EvalReport {
    check_lengths(y, y_hat, "report");
    assert_eq!(shots.len(), y.len(), "report: {} shot labels for {} orders", shots.len(), y.len());
    let mut per_shot = BTreeMap::new();
    for shot in Shot::ALL {
        let (ys, ps): (Vec<f64>, Vec<f64>) =
            (0..y.len()).filter(|&i| shots[i] == shot).map(|i| (y[i], y_hat[i])).unzip();
        if !ys.is_empty() {
            per_shot.insert(shot, ShotMae { mae: mae(&ys, &ps), n: ys.len() });
        }
    }
    EvalReport {
        variant: variant.to_string(),
        n_orders: y.len(),
        overall: Overall { mae: mae(y, y_hat), mape: mape(y, y_hat), ew: ew(y, y_hat, DEFAULT_EW_P) },
        per_shot,
    }
}

impl EvalReport {
    pub fn shot_mae(&self, shot: Shot) -> Option<f64> {
        self.per_shot.get(&shot).map(|s| s.mae)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.3}"))
}

/// Aligned plain-text table, one row per report. MAPE is shown in percent.
pub fn render_table(reports: &[EvalReport]) -> String {
    let header = ["variant", "n", "MAE", "MAPE%", "EW", "MAE high", "MAE medium", "MAE low"];
    let rows: Vec<Vec<String>> = reports
        .iter()
        .map(|r| {
            vec![
                r.variant.clone(),
                r.n_orders.to_string(),
                cell(Some(r.overall.mae)),
                cell(Some(100.0 * r.overall.mape)),
                cell(Some(r.overall.ew)),
                cell(r.shot_mae(Shot::High)),
                cell(r.shot_mae(Shot::Medium)),
                cell(r.shot_mae(Shot::Low)),
            ]
        })
        .collect();
    aligned(&header, &rows)
}

/// Left-aligns the first column and right-aligns the rest.
pub fn aligned(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for row in rows {
        for (w, c) in widths.iter_mut().zip(row) {
            *w = (*w).max(c.chars().count());
        }
    }
    let mut out = String::new();
    let mut line = |cells: Vec<&str>| {
        let parts: Vec<String> = cells
            .iter()
            .enumerate()
            .map(|(i, c)| if i == 0 { format!("{c:<w$}", w = widths[i]) } else { format!("{c:>w$}", w = widths[i]) })
            .collect();
        let _ = writeln!(out, "{}", parts.join("  ").trim_end());
    };
    line(header.to_vec());
    for row in rows {
        line(row.iter().map(String::as_str).collect());
    }
    out
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;
    use rand::Rng;

    use super::*;
    use crate::testutil::rng;

    #[test]
    fn hand_examples() {
        assert_eq!(mae(&[10.0, 20.0], &[10.0, 20.0]), 0.0);
        assert_eq!(mae(&[10.0, 20.0], &[12.0, 16.0]), 3.0);
        assert_eq!(mape(&[100.0], &[90.0]), 0.1);
        // Naive summation gives 0.15000000000000002 here.
        assert_eq!(mape(&[50.0, 100.0], &[60.0, 90.0]), 0.15);
        assert_eq!(mape(&[30.0, 30.0, 30.0], &[33.0, 27.0, 36.0]), 2.0 / 15.0);
        let y: Vec<f64> = (1..=10).map(f64::from).collect();
        assert_eq!(ew(&y, &[0.0; 10], 0.9), 9.0);
        assert_eq!(ew(&y, &[0.0; 10], 1.0), 10.0);
        assert_eq!(ew(&[3.0; 7], &[1.0; 7], 0.37), 2.0);
    }

    #[test]
    #[should_panic(expected = "length mismatch")]
    fn mae_length_mismatch() {
        mae(&[1.0], &[1.0, 2.0]);
    }

    #[test]
    #[should_panic(expected = "labels must be positive")]
    fn mape_rejects_nonpositive_labels() {
        mape(&[0.0], &[1.0]);
    }

    #[test]
    fn ew_matches_heaviside_search() {
        // Direct search over candidate windows against the Heaviside sum.
        let mut r = rng(31);
        for _ in 0..1000 {
            let n = r.random_range(1..60);
            let y: Vec<f64> = (0..n).map(|_| r.random_range(1.0..200.0)).collect();
            let y_hat: Vec<f64> = (0..n).map(|_| r.random_range(0.0..200.0)).collect();
            let p = [0.5, 0.9, 0.95, 1.0][r.random_range(0..4)];
            let errs: Vec<f64> = y.iter().zip(&y_hat).map(|(a, b)| (a - b).abs()).collect();
            let want = errs
                .iter()
                .copied()
                .filter(|&w| errs.iter().filter(|&&e| e <= w).count() as f64 / n as f64 >= p)
                .fold(f64::INFINITY, f64::min);
            assert_eq!(ew(&y, &y_hat, p), want);
        }
    }

    #[test]
    fn report_examples() {
        let y = [10.0, 20.0, 40.0, 80.0];
        let p = [12.0, 16.0, 40.0, 60.0];
        let r = report(&y, &p, &[Shot::High; 4], "full");
        assert_eq!(r.per_shot.len(), 1);
        assert_eq!(r.shot_mae(Shot::High), Some(r.overall.mae));

        let shots = [Shot::High, Shot::High, Shot::Low, Shot::Low];
        let r = report(&y, &p, &shots, "full");
        assert_eq!(r.shot_mae(Shot::High), Some(3.0));
        assert_eq!(r.shot_mae(Shot::Low), Some(10.0));
        assert_eq!(r.shot_mae(Shot::Medium), None);
        assert_eq!(r.per_shot.values().map(|s| s.n).sum::<usize>(), 4);
        let json = r.to_json();
        let back: EvalReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, r);
        assert!(json.contains("\"low\""));
        let table = render_table(&[r]);
        assert!(table.lines().next().unwrap().starts_with("variant"));
        assert!(table.contains("  3.000"));
        assert!(table.contains('-'));
    }

    proptest! {
        #[test]
        fn metric_properties(rows in prop::collection::vec((1.0f64..300.0, 0.0f64..300.0, 0usize..3), 1..80), c in 0.1f64..10.0) {
            let y: Vec<f64> = rows.iter().map(|r| r.0).collect();
            let p: Vec<f64> = rows.iter().map(|r| r.1).collect();
            let shots: Vec<Shot> = rows.iter().map(|r| Shot::ALL[r.2]).collect();
            let m = mae(&y, &p);
            prop_assert!(m <= ew(&y, &p, 1.0));
            let mut last = 0.0;
            for q in [0.1, 0.3, 0.5, 0.9, 0.99, 1.0] {
                let e = ew(&y, &p, q);
                prop_assert!(e >= last);
                last = e;
            }
            let ys: Vec<f64> = y.iter().map(|v| v * c).collect();
            let ps: Vec<f64> = p.iter().map(|v| v * c).collect();
            prop_assert!((mae(&ys, &ps) - c * m).abs() < 1e-9 * (1.0 + c * m));
            let r = report(&y, &p, &shots, "x");
            let weighted: f64 = r.per_shot.values().map(|s| s.mae * s.n as f64).sum::<f64>() / y.len() as f64;
            prop_assert!((weighted - r.overall.mae).abs() < 1e-9);
            prop_assert_eq!(r.per_shot.values().map(|s| s.n).sum::<usize>(), r.n_orders);
        }
    }
}
