//! Multi-seed variant ablations and single-parameter sweeps.
//!
//! Runs are sequential; each one trains with its own seed and evaluates
//! the best-validation parameters on the test split.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::{Shot, ShotSpec, Split};
use crate::metrics::{aligned, EvalReport, Overall, ShotMae};
use crate::model::{evaluate, train, DgmConfig, PreparedData, Variant};
use crate::{Error, Result};

/// Median with the mean of the middle pair for even lengths.
pub fn median(values: &[f64]) -> f64 {
    assert!(!values.is_empty(), "median of an empty list");
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedRun {
    pub seed: u64,
    pub best_epoch: Option<usize>,
    pub val_mae: f64,
    pub report: EvalReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedFailure {
    pub seed: u64,
    pub error: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VariantSummary {
    pub variant: Variant,
    /// Effective config of the first seed; later seeds differ only in `seed`.
    pub config: DgmConfig,
    pub runs: Vec<SeedRun>,
    pub failures: Vec<SeedFailure>,
    /// Per-metric medians over successful seeds; `None` when any seed
    /// failed.
    pub median: Option<EvalReport>,
}

impl VariantSummary {
    pub fn failed(&self) -> bool {
        !self.failures.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ablation {
    pub seeds: Vec<u64>,
    pub rows: Vec<VariantSummary>,
}

/// Medians of every scalar across reports of the same evaluation set.
pub fn median_report(reports: &[EvalReport], tag: &str) -> EvalReport {
    assert!(!reports.is_empty(), "median_report: no reports");
    let pick = |f: &dyn Fn(&EvalReport) -> f64| median(&reports.iter().map(f).collect::<Vec<_>>());
    let mut per_shot = BTreeMap::new();
    for shot in Shot::ALL {
        let maes: Vec<f64> = reports.iter().filter_map(|r| r.shot_mae(shot)).collect();
        if maes.len() == reports.len() {
            per_shot.insert(shot, ShotMae { mae: median(&maes), n: reports[0].per_shot[&shot].n });
        }
    }
    EvalReport {
        variant: tag.to_string(),
        n_orders: reports[0].n_orders,
        overall: Overall {
            mae: pick(&|r| r.overall.mae),
            mape: pick(&|r| r.overall.mape),
            ew: pick(&|r| r.overall.ew),
        },
        per_shot,
    }
}

impl Ablation {
    pub fn failed(&self) -> bool {
        self.rows.iter().any(VariantSummary::failed)
    }

    pub fn row(&self, variant: Variant) -> Option<&VariantSummary> {
        self.rows.iter().find(|r| r.variant == variant)
    }

    /// Variant with the highest median test MAE among completed rows.
    /// Ties go to the earlier row.
    pub fn worst(&self) -> Option<Variant> {
        self.rows
            .iter()
            .filter_map(|r| r.median.as_ref().map(|m| (r.variant, m.overall.mae)))
            .reduce(|best, r| if r.1.total_cmp(&best.1).is_gt() { r } else { best })
            .map(|(v, _)| v)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("ablation serializes")
    }

    /// One row per variant with median test metrics (MAPE in percent).
    pub fn table(&self) -> String {
        let header = ["variant", "seeds", "MAE", "MAPE%", "EW", "MAE high", "MAE medium", "MAE low", "status"];
        let rows: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|r| {
                let seeds = format!("{}/{}", r.runs.len(), r.runs.len() + r.failures.len());
                let Some(m) = &r.median else {
                    let mut row = vec![r.variant.to_string(), seeds];
                    row.extend(std::iter::repeat_n("-".to_string(), 6));
                    row.push("failed".into());
                    return row;
                };
                let cell = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| format!("{x:.3}"));
                vec![
                    r.variant.to_string(),
                    seeds,
                    cell(Some(m.overall.mae)),
                    cell(Some(100.0 * m.overall.mape)),
                    cell(Some(m.overall.ew)),
                    cell(m.shot_mae(Shot::High)),
                    cell(m.shot_mae(Shot::Medium)),
                    cell(m.shot_mae(Shot::Low)),
                    "ok".into(),
                ]
            })
            .collect();
        aligned(&header, &rows)
    }
}

fn run_seed(config: &DgmConfig, data: &PreparedData, split: &Split, shots: &ShotSpec) -> Result<SeedRun> {
    let out = train(config, data)?;
    let val_mae = out.best_epoch.map_or(f64::NAN, |e| out.log[e - 1].val_mae);
    let report = evaluate(&out.model, &out.best, data, &split.test, shots, config.variant.as_str())?;
    Ok(SeedRun { seed: config.seed, best_epoch: out.best_epoch, val_mae, report })
}

/// Trains and evaluates every variant under every seed. Failed runs are
/// recorded in their row rather than aborting the remaining runs.
pub fn ablate(
    base: &DgmConfig,
    split: &Split,
    shots: &ShotSpec,
    variants: &[Variant],
    seeds: &[u64],
) -> Result<Ablation> {
    let data = PreparedData::new(base, &split.train, &split.val)?;
    Ok(ablate_with(base, variants, seeds, |cfg| run_seed(cfg, &data, split, shots)))
}

pub(crate) fn ablate_with<F>(base: &DgmConfig, variants: &[Variant], seeds: &[u64], mut run: F) -> Ablation
where
    F: FnMut(&DgmConfig) -> Result<SeedRun>,
{
    let rows = variants
        .iter()
        .map(|&variant| {
            let mut runs = Vec::new();
            let mut failures = Vec::new();
            for &seed in seeds {
                let cfg = DgmConfig { variant, seed, ..base.clone() };
                match run(&cfg) {
                    Ok(r) => runs.push(r),
                    Err(e) => {
                        log::error!("{variant} seed {seed} failed: {e}");
                        failures.push(SeedFailure { seed, error: e.to_string() });
                    }
                }
            }
            let median = (failures.is_empty() && !runs.is_empty()).then(|| {
                let reports: Vec<EvalReport> = runs.iter().map(|r| r.report.clone()).collect();
                median_report(&reports, variant.as_str())
            });
            VariantSummary { variant, config: DgmConfig { variant, seed: seeds[0], ..base.clone() }, runs, failures, median }
        })
        .collect();
    Ablation { seeds: seeds.to_vec(), rows }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepParam {
    #[serde(rename = "d_O")]
    OrderDim,
    #[serde(rename = "t_c")]
    Threshold,
}

impl SweepParam {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepParam::OrderDim => "d_O",
            SweepParam::Threshold => "t_c",
        }
    }

    /// `base` with the swept parameter set to `value`.
    pub fn apply(self, base: &DgmConfig, value: f64) -> Result<DgmConfig> {
        let mut cfg = base.clone();
        match self {
            SweepParam::OrderDim => {
                if !(value >= 1.0 && value.fract() == 0.0) {
                    return Err(Error::Config(format!("d_O must be a positive integer, got {value}")));
                }
                cfg.d_o = value as usize;
            }
            SweepParam::Threshold => cfg.t_c = value,
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

impl fmt::Display for SweepParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SweepParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "d_O" | "d_o" | "d-o" => Ok(SweepParam::OrderDim),
            "t_c" | "t-c" => Ok(SweepParam::Threshold),
            _ => Err(Error::Config(format!("unknown sweep parameter `{s}` (expected d_O or t_c)"))),
        }
    }
}

/// Drops repeated values, keeping first occurrences. Returns the kept
/// values and the dropped duplicates.
pub fn dedup_values(values: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut kept: Vec<f64> = Vec::new();
    let mut dropped = Vec::new();
    for &v in values {
        if kept.contains(&v) {
            dropped.push(v);
        } else {
            kept.push(v);
        }
    }
    (kept, dropped)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: f64,
    pub best_epoch: Option<usize>,
    /// Validation MAE of the retained parameters.
    pub val_mae: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sweep {
    pub param: SweepParam,
    pub rows: Vec<SweepRow>,
}

impl Sweep {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("sweep serializes")
    }

    pub fn table(&self) -> String {
        let rows: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|r| {
                vec![
                    r.value.to_string(),
                    r.best_epoch.map_or_else(|| "-".into(), |e| e.to_string()),
                    format!("{:.3}", r.val_mae),
                ]
            })
            .collect();
        aligned(&[self.param.as_str(), "best epoch", "val MAE"], &rows)
    }
}

/// Trains once per distinct value and reports validation MAE. Duplicate
/// values are dropped with a warning.
pub fn sweep(base: &DgmConfig, split: &Split, param: SweepParam, values: &[f64]) -> Result<Sweep> {
    let (values, dropped) = dedup_values(values);
    if !dropped.is_empty() {
        log::warn!("duplicate {param} values ignored: {dropped:?}");
    }
    if values.is_empty() {
        return Err(Error::Config(format!("no {param} values to sweep")));
    }
    let configs = values.iter().map(|&v| param.apply(base, v)).collect::<Result<Vec<_>>>()?;
    let data = PreparedData::new(base, &split.train, &split.val)?;
    let rows = configs
        .iter()
        .zip(&values)
        .map(|(cfg, &value)| {
            let out = train(cfg, &data)?;
            let val_mae = out.best_epoch.map_or(f64::NAN, |e| out.log[e - 1].val_mae);
            Ok(SweepRow { value, best_epoch: out.best_epoch, val_mae })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Sweep { param, rows })
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;
    use crate::data::{generate, split_temporal, GeneratorSpec, SplitSpec};
    use crate::graphs::GraphConfig;

    #[test]
    fn median_examples() {
        assert_eq!(median(&[3.0]), 3.0);
        assert_eq!(median(&[5.0, 1.0, 3.0]), 3.0);
        assert_eq!(median(&[4.0, 1.0, 3.0, 2.0]), 2.5);
        assert_eq!(median(&[2.0, 9.0, 1.0, 7.0, 7.0]), 7.0);
    }

    proptest! {
        #[test]
        fn median_splits_the_sample(v in prop::collection::vec(-1e3f64..1e3, 1..40)) {
            let m = median(&v);
            let below = v.iter().filter(|&&x| x <= m).count();
            let above = v.iter().filter(|&&x| x >= m).count();
            prop_assert!(2 * below >= v.len() && 2 * above >= v.len());
        }
    }

    #[test]
    fn dedup_keeps_first_occurrences() {
        let (kept, dropped) = dedup_values(&[32.0, 64.0, 32.0, 128.0, 64.0]);
        assert_eq!(kept, [32.0, 64.0, 128.0]);
        assert_eq!(dropped, [32.0, 64.0]);
    }

    #[test]
    fn sweep_param_parsing_and_application() {
        assert_eq!("d_O".parse::<SweepParam>().unwrap(), SweepParam::OrderDim);
        assert_eq!("t_c".parse::<SweepParam>().unwrap(), SweepParam::Threshold);
        assert!("lr".parse::<SweepParam>().is_err());
        let base = DgmConfig::default();
        assert_eq!(SweepParam::OrderDim.apply(&base, 64.0).unwrap().d_o, 64);
        assert!(SweepParam::OrderDim.apply(&base, 62.0).is_err(), "not divisible by 4 heads");
        assert!(SweepParam::OrderDim.apply(&base, 32.5).is_err());
        assert_eq!(SweepParam::Threshold.apply(&base, 72.0).unwrap().t_c, 72.0);
    }

    fn fake_report(mae: f64, tag: &str) -> EvalReport {
        let y = [10.0, 20.0, 30.0];
        let p = [10.0 + mae, 20.0 - mae, 30.0 + mae];
        crate::metrics::report(&y, &p, &[Shot::High, Shot::High, Shot::Low], tag)
    }

    #[test]
    fn median_report_takes_metricwise_medians() {
        let reports: Vec<EvalReport> = [3.0, 1.0, 2.0, 10.0].iter().map(|&m| fake_report(m, "x")).collect();
        let m = median_report(&reports, "full");
        assert_eq!(m.overall.mae, 2.5);
        assert_eq!(m.shot_mae(Shot::High), Some(2.5));
        assert_eq!(m.per_shot[&Shot::Low].n, 1);
        assert_eq!(m.shot_mae(Shot::Medium), None);
        assert_eq!(m.variant, "full");
    }

    #[test]
    fn failed_runs_mark_their_row() {
        let base = DgmConfig::default();
        let ab = ablate_with(&base, &Variant::ALL, &[1, 2, 3], |cfg| {
            if cfg.variant == Variant::ImReg && cfg.seed == 2 {
                return Err(Error::Data("boom".into()));
            }
            Ok(SeedRun { seed: cfg.seed, best_epoch: Some(1), val_mae: 1.0, report: fake_report(cfg.seed as f64, "x") })
        });
        assert!(ab.failed());
        assert_eq!(ab.rows.len(), 5);
        let im = ab.row(Variant::ImReg).unwrap();
        assert!(im.median.is_none());
        assert_eq!(im.failures[0].seed, 2);
        assert_eq!(ab.row(Variant::Full).unwrap().median.as_ref().unwrap().overall.mae, 2.0);
        // Every completed row has the same median, so the first wins.
        assert_eq!(ab.worst(), Some(Variant::Full));
        let table = ab.table();
        assert_eq!(table.lines().count(), 6);
        assert!(table.lines().any(|l| l.starts_with("im-reg") && l.ends_with("failed")));
        assert_eq!(table.lines().filter(|l| l.ends_with("ok")).count(), 4);
    }

    fn small_split() -> Split {
        let spec = GeneratorSpec { n_orders: 600, n_routes: 80, n_merchants: 8, n_senders: 20, n_receivers: 30, ..GeneratorSpec::default() };
        split_temporal(&generate(&spec).unwrap(), &SplitSpec::default()).unwrap()
    }

    fn small_config() -> DgmConfig {
        DgmConfig {
            epochs: 2,
            d_o: 4,
            gnn_dim: 4,
            fusion_heads: 2,
            classifier_hidden: vec![4],
            dnn_widths: vec![8, 4],
            batch_size: 64,
            graph: GraphConfig { knn_k: 3, ..GraphConfig::default() },
            ..DgmConfig::default()
        }
    }

    #[test]
    fn small_ablation_and_sweep_run_end_to_end() {
        let split = small_split();
        let base = small_config();
        let ab = ablate(&base, &split, &ShotSpec::default(), &Variant::ALL, &[0, 1]).unwrap();
        assert!(!ab.failed());
        assert_eq!(ab.rows.iter().map(|r| r.variant).collect::<Vec<_>>(), Variant::ALL);
        for row in &ab.rows {
            let m = row.median.as_ref().unwrap();
            assert!(m.overall.mae.is_finite());
            assert_eq!(row.runs.len(), 2);
            // Logged configs differ from the base only by the variant.
            assert_eq!(DgmConfig { variant: base.variant, ..row.config.clone() }, DgmConfig { seed: 0, ..base.clone() });
        }
        let again = ablate(&base, &split, &ShotSpec::default(), &Variant::ALL, &[0, 1]).unwrap();
        assert_eq!(ab.to_json(), again.to_json());

        let sw = sweep(&base, &split, SweepParam::Threshold, &[72.0, 96.0, 72.0]).unwrap();
        assert_eq!(sw.rows.iter().map(|r| r.value).collect::<Vec<_>>(), [72.0, 96.0]);
        assert!(sw.rows.iter().all(|r| r.val_mae.is_finite()));
        assert_eq!(sw.table().lines().count(), 3);
    }
}
