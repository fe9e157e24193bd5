//! Gaussian kernel density over tail labels and square-inverse re-weighting
//! of tail order embeddings.

use std::f64::consts::{PI, SQRT_2};

use serde::{Deserialize, Serialize};

use crate::numerics::{Tape, Tensor, Var};
use crate::{Error, Result};

/// Smallest bandwidth Silverman's rule may return, in hours.
pub const MIN_BANDWIDTH: f64 = 0.5;
/// Densities below this are clamped before inversion.
pub const DENSITY_FLOOR: f64 = 1e-12;
/// The grid extends this many bandwidths past the label range.
pub const GRID_MARGIN_SIGMAS: f64 = 6.0;

/// Kernel density `p̃(y') = (1/n) Σ_i N(y'; y_i, σ²)`.
///
/// `grid`/`density` hold the density averaged over 1 h bins centred on the
/// grid points (so `Σ density · bin_width` is 1 up to the mass beyond the
/// margin). [`LabelDensity::at`] evaluates the kernel sum exactly.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LabelDensity {
    pub labels: Vec<f64>,
    pub bandwidth: f64,
    pub bin_width: f64,
    pub grid: Vec<f64>,
    pub density: Vec<f64>,
}

/// `1.06 · std · n^{-1/5}`, floored at [`MIN_BANDWIDTH`].
pub fn silverman_bandwidth(labels: &[f64]) -> f64 {
    let n = labels.len() as f64;
    if labels.len() < 2 {
        return MIN_BANDWIDTH;
    }
    let mean = labels.iter().sum::<f64>() / n;
    let std = (labels.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    (1.06 * std * n.powf(-0.2)).max(MIN_BANDWIDTH)
}

fn normal_cdf(z: f64) -> f64 {
    0.5 * (1.0 + libm::erf(z / SQRT_2))
}

/// Fits the density. `bandwidth = None` selects Silverman's rule.
pub fn estimate_density(tail_labels: &[f64], bandwidth: Option<f64>) -> Result<LabelDensity> {
    if tail_labels.is_empty() {
        return Err(Error::EmptyTail);
    }
    if let Some(bad) = tail_labels.iter().find(|y| !y.is_finite()) {
        return Err(Error::Data(format!("non-finite tail label {bad}")));
    }
    let bandwidth = bandwidth.unwrap_or_else(|| silverman_bandwidth(tail_labels));
    if !(bandwidth > 0.0 && bandwidth.is_finite()) {
        return Err(Error::Config(format!("KDE bandwidth must be positive, got {bandwidth}")));
    }
    let bin_width = 1.0;
    let lo = tail_labels.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = tail_labels.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let start = (lo - GRID_MARGIN_SIGMAS * bandwidth).floor();
    let end = (hi + GRID_MARGIN_SIGMAS * bandwidth).ceil();
    let steps = ((end - start) / bin_width).round() as usize;
    let grid: Vec<f64> = (0..=steps).map(|i| start + i as f64 * bin_width).collect();
    let n = tail_labels.len() as f64;
    let density = crate::parallel::map(&grid, |&c| {
        let (a, b) = (c - 0.5 * bin_width, c + 0.5 * bin_width);
        let mass: f64 = tail_labels
            .iter()
            .map(|&y| normal_cdf((b - y) / bandwidth) - normal_cdf((a - y) / bandwidth))
            .sum();
        mass / (n * bin_width)
    });
    Ok(LabelDensity { labels: tail_labels.to_vec(), bandwidth, bin_width, grid, density })
}

impl LabelDensity {
    /// Exact kernel sum at `y`.
    pub fn at(&self, y: f64) -> f64 {
        let norm = 1.0 / (self.bandwidth * (2.0 * PI).sqrt() * self.labels.len() as f64);
        let s: f64 = self
            .labels
            .iter()
            .map(|&yi| {
                let z = (y - yi) / self.bandwidth;
                (-0.5 * z * z).exp()
            })
            .sum();
        s * norm
    }

    pub fn range(&self) -> (f64, f64) {
        (self.grid[0], self.grid[self.grid.len() - 1])
    }

    /// `Σ density · bin_width` over the grid.
    pub fn total_mass(&self) -> f64 {
        self.density.iter().sum::<f64>() * self.bin_width
    }
}

/// Per-sample tail weights plus bookkeeping.
#[derive(Clone, Debug, PartialEq)]
pub struct TailWeights {
    pub weights: Vec<f64>,
    /// `p̃(y)^{-1/2}` before normalization.
    pub raw: Vec<f64>,
    /// Number of densities that fell below [`DENSITY_FLOOR`].
    pub clamped: usize,
}

/// `w = p̃(y)^{-1/2}`, rescaled to mean 1 when `normalize` is set. Labels
/// outside the grid are clamped to its nearest end.
pub fn compute_weights(density: &LabelDensity, labels: &[f64], normalize: bool) -> TailWeights {
    let (lo, hi) = density.range();
    let mut clamped = 0;
    let raw: Vec<f64> = labels
        .iter()
        .map(|&y| {
            let mut p = density.at(y.clamp(lo, hi));
            if !(p >= DENSITY_FLOOR) {
                clamped += 1;
                p = DENSITY_FLOOR;
            }
            p.powf(-0.5)
        })
        .collect();
    if clamped > 0 {
        log::warn!("{clamped} tail densities below {DENSITY_FLOOR:e} were clamped");
    }
    let weights = if normalize && !raw.is_empty() {
        let mean = raw.iter().sum::<f64>() / raw.len() as f64;
        raw.iter().map(|w| w / mean).collect()
    } else {
        raw.clone()
    };
    TailWeights { weights, raw, clamped }
}

/// Scales row `i` of `e_tail` by `weights[i]`; the weights are constants.
pub fn reweight_embeddings(tape: &mut Tape, e_tail: Var, weights: &[f64]) -> Var {
    let rows = tape.value(e_tail).rows();
    assert_eq!(rows, weights.len(), "reweight: {rows} rows but {} weights", weights.len());
    let w = tape.constant(Tensor::matrix(rows, 1, weights.to_vec()));
    tape.scale_rows(e_tail, w)
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;
    use crate::testutil::{rand_tensor, rng};

    const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

    #[test]
    fn single_label_peak() {
        let d = estimate_density(&[100.0], Some(1.0)).unwrap();
        assert!((d.at(100.0) - INV_SQRT_2PI).abs() < 1e-15);
        assert!((d.at(100.0) - 0.3989).abs() < 1e-4);
    }

    #[test]
    fn two_cluster_density_and_weight_ratio() {
        let labels = [100.0, 100.0, 100.0, 200.0];
        let d = estimate_density(&labels, Some(1.0)).unwrap();
        assert!((d.at(100.0) - 0.75 * INV_SQRT_2PI).abs() < 1e-12);
        assert!((d.at(200.0) - 0.25 * INV_SQRT_2PI).abs() < 1e-12);
        let w = compute_weights(&d, &[100.0, 200.0], false);
        assert!((w.raw[1] / w.raw[0] - 3f64.sqrt()).abs() < 1e-9);
        assert_eq!(w.clamped, 0);
    }

    #[test]
    fn grid_mass_is_one() {
        for (labels, bw) in [(vec![100.0], 1.0), (vec![97.0, 130.5, 131.0, 300.0], 0.5), (vec![120.0, 180.0], 7.3)] {
            let d = estimate_density(&labels, Some(bw)).unwrap();
            assert!((d.total_mass() - 1.0).abs() < 1e-6, "bw {bw}: {}", d.total_mass());
            assert!(d.density.iter().all(|&p| p >= 0.0));
        }
    }

    #[test]
    fn exact_density_integrates_to_one() {
        // Composite Simpson rule on a fine grid over the extended range.
        let labels = [101.0, 104.5, 150.0, 151.0, 260.0];
        let d = estimate_density(&labels, Some(3.0)).unwrap();
        let (lo, hi) = d.range();
        let n = 20_000;
        let h = (hi - lo) / n as f64;
        let mut s = d.at(lo) + d.at(hi);
        for i in 1..n {
            s += if i % 2 == 1 { 4.0 } else { 2.0 } * d.at(lo + i as f64 * h);
        }
        assert!((s * h / 3.0 - 1.0).abs() < 1e-6);
    }

    #[test]
    fn weights_match_double_loop() {
        let mut r = rng(21);
        let labels: Vec<f64> = rand_tensor(&mut r, vec![40], 96.0, 400.0).into_data();
        let bw = silverman_bandwidth(&labels);
        let d = estimate_density(&labels, None).unwrap();
        assert_eq!(d.bandwidth, bw);
        let w = compute_weights(&d, &labels, true);
        let mut raw = Vec::new();
        for &y in &labels {
            let mut p = 0.0;
            for &yi in &labels {
                p += (-(y - yi) * (y - yi) / (2.0 * bw * bw)).exp() / (bw * (2.0 * PI).sqrt());
            }
            raw.push((p / labels.len() as f64).powf(-0.5));
        }
        let mean = raw.iter().sum::<f64>() / raw.len() as f64;
        for (k, &want) in raw.iter().enumerate() {
            assert!((w.raw[k] - want).abs() < 1e-9 * want);
            assert!((w.weights[k] - want / mean).abs() < 1e-9);
        }
    }

    #[test]
    fn huge_bandwidth_gives_unit_weights() {
        let d = estimate_density(&[100.0, 140.0, 300.0], Some(1e4)).unwrap();
        let w = compute_weights(&d, &[100.0, 140.0, 300.0], true);
        assert!(w.weights.iter().all(|&x| (x - 1.0).abs() < 1e-2));
    }

    #[test]
    fn empty_tail_is_an_error() {
        assert!(matches!(estimate_density(&[], None), Err(Error::EmptyTail)));
    }

    #[test]
    fn far_labels_clamp_to_grid() {
        let d = estimate_density(&[100.0], Some(1.0)).unwrap();
        let w = compute_weights(&d, &[1e6], false);
        assert_eq!(w.raw[0], d.at(d.range().1).powf(-0.5));
        // Far enough in the tail the density underflows the floor.
        let d = estimate_density(&[100.0, 400.0], Some(0.5)).unwrap();
        let w = compute_weights(&d, &[250.0], false);
        assert_eq!(w.clamped, 1);
        assert_eq!(w.raw[0], DENSITY_FLOOR.powf(-0.5));
    }

    #[test]
    fn reweighting_scales_rows() {
        let mut r = rng(22);
        let e = rand_tensor(&mut r, vec![4, 3], -2.0, 2.0);
        let w = [1.0, 2.0, 0.5, 3.0];
        let mut tape = Tape::new();
        let v = tape.leaf(e.clone());
        let out = reweight_embeddings(&mut tape, v, &w);
        for i in 0..4 {
            for c in 0..3 {
                assert_eq!(tape.value(out).at(i, c), e.at(i, c) * w[i]);
            }
        }
        let ones = reweight_embeddings(&mut tape, v, &[1.0; 4]);
        assert_eq!(tape.value(ones).data(), e.data());
        let s = tape.sum(out);
        let g = tape.backward(s);
        assert_eq!(g.get(v).unwrap()[3 * 3], 3.0);
    }

    proptest! {
        #[test]
        fn symmetric_pair_gives_symmetric_density(a in 90.0f64..300.0, gap in 0.0f64..200.0, bw in 0.5f64..40.0, t in 0.0f64..100.0) {
            let b = a + gap;
            let d = estimate_density(&[a, b], Some(bw)).unwrap();
            let mid = 0.5 * (a + b);
            prop_assert!((d.at(mid - t) - d.at(mid + t)).abs() < 1e-9);
        }

        #[test]
        fn weights_have_unit_mean_and_are_antitone(labels in prop::collection::vec(96.0f64..500.0, 1..40)) {
            let d = estimate_density(&labels, None).unwrap();
            let w = compute_weights(&d, &labels, true);
            let mean = w.weights.iter().sum::<f64>() / w.weights.len() as f64;
            prop_assert!((mean - 1.0).abs() < 1e-9);
            prop_assert!(w.weights.iter().all(|x| x.is_finite() && *x > 0.0));
            for i in 0..labels.len() {
                for j in 0..labels.len() {
                    if d.at(labels[i]) < d.at(labels[j]) * (1.0 - 1e-12) {
                        prop_assert!(w.weights[i] > w.weights[j]);
                    }
                }
            }
        }
    }
}
