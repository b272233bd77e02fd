use serde::{Deserialize, Serialize};

use super::AnalysisError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SummaryStats {
    pub mean_s: f64,
    pub min_s: f64,
    pub max_s: f64,
    pub n: usize,
}

pub fn summary_stats(runtimes: &[f64]) -> Result<SummaryStats, AnalysisError> {
    if runtimes.is_empty() {
        return Err(AnalysisError::EmptySample);
    }
    if runtimes.iter().any(|v| !v.is_finite()) {
        return Err(AnalysisError::NonFinite);
    }
    let min_s = runtimes.iter().copied().fold(f64::INFINITY, f64::min);
    let max_s = runtimes.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mean = runtimes.iter().sum::<f64>() / runtimes.len() as f64;
    Ok(SummaryStats {
        // Rounding in the sum can push the mean of a constant sample a ULP
        // outside [min, max].
        mean_s: mean.clamp(min_s, max_s),
        min_s,
        max_s,
        n: runtimes.len(),
    })
}

/// Linearly interpolated quantile of a sorted sample.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = q.clamp(0.0, 1.0) * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Freedman–Diaconis bin width `2 · IQR · n^(-1/3)`.
pub fn freedman_diaconis_width(sample: &[f64]) -> f64 {
    if sample.len() < 2 {
        return 0.0;
    }
    let mut s = sample.to_vec();
    s.sort_by(f64::total_cmp);
    let iqr = quantile_sorted(&s, 0.75) - quantile_sorted(&s, 0.25);
    2.0 * iqr / (s.len() as f64).cbrt()
}

const MAX_BINS: usize = 10_000;

/// Equal-width bins over `[low, high]`, shared by every pair in a report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinSpec {
    pub low: f64,
    pub high: f64,
    pub n_bins: usize,
    /// Width suggested by the Freedman–Diaconis rule on the pooled sample.
    pub fd_width: f64,
}

impl BinSpec {
    /// Bins covering the pooled range, sized by Freedman–Diaconis on the
    /// pooled sample. Falls back to a single bin when the rule degenerates.
    pub fn from_samples<'a, I>(samples: I) -> Option<BinSpec>
    where
        I: IntoIterator<Item = &'a [f64]>,
    {
        let pooled: Vec<f64> = samples.into_iter().flatten().copied().filter(|v| v.is_finite()).collect();
        if pooled.is_empty() {
            return None;
        }
        let low = pooled.iter().copied().fold(f64::INFINITY, f64::min);
        let high = pooled.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let fd_width = freedman_diaconis_width(&pooled);
        let range = high - low;
        let n_bins = if range > 0.0 && fd_width > 0.0 {
            ((range / fd_width).ceil() as usize).clamp(1, MAX_BINS)
        } else {
            1
        };
        Some(BinSpec { low, high, n_bins, fd_width })
    }

    pub fn width(&self) -> f64 {
        (self.high - self.low) / self.n_bins as f64
    }

    pub fn edges(&self, i: usize) -> (f64, f64) {
        let w = self.width();
        let hi = if i + 1 == self.n_bins { self.high } else { self.low + (i + 1) as f64 * w };
        (self.low + i as f64 * w, hi)
    }

    /// Bin counts; the last bin is closed on the right, values outside the
    /// range are ignored.
    pub fn counts(&self, sample: &[f64]) -> Vec<usize> {
        let mut counts = vec![0usize; self.n_bins];
        let w = self.width();
        for &v in sample {
            if !(self.low..=self.high).contains(&v) {
                continue;
            }
            let idx = if w > 0.0 { ((v - self.low) / w).floor() as usize } else { 0 };
            counts[idx.min(self.n_bins - 1)] += 1;
        }
        counts
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    #[test]
    fn basic_summary() {
        let s = summary_stats(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(s, SummaryStats { mean_s: 2.0, min_s: 1.0, max_s: 3.0, n: 3 });
    }

    #[test]
    fn single_value_summary() {
        let s = summary_stats(&[5.5]).unwrap();
        assert_eq!((s.mean_s, s.min_s, s.max_s), (5.5, 5.5, 5.5));
    }

    #[test]
    fn empty_summary_is_error() {
        assert!(matches!(summary_stats(&[]), Err(AnalysisError::EmptySample)));
    }

    #[test]
    fn synthetic_mean_within_sampling_error() {
        // 410 runtimes around 289.3 s with sd 15 s: standard error ≈ 0.74 s.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let dist = Normal::new(289.3, 15.0).unwrap();
        let sample: Vec<f64> = (0..410).map(|_| dist.sample(&mut rng)).collect();
        let s = summary_stats(&sample).unwrap();
        let se = 15.0 / (410f64).sqrt();
        assert!((s.mean_s - 289.3).abs() < 4.0 * se, "mean {}", s.mean_s);
        assert_eq!(s.n, 410);
    }

    #[test]
    fn quantiles_interpolate() {
        let s = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile_sorted(&s, 0.0), 1.0);
        assert_eq!(quantile_sorted(&s, 1.0), 4.0);
        assert_relative_eq!(quantile_sorted(&s, 0.25), 1.75);
        assert_relative_eq!(quantile_sorted(&s, 0.75), 3.25);
    }

    #[test]
    fn fd_width_and_bins() {
        let a: Vec<f64> = (0..8).map(f64::from).collect(); // 0..=7
        // IQR = 5.25 - 1.75 = 3.5, n = 8 → 2·3.5/2 = 3.5
        assert_relative_eq!(freedman_diaconis_width(&a), 3.5);
        let spec = BinSpec::from_samples([a.as_slice()]).unwrap();
        assert_eq!(spec.n_bins, 2);
        assert_eq!(spec.counts(&a), vec![4, 4]);
        assert_eq!(spec.edges(1), (3.5, 7.0));
    }

    #[test]
    fn constant_sample_gets_one_bin() {
        let spec = BinSpec::from_samples([[2.0, 2.0, 2.0].as_slice()]).unwrap();
        assert_eq!(spec.n_bins, 1);
        assert_eq!(spec.counts(&[2.0, 2.0]), vec![2]);
    }

    proptest! {
        #[test]
        fn min_mean_max_ordered(v in proptest::collection::vec(1e-3f64..1e4, 1..100)) {
            let s = summary_stats(&v).unwrap();
            prop_assert!(s.min_s <= s.mean_s && s.mean_s <= s.max_s);
        }

        #[test]
        fn shared_bins_count_everything(
            a in proptest::collection::vec(0.0f64..100.0, 1..50),
            b in proptest::collection::vec(50.0f64..300.0, 1..50),
        ) {
            let spec = BinSpec::from_samples([a.as_slice(), b.as_slice()]).unwrap();
            prop_assert_eq!(spec.counts(&a).iter().sum::<usize>(), a.len());
            prop_assert_eq!(spec.counts(&b).iter().sum::<usize>(), b.len());
        }
    }
}
