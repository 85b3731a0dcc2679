//! Per-bin Gaussian model of the base classifier's score.
//!
//! Within bin `i` the score of a positive sample is modelled as
//! `N(mu_pos, sigma_pos)` and that of a negative sample as
//! `N(mu_neg, sigma_neg)`, with `p_pos` / `p_neg` the share of each class that
//! falls into the bin.

use std::f64::consts::{PI, SQRT_2};

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::binning::BinPartition;
use crate::dataio::{Label, ScoredDataset};
use crate::error::{invalid, OerError, Result};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

fn check_sigma(sigma: f64) -> Result<()> {
    if sigma > 0.0 && sigma.is_finite() {
        Ok(())
    } else {
        invalid(format!("standard deviation must be positive, got {sigma}"))
    }
}

/// Normal probability density.
pub fn gaussian_density(x: f64, mu: f64, sigma: f64) -> Result<f64> {
    check_sigma(sigma)?;
    let z = (x - mu) / sigma;
    Ok((-0.5 * z * z).exp() / (sigma * (2.0 * PI).sqrt()))
}

/// Normal cumulative distribution function.
pub fn gaussian_cdf(x: f64, mu: f64, sigma: f64) -> Result<f64> {
    check_sigma(sigma)?;
    Ok(std_cdf((x - mu) / sigma))
}

/// `ln` of the normal density, finite far into the tails.
pub(crate) fn log_density(x: f64, mu: f64, sigma: f64) -> f64 {
    let z = (x - mu) / sigma;
    -0.5 * z * z - sigma.ln() - LN_SQRT_2PI
}

/// Standard normal CDF, `Φ(z)`.
pub(crate) fn std_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / SQRT_2)
}

/// Standard normal upper tail, `1 - Φ(z)`, without cancellation.
pub(crate) fn std_sf(z: f64) -> f64 {
    0.5 * erfc(z / SQRT_2)
}

/// Gaussian score statistics and priors for one bin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinStats {
    pub mu_pos: f64,
    pub sigma_pos: f64,
    pub mu_neg: f64,
    pub sigma_neg: f64,
    /// `P(x in bin | y = +1)`
    pub p_pos: f64,
    /// `P(x in bin | y = -1)`
    pub p_neg: f64,
    pub n_pos: usize,
    pub n_neg: usize,
    /// Positive moments were replaced by pooled statistics.
    #[serde(default)]
    pub pooled_pos: bool,
    #[serde(default)]
    pub pooled_neg: bool,
}

impl BinStats {
    /// Bin statistics from parameters alone, without sample counts.
    pub fn from_params(mu_pos: f64, sigma_pos: f64, mu_neg: f64, sigma_neg: f64, p_pos: f64, p_neg: f64) -> Self {
        Self {
            mu_pos,
            sigma_pos,
            mu_neg,
            sigma_neg,
            p_pos,
            p_neg,
            n_pos: 0,
            n_neg: 0,
            pooled_pos: false,
            pooled_neg: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_sigma(self.sigma_pos)?;
        check_sigma(self.sigma_neg)?;
        if !self.mu_pos.is_finite() || !self.mu_neg.is_finite() {
            return invalid("bin means must be finite");
        }
        for p in [self.p_pos, self.p_neg] {
            if !(0.0..=1.0).contains(&p) {
                return invalid(format!("bin prior {p} outside [0, 1]"));
            }
        }
        Ok(())
    }

    /// Both classes have zero mass in this bin.
    pub fn is_empty(&self) -> bool {
        self.p_pos == 0.0 && self.p_neg == 0.0
    }

    pub fn is_equal_variance(&self) -> bool {
        (self.sigma_pos - self.sigma_neg).abs() <= 1e-12 * self.sigma_pos.max(self.sigma_neg)
    }

    /// `P(score >= k | bin, y = +1)`
    pub fn tpr_at(&self, k: f64) -> f64 {
        std_sf((k - self.mu_pos) / self.sigma_pos)
    }

    /// `P(score >= k | bin, y = -1)`
    pub fn fpr_at(&self, k: f64) -> f64 {
        std_sf((k - self.mu_neg) / self.sigma_neg)
    }
}

/// Whole-dataset class statistics, used as the fallback for sparse bins.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PooledStats {
    pub mu_pos: f64,
    pub sigma_pos: f64,
    pub mu_neg: f64,
    pub sigma_neg: f64,
    pub n_pos: usize,
    pub n_neg: usize,
}

impl PooledStats {
    /// Single-bin view of the pooled statistics (both priors 1).
    pub fn as_bin(&self) -> BinStats {
        BinStats {
            n_pos: self.n_pos,
            n_neg: self.n_neg,
            ..BinStats::from_params(self.mu_pos, self.sigma_pos, self.mu_neg, self.sigma_neg, 1.0, 1.0)
        }
    }
}

/// Options for [`fit_bin_model`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitOptions {
    /// Minimum samples of a class in a bin before its own moments are used.
    pub min_count: usize,
    /// Lower bound on every fitted standard deviation. `None` uses
    /// `max(1e-6, 1e-3 * pooled class sigma)` per class.
    pub sigma_floor: Option<f64>,
    /// Replace each bin's two deviations by their pooled value.
    pub equal_variance: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { min_count: 5, sigma_floor: None, equal_variance: false }
    }
}

/// Fitted per-bin model over a partition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinModel {
    pub partition: BinPartition,
    pub stats: Vec<BinStats>,
    pub pooled: PooledStats,
    pub sigma_floor_pos: f64,
    pub sigma_floor_neg: f64,
    pub equal_variance: bool,
}

#[derive(Default)]
struct Moments {
    n: usize,
    sum_sq_dev: f64,
    mean: f64,
}

impl Moments {
    // Welford update
    fn push(&mut self, x: f64) {
        self.n += 1;
        let delta = x - self.mean;
        self.mean += delta / self.n as f64;
        self.sum_sq_dev += delta * (x - self.mean);
    }

    fn std_dev(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            (self.sum_sq_dev / (self.n - 1) as f64).sqrt()
        }
    }
}

fn pooled_sigma(sigma_pos: f64, n_pos: usize, sigma_neg: f64, n_neg: usize) -> f64 {
    let w_pos = (n_pos.max(2) - 1) as f64;
    let w_neg = (n_neg.max(2) - 1) as f64;
    ((w_pos * sigma_pos * sigma_pos + w_neg * sigma_neg * sigma_neg) / (w_pos + w_neg)).sqrt()
}

/// Fits the per-bin Gaussian model.
///
/// Means and unbiased standard deviations come from the bin's own samples
/// when a class has at least `min_count` of them, otherwise from the pooled
/// class statistics. Priors always come from the true counts.
pub fn fit_bin_model(data: &ScoredDataset, partition: &BinPartition, options: &FitOptions) -> Result<BinModel> {
    if let Some(floor) = options.sigma_floor {
        if !(floor > 0.0) {
            return invalid("sigma floor must be positive");
        }
    }
    let bins = partition.assign_all(data)?;
    let n_bins = partition.num_bins();
    let mut per_bin: Vec<[Moments; 2]> = (0..n_bins).map(|_| Default::default()).collect();
    let mut global: [Moments; 2] = Default::default();
    for (s, &b) in data.samples().iter().zip(&bins) {
        let c = usize::from(s.label == Label::Negative);
        per_bin[b][c].push(s.score);
        global[c].push(s.score);
    }
    let [gp, gn] = &global;
    if gp.n == 0 || gn.n == 0 {
        return Err(OerError::Fit(format!(
            "both classes are required; found {} positive and {} negative samples",
            gp.n, gn.n
        )));
    }
    let floor_pos = options.sigma_floor.unwrap_or_else(|| (1e-3 * gp.std_dev()).max(1e-6));
    let floor_neg = options.sigma_floor.unwrap_or_else(|| (1e-3 * gn.std_dev()).max(1e-6));
    let pooled = PooledStats {
        mu_pos: gp.mean,
        sigma_pos: gp.std_dev().max(floor_pos),
        mu_neg: gn.mean,
        sigma_neg: gn.std_dev().max(floor_neg),
        n_pos: gp.n,
        n_neg: gn.n,
    };

    let min_count = options.min_count.max(1);
    let stats = per_bin
        .iter()
        .map(|[bp, bn]| {
            let pooled_pos = bp.n < min_count || bp.n < 2;
            let pooled_neg = bn.n < min_count || bn.n < 2;
            let (mu_pos, sigma_pos) = if pooled_pos {
                (pooled.mu_pos, pooled.sigma_pos)
            } else {
                (bp.mean, bp.std_dev().max(floor_pos))
            };
            let (mu_neg, sigma_neg) = if pooled_neg {
                (pooled.mu_neg, pooled.sigma_neg)
            } else {
                (bn.mean, bn.std_dev().max(floor_neg))
            };
            let mut st = BinStats {
                mu_pos,
                sigma_pos,
                mu_neg,
                sigma_neg,
                p_pos: bp.n as f64 / gp.n as f64,
                p_neg: bn.n as f64 / gn.n as f64,
                n_pos: bp.n,
                n_neg: bn.n,
                pooled_pos,
                pooled_neg,
            };
            if options.equal_variance {
                let s = pooled_sigma(sigma_pos, bp.n, sigma_neg, bn.n);
                st.sigma_pos = s;
                st.sigma_neg = s;
            }
            st
        })
        .collect();

    Ok(BinModel {
        partition: partition.clone(),
        stats,
        pooled,
        sigma_floor_pos: floor_pos,
        sigma_floor_neg: floor_neg,
        equal_variance: options.equal_variance,
    })
}

impl BinModel {
    /// Builds a model from explicit bin statistics, e.g. a known generative
    /// model. Pooled statistics are those of the implied mixture.
    pub fn from_stats(partition: BinPartition, stats: Vec<BinStats>) -> Result<Self> {
        if stats.len() != partition.num_bins() {
            return invalid(format!(
                "{} bin statistics for a partition of {} bins",
                stats.len(),
                partition.num_bins()
            ));
        }
        for (i, s) in stats.iter().enumerate() {
            s.validate().map_err(|e| OerError::InvalidArgument(format!("bin {i}: {e}")))?;
        }
        let total_pos: f64 = stats.iter().map(|s| s.p_pos).sum();
        let total_neg: f64 = stats.iter().map(|s| s.p_neg).sum();
        if (total_pos - 1.0).abs() > 1e-9 || (total_neg - 1.0).abs() > 1e-9 {
            return invalid(format!("priors sum to {total_pos} / {total_neg}, expected 1"));
        }
        let mixture = |mu: &dyn Fn(&BinStats) -> f64, sd: &dyn Fn(&BinStats) -> f64, p: &dyn Fn(&BinStats) -> f64| {
            let mean: f64 = stats.iter().map(|s| p(s) * mu(s)).sum();
            let second: f64 = stats.iter().map(|s| p(s) * (sd(s).powi(2) + mu(s).powi(2))).sum();
            (mean, (second - mean * mean).max(0.0).sqrt())
        };
        let (mu_pos, sigma_pos) = mixture(&|s| s.mu_pos, &|s| s.sigma_pos, &|s| s.p_pos);
        let (mu_neg, sigma_neg) = mixture(&|s| s.mu_neg, &|s| s.sigma_neg, &|s| s.p_neg);
        let equal_variance = stats.iter().all(BinStats::is_equal_variance);
        let floor_pos = stats.iter().map(|s| s.sigma_pos).fold(f64::INFINITY, f64::min);
        let floor_neg = stats.iter().map(|s| s.sigma_neg).fold(f64::INFINITY, f64::min);
        Ok(Self {
            partition,
            stats,
            pooled: PooledStats {
                mu_pos,
                sigma_pos,
                mu_neg,
                sigma_neg,
                n_pos: 0,
                n_neg: 0,
            },
            sigma_floor_pos: floor_pos,
            sigma_floor_neg: floor_neg,
            equal_variance,
        })
    }

    /// Single-bin model with the given statistics (priors forced to 1).
    pub fn single(stats: BinStats) -> Result<Self> {
        Self::from_stats(BinPartition::single_bin(), vec![BinStats { p_pos: 1.0, p_neg: 1.0, ..stats }])
    }

    pub fn num_bins(&self) -> usize {
        self.stats.len()
    }

    /// Default clamp bound: the largest absolute bin mean plus ten pooled
    /// standard deviations.
    pub fn default_clamp(&self) -> f64 {
        let mu = self
            .stats
            .iter()
            .flat_map(|s| [s.mu_pos.abs(), s.mu_neg.abs()])
            .fold(self.pooled.mu_pos.abs().max(self.pooled.mu_neg.abs()), f64::max);
        mu + 10.0 * self.pooled.sigma_pos.max(self.pooled.sigma_neg)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let model: BinModel = serde_json::from_str(text)?;
        if model.stats.len() != model.partition.num_bins() {
            return invalid("model bin count does not match its partition");
        }
        for s in &model.stats {
            s.validate()?;
        }
        Ok(model)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::LabeledSample;
    use approx::assert_abs_diff_eq;

    fn data(rows: &[(i32, f64, f64)]) -> ScoredDataset {
        let samples = rows
            .iter()
            .map(|&(y, s, x)| LabeledSample::new(Label::from_sign(y).unwrap(), s, vec![x]))
            .collect();
        ScoredDataset::new(samples, vec!["x".into()]).unwrap()
    }

    #[test]
    fn density_and_cdf_values() {
        assert_abs_diff_eq!(gaussian_density(0.0, 0.0, 1.0).unwrap(), 0.398_942_3, epsilon = 1e-7);
        assert_eq!(gaussian_cdf(0.0, 0.0, 1.0).unwrap(), 0.5);
        assert_abs_diff_eq!(gaussian_cdf(1.96, 0.0, 1.0).unwrap(), 0.9750, epsilon = 1e-4);
        assert_abs_diff_eq!(gaussian_cdf(4.0, 1.0, 2.0).unwrap(), 0.933_192_798_731_141_9, epsilon = 1e-10);
        assert!(gaussian_density(0.0, 0.0, 0.0).is_err());
        assert!(gaussian_cdf(0.0, 0.0, -1.0).is_err());
    }

    #[test]
    fn log_density_matches_density() {
        for x in [-3.0, 0.0, 0.7, 5.0] {
            let d = gaussian_density(x, 0.5, 1.5).unwrap();
            assert_abs_diff_eq!(log_density(x, 0.5, 1.5), d.ln(), epsilon = 1e-12);
        }
        assert!(log_density(1e3, 0.0, 1.0).is_finite());
    }

    #[test]
    fn density_integrates_to_one() {
        // composite Simpson over mu ± 10 sigma
        let (mu, sigma) = (1.3, 0.7);
        let n = 4000;
        let (a, b) = (mu - 10.0 * sigma, mu + 10.0 * sigma);
        let h = (b - a) / n as f64;
        let f = |x: f64| gaussian_density(x, mu, sigma).unwrap();
        let mut total = f(a) + f(b);
        for i in 1..n {
            total += if i % 2 == 1 { 4.0 } else { 2.0 } * f(a + h * i as f64);
        }
        assert_abs_diff_eq!(total * h / 3.0, 1.0, epsilon = 1e-6);
    }

    #[test]
    fn single_bin_hand_arithmetic() {
        let ds = data(&[(1, 1.0, 0.0), (1, 1.0, 0.0), (1, 1.0, 0.0), (1, 3.0, 0.0), (-1, 0.0, 0.0), (-1, 0.0, 0.0), (-1, -2.0, 0.0), (-1, 2.0, 0.0)]);
        let opts = FitOptions { min_count: 2, ..FitOptions::default() };
        let m = fit_bin_model(&ds, &BinPartition::single_bin(), &opts).unwrap();
        let s = m.stats[0];
        assert_abs_diff_eq!(s.mu_pos, 1.5, epsilon = 1e-15);
        assert_abs_diff_eq!(s.mu_neg, 0.0, epsilon = 1e-15);
        assert_eq!((s.p_pos, s.p_neg), (1.0, 1.0));
        assert_abs_diff_eq!(s.sigma_pos, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s.sigma_neg, (8.0f64 / 3.0).sqrt(), epsilon = 1e-12);
        // a single bin reproduces the pooled statistics
        assert_abs_diff_eq!(s.sigma_pos, m.pooled.sigma_pos, epsilon = 1e-15);
        assert_abs_diff_eq!(s.mu_neg, m.pooled.mu_neg, epsilon = 1e-15);
    }

    #[test]
    fn sparse_bin_falls_back_to_pooled() {
        let mut rows = vec![(1, 5.0, 0.0)];
        for i in 0..10 {
            rows.push((1, i as f64, 2.0));
            rows.push((-1, -(i as f64), 2.0));
            rows.push((-1, i as f64 * 0.5, 0.0));
        }
        let ds = data(&rows);
        let p = BinPartition::from_edges(vec![1.0]).unwrap();
        let m = fit_bin_model(&ds, &p, &FitOptions::default()).unwrap();
        let sparse = m.stats[0];
        assert_eq!(sparse.n_pos, 1);
        assert!(sparse.pooled_pos && !sparse.pooled_neg);
        assert_eq!(sparse.mu_pos, m.pooled.mu_pos);
        assert_eq!(sparse.sigma_pos, m.pooled.sigma_pos);
        let total_pos: f64 = m.stats.iter().map(|s| s.p_pos).sum();
        let total_neg: f64 = m.stats.iter().map(|s| s.p_neg).sum();
        assert_abs_diff_eq!(total_pos, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(total_neg, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn sigma_floor_applies() {
        let ds = data(&[(1, 1.0, 0.0), (1, 1.0, 0.0), (-1, 0.0, 0.0), (-1, 2.0, 0.0)]);
        let opts = FitOptions { min_count: 2, sigma_floor: Some(0.25), equal_variance: false };
        let m = fit_bin_model(&ds, &BinPartition::single_bin(), &opts).unwrap();
        assert_eq!(m.stats[0].sigma_pos, 0.25);
    }

    #[test]
    fn equal_variance_pools_per_bin() {
        let ds = data(&[(1, 0.0, 0.0), (1, 2.0, 0.0), (1, 4.0, 0.0), (-1, 0.0, 0.0), (-1, 1.0, 0.0), (-1, 2.0, 0.0)]);
        let opts = FitOptions { min_count: 2, equal_variance: true, ..FitOptions::default() };
        let m = fit_bin_model(&ds, &BinPartition::single_bin(), &opts).unwrap();
        let s = m.stats[0];
        assert_eq!(s.sigma_pos, s.sigma_neg);
        // (2*4 + 2*1) / 4
        assert_abs_diff_eq!(s.sigma_pos, 2.5f64.sqrt(), epsilon = 1e-12);
        assert!(m.equal_variance);
    }

    #[test]
    fn missing_class_is_a_fit_error() {
        let ds = data(&[(1, 1.0, 0.0), (1, 2.0, 0.0)]);
        assert!(matches!(
            fit_bin_model(&ds, &BinPartition::single_bin(), &FitOptions::default()).unwrap_err(),
            OerError::Fit(_)
        ));
    }

    #[test]
    fn from_stats_checks_priors() {
        let p = BinPartition::from_edges(vec![0.5]).unwrap();
        let a = BinStats::from_params(1.0, 1.0, 0.0, 1.0, 0.5, 0.5);
        assert!(BinModel::from_stats(p.clone(), vec![a, a]).is_ok());
        let b = BinStats { p_pos: 0.4, ..a };
        assert!(BinModel::from_stats(p, vec![a, b]).is_err());
    }

    #[test]
    fn model_json_round_trip() {
        let m = BinModel::single(BinStats::from_params(1.0, 0.5, -1.0, 2.0, 1.0, 1.0)).unwrap();
        let back = BinModel::from_json(&m.to_json().unwrap()).unwrap();
        assert_eq!(m, back);
    }
}
