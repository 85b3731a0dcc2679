//! Screening of auxiliary features.
//!
//! A feature is useful for per-bin thresholds when bins along it differ either
//! in how hard the two classes are to separate or in their class balance.
//! Each feature is binned on its own, a model is fitted, and the mass-weighted
//! variances over bins of two per-bin measures are reported:
//!
//! - separation difficulty `SD_i = (mu_i+ - mu_i-) / (sigma_i+ sigma_i-)`
//! - prior measure `P_i = ln(p_i+ sigma_i- / (p_i- sigma_i+))`

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::binning::{make_equal_width_partition, make_quantile_partition, BinPartition};
use crate::dataio::ScoredDataset;
use crate::error::{invalid, Result};
use crate::model::{fit_bin_model, BinStats, FitOptions};

/// Denominator of the separation difficulty.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SdVariant {
    /// `sigma+ * sigma-`
    #[default]
    Product,
    /// `sqrt(sigma+ * sigma-)`
    GeometricMean,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BinStrategy {
    EqualWidth,
    #[default]
    Quantile,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct ScoreOptions {
    pub strategy: BinStrategy,
    pub sd_variant: SdVariant,
    pub fit: FitOptions,
}

/// `(mu+ - mu-) / (sigma+ sigma-)`.
pub fn separation_difficulty(bin: &BinStats) -> f64 {
    separation_difficulty_with(bin, SdVariant::Product)
}

pub fn separation_difficulty_with(bin: &BinStats, variant: SdVariant) -> f64 {
    let denom = match variant {
        SdVariant::Product => bin.sigma_pos * bin.sigma_neg,
        SdVariant::GeometricMean => (bin.sigma_pos * bin.sigma_neg).sqrt(),
    };
    (bin.mu_pos - bin.mu_neg) / denom
}

/// `ln(p+ sigma- / (p- sigma+))`, or `None` when either prior is zero.
pub fn prior_measure(bin: &BinStats) -> Option<f64> {
    if bin.p_pos > 0.0 && bin.p_neg > 0.0 {
        Some((bin.p_pos * bin.sigma_neg / (bin.p_neg * bin.sigma_pos)).ln())
    } else {
        None
    }
}

/// Measures of one bin that holds both classes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinMeasure {
    pub bin: usize,
    pub sd: f64,
    pub prior: f64,
    /// `(p+ + p-) / 2`
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureReport {
    pub feature: usize,
    pub name: String,
    pub bins: Vec<BinMeasure>,
    /// Bins holding samples of only one class; left out of both variances.
    pub excluded_bins: Vec<usize>,
    pub sd_variance: f64,
    pub prior_variance: f64,
    /// Variances divided by their maximum over the ranked features.
    pub sd_score: f64,
    pub prior_score: f64,
    pub accepted: bool,
}

fn weighted_variance(values: impl Iterator<Item = (f64, f64)> + Clone) -> f64 {
    let total: f64 = values.clone().map(|(_, w)| w).sum();
    if total <= 0.0 {
        return 0.0;
    }
    let mean = values.clone().map(|(x, w)| w * x).sum::<f64>() / total;
    values.map(|(x, w)| w * (x - mean) * (x - mean)).sum::<f64>() / total
}

fn partition_for(data: &ScoredDataset, feature: usize, nbins: usize, strategy: BinStrategy) -> Result<BinPartition> {
    match strategy {
        BinStrategy::EqualWidth => make_equal_width_partition(data, &[feature], &[nbins]),
        BinStrategy::Quantile => Ok(make_quantile_partition(data, &[feature], &[nbins])?.0),
    }
}

/// Bins one feature, fits the per-bin model and reports the weighted
/// variances of both measures. The report is accepted by default; see
/// [`rank_features`] for thresholding.
pub fn score_feature(data: &ScoredDataset, feature_index: usize, nbins: usize, options: &ScoreOptions) -> Result<FeatureReport> {
    if nbins < 2 {
        return invalid("feature scoring needs at least two bins");
    }
    let partition = partition_for(data, feature_index, nbins, options.strategy)?;
    let model = fit_bin_model(data, &partition, &options.fit)?;
    let mut bins = Vec::new();
    let mut excluded_bins = Vec::new();
    for (i, s) in model.stats.iter().enumerate() {
        match prior_measure(s) {
            Some(prior) => bins.push(BinMeasure {
                bin: i,
                sd: separation_difficulty_with(s, options.sd_variant),
                prior,
                weight: (s.p_pos + s.p_neg) / 2.0,
            }),
            None if !s.is_empty() => excluded_bins.push(i),
            None => {}
        }
    }
    let sd_variance = weighted_variance(bins.iter().map(|b| (b.sd, b.weight)));
    let prior_variance = weighted_variance(bins.iter().map(|b| (b.prior, b.weight)));
    Ok(FeatureReport {
        feature: feature_index,
        name: data.aux_names()[feature_index].clone(),
        bins,
        excluded_bins,
        sd_variance,
        prior_variance,
        sd_score: 0.0,
        prior_score: 0.0,
        accepted: true,
    })
}

/// Minimum variances for a feature to be accepted.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SelectionThresholds {
    pub sd_variance: f64,
    pub prior_variance: f64,
}

impl Default for SelectionThresholds {
    fn default() -> Self {
        Self { sd_variance: 0.05, prior_variance: 0.05 }
    }
}

/// Scores every auxiliary feature and sorts the reports by the larger of
/// the two normalized variances, best first. A feature is rejected when
/// neither variance exceeds its threshold.
pub fn rank_features(
    data: &ScoredDataset,
    nbins: usize,
    thresholds: SelectionThresholds,
    options: &ScoreOptions,
) -> Result<Vec<FeatureReport>> {
    if data.aux_dim() == 0 {
        return invalid("dataset has no auxiliary features");
    }
    let mut reports = (0..data.aux_dim())
        .into_par_iter()
        .map(|f| score_feature(data, f, nbins, options))
        .collect::<Result<Vec<_>>>()?;
    let sd_max = reports.iter().map(|r| r.sd_variance).fold(0.0, f64::max);
    let prior_max = reports.iter().map(|r| r.prior_variance).fold(0.0, f64::max);
    for r in &mut reports {
        r.sd_score = if sd_max > 0.0 { r.sd_variance / sd_max } else { 0.0 };
        r.prior_score = if prior_max > 0.0 { r.prior_variance / prior_max } else { 0.0 };
        r.accepted = r.sd_variance > thresholds.sd_variance || r.prior_variance > thresholds.prior_variance;
    }
    reports.sort_by(|a, b| {
        let ka = a.sd_score.max(a.prior_score);
        let kb = b.sd_score.max(b.prior_score);
        kb.total_cmp(&ka).then(a.feature.cmp(&b.feature))
    });
    Ok(reports)
}

/// Writes `feature,sd_variance,prior_variance,accepted,excluded_bins`.
pub fn write_feature_report<W: Write>(sink: W, reports: &[FeatureReport]) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(["feature", "sd_variance", "prior_variance", "accepted", "excluded_bins"])?;
    for r in reports {
        w.write_record([
            r.name.clone(),
            r.sd_variance.to_string(),
            r.prior_variance.to_string(),
            r.accepted.to_string(),
            r.excluded_bins.len().to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
