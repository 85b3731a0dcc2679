//! Empirical ROC curves, baselines, convex hulls and AUC.
//!
//! A sample in bin `i` is classified positive when its score is `>= k_i`;
//! ties therefore count as positive.

use std::cmp::Ordering;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::binning::BinPartition;
use crate::dataio::{LabeledSample, ScoredDataset};
use crate::error::{invalid, Result};
use crate::model::BinModel;
use crate::oer::ThresholdCurve;

/// What produced an operating point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PointParam {
    /// Benefit-cost ratio of an OER threshold vector.
    Lambda(f64),
    /// Scalar threshold of the fixed rule.
    Threshold(f64),
    /// Offset added to per-bin means by a baseline.
    Offset(f64),
}

impl PointParam {
    pub fn value(self) -> f64 {
        match self {
            PointParam::Lambda(v) | PointParam::Threshold(v) | PointParam::Offset(v) => v,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OperatingPoint {
    pub fpr: f64,
    pub tpr: f64,
    pub param: Option<PointParam>,
}

impl OperatingPoint {
    pub fn new(fpr: f64, tpr: f64) -> Self {
        Self { fpr, tpr, param: None }
    }

    fn with(fpr: f64, tpr: f64, param: PointParam) -> Self {
        Self { fpr, tpr, param: Some(param) }
    }
}

/// Operating points sorted by FPR.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    pub points: Vec<OperatingPoint>,
    /// The first point is `(0, 0)` and the last `(1, 1)`.
    pub anchored: bool,
}

/// Baseline that shifts every bin's threshold with a class mean.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineMode {
    /// `k_i = mu_i- + c`
    ConstantFpr,
    /// `k_i = mu_i+ + c`
    ConstantTpr,
}

fn check_classes(data: &ScoredDataset) -> Result<()> {
    if !data.has_both_classes() {
        return invalid("ROC evaluation needs samples of both classes");
    }
    Ok(())
}

fn rates(data: &ScoredDataset, bins: &[usize], thresholds: &[f64]) -> (f64, f64) {
    let (mut tp, mut fp) = (0usize, 0usize);
    for (s, &b) in data.samples().iter().zip(bins) {
        if s.score >= thresholds[b] {
            if s.label.is_positive() {
                tp += 1;
            } else {
                fp += 1;
            }
        }
    }
    (fp as f64 / data.count_negative() as f64, tp as f64 / data.count_positive() as f64)
}

fn check_curve(partition: &BinPartition, curve: &ThresholdCurve) -> Result<()> {
    if curve.len() != partition.num_bins() {
        return invalid(format!(
            "threshold vector has {} entries, partition has {} bins",
            curve.len(),
            partition.num_bins()
        ));
    }
    Ok(())
}

/// Empirical `(fpr, tpr)` of a per-bin threshold vector.
pub fn empirical_point(data: &ScoredDataset, partition: &BinPartition, curve: &ThresholdCurve) -> Result<OperatingPoint> {
    Ok(empirical_points(data, partition, std::slice::from_ref(curve))?.remove(0))
}

/// [`empirical_point`] for many threshold vectors, sharing bin assignment.
pub fn empirical_points(
    data: &ScoredDataset,
    partition: &BinPartition,
    curves: &[ThresholdCurve],
) -> Result<Vec<OperatingPoint>> {
    check_classes(data)?;
    for c in curves {
        check_curve(partition, c)?;
    }
    let bins = partition.assign_all(data)?;
    Ok(curves
        .par_iter()
        .map(|c| {
            let (fpr, tpr) = rates(data, &bins, &c.thresholds);
            OperatingPoint::with(fpr, tpr, PointParam::Lambda(c.lambda))
        })
        .collect())
}

/// ROC of the rule `value >= t` swept over every distinct value.
///
/// Points are emitted after each group of tied values, so a tie between
/// classes produces a diagonal segment.
fn sweep_curve(values: &[(f64, bool)], param: fn(f64) -> PointParam) -> RocCurve {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| b.0.total_cmp(&a.0));
    let n_pos = sorted.iter().filter(|v| v.1).count() as f64;
    let n_neg = sorted.len() as f64 - n_pos;
    let mut points = vec![OperatingPoint::new(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < sorted.len() {
        let t = sorted[i].0;
        while i < sorted.len() && sorted[i].0 == t {
            if sorted[i].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push(OperatingPoint::with(fp as f64 / n_neg, tp as f64 / n_pos, param(t)));
    }
    if points.last().is_some_and(|p| p.fpr < 1.0 || p.tpr < 1.0) {
        points.push(OperatingPoint::new(1.0, 1.0));
    }
    RocCurve { points, anchored: true }
}

/// ROC of a single fixed threshold swept over every distinct score.
pub fn fixed_threshold_curve(data: &ScoredDataset) -> Result<RocCurve> {
    check_classes(data)?;
    let values: Vec<(f64, bool)> = data.samples().iter().map(|s| (s.score, s.label.is_positive())).collect();
    Ok(sweep_curve(&values, PointParam::Threshold))
}

/// Baseline whose thresholds follow a per-bin class mean plus a common offset.
///
/// Every distinct offset is visited: `score >= mu_i + c` is evaluated as
/// `score - mu_i >= c`, so the curve is the fixed-threshold ROC of the
/// mean-adjusted scores, with the offset as the point parameter.
pub fn offset_baseline_curve(data: &ScoredDataset, model: &BinModel, mode: BaselineMode) -> Result<RocCurve> {
    check_classes(data)?;
    let bins = model.partition.assign_all(data)?;
    let values: Vec<(f64, bool)> = data
        .samples()
        .iter()
        .zip(&bins)
        .map(|(s, &b)| {
            let st = &model.stats[b];
            let mu = match mode {
                BaselineMode::ConstantFpr => st.mu_neg,
                BaselineMode::ConstantTpr => st.mu_pos,
            };
            (s.score - mu, s.label.is_positive())
        })
        .collect();
    Ok(sweep_curve(&values, PointParam::Offset))
}

fn cross(o: &OperatingPoint, a: &OperatingPoint, b: &OperatingPoint) -> f64 {
    (a.fpr - o.fpr) * (b.tpr - o.tpr) - (a.tpr - o.tpr) * (b.fpr - o.fpr)
}

/// Upper convex hull of all points of `curves` plus `(0, 0)` and `(1, 1)`.
pub fn rocch(curves: &[RocCurve]) -> Result<RocCurve> {
    if curves.is_empty() {
        return invalid("convex hull needs at least one curve");
    }
    let mut pts: Vec<OperatingPoint> = curves.iter().flat_map(|c| c.points.iter().copied()).collect();
    pts.push(OperatingPoint::new(0.0, 0.0));
    pts.push(OperatingPoint::new(1.0, 1.0));
    pts.sort_by(|a, b| a.fpr.total_cmp(&b.fpr).then(a.tpr.total_cmp(&b.tpr)));
    // monotone chain; (0, 0) is the lowest leftmost point, (1, 1) the highest rightmost
    let mut hull: Vec<OperatingPoint> = Vec::with_capacity(pts.len());
    for p in pts {
        while hull.len() >= 2 && cross(&hull[hull.len() - 2], &hull[hull.len() - 1], &p) >= 0.0 {
            hull.pop();
        }
        hull.push(p);
    }
    Ok(RocCurve { points: hull, anchored: true })
}

/// Monotone envelope of raw operating points: points sorted by FPR with TPR
/// replaced by its running maximum, anchored at `(0, 0)` and `(1, 1)`.
pub fn upper_envelope(points: &[OperatingPoint]) -> RocCurve {
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a.fpr.total_cmp(&b.fpr).then(a.tpr.total_cmp(&b.tpr)));
    let mut out = vec![OperatingPoint::new(0.0, 0.0)];
    let mut best = 0.0f64;
    for p in pts {
        best = best.max(p.tpr);
        out.push(OperatingPoint { tpr: best, ..p });
    }
    out.push(OperatingPoint::new(1.0, 1.0));
    RocCurve { points: out, anchored: true }
}

/// Trapezoidal area under an anchored curve.
pub fn auc(curve: &RocCurve) -> Result<f64> {
    let pts = &curve.points;
    let anchored = curve.anchored
        && pts.first().is_some_and(|p| p.fpr == 0.0 && p.tpr == 0.0)
        && pts.last().is_some_and(|p| p.fpr == 1.0 && p.tpr == 1.0);
    if !anchored {
        return invalid("AUC needs a curve anchored at (0, 0) and (1, 1)");
    }
    if pts.windows(2).any(|w| w[1].fpr < w[0].fpr) {
        return invalid("curve is not sorted by false positive rate");
    }
    let area: f64 = pts.windows(2).map(|w| (w[1].fpr - w[0].fpr) * (w[0].tpr + w[1].tpr) / 2.0).sum();
    Ok(area.clamp(0.0, 1.0))
}

/// Probability that a positive outscores a negative, ties counting one half.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairwiseAuc {
    pub auc: f64,
    /// Zero for an exact count.
    pub std_error: f64,
    pub exact: bool,
    pub pairs: u64,
}

/// Pair budget up to which every pair is counted.
pub const EXACT_PAIR_LIMIT: u64 = 100_000_000;
/// Pairs drawn when the budget is exceeded.
pub const SAMPLED_PAIRS: u64 = 1_000_000;

/// Pairwise AUC of `scorer`: exact over all pairs when there are at most
/// [`EXACT_PAIR_LIMIT`] of them, otherwise estimated from
/// [`SAMPLED_PAIRS`] random pairs with a fixed seed.
pub fn auc_pairwise<F>(data: &ScoredDataset, scorer: F) -> Result<PairwiseAuc>
where
    F: Fn(&LabeledSample) -> f64 + Sync,
{
    check_classes(data)?;
    let (pos, neg) = class_values(data, &scorer);
    let pairs = pos.len() as u64 * neg.len() as u64;
    if pairs <= EXACT_PAIR_LIMIT {
        // twice the score, so ties stay integral
        let doubled: u64 = pos
            .par_iter()
            .map(|&a| {
                neg.iter()
                    .map(|&b| match a.partial_cmp(&b) {
                        Some(Ordering::Greater) => 2,
                        Some(Ordering::Equal) => 1,
                        _ => 0,
                    })
                    .sum::<u64>()
            })
            .sum();
        Ok(PairwiseAuc { auc: doubled as f64 / (2 * pairs) as f64, std_error: 0.0, exact: true, pairs })
    } else {
        Ok(sampled(&pos, &neg, SAMPLED_PAIRS, 0))
    }
}

/// Monte-Carlo pairwise AUC from `pairs` uniformly drawn pairs.
pub fn auc_pairwise_sampled<F>(data: &ScoredDataset, scorer: F, pairs: u64, seed: u64) -> Result<PairwiseAuc>
where
    F: Fn(&LabeledSample) -> f64 + Sync,
{
    check_classes(data)?;
    if pairs == 0 {
        return invalid("at least one pair must be sampled");
    }
    let (pos, neg) = class_values(data, &scorer);
    Ok(sampled(&pos, &neg, pairs, seed))
}

fn class_values<F: Fn(&LabeledSample) -> f64>(data: &ScoredDataset, scorer: &F) -> (Vec<f64>, Vec<f64>) {
    let mut pos = Vec::with_capacity(data.count_positive());
    let mut neg = Vec::with_capacity(data.count_negative());
    for s in data.samples() {
        if s.label.is_positive() {
            pos.push(scorer(s));
        } else {
            neg.push(scorer(s));
        }
    }
    (pos, neg)
}

fn sampled(pos: &[f64], neg: &[f64], pairs: u64, seed: u64) -> PairwiseAuc {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for _ in 0..pairs {
        let a = pos[rng.random_range(0..pos.len())];
        let b = neg[rng.random_range(0..neg.len())];
        let v = match a.partial_cmp(&b) {
            Some(Ordering::Greater) => 1.0,
            Some(Ordering::Equal) => 0.5,
            _ => 0.0,
        };
        sum += v;
        sum_sq += v * v;
    }
    let n = pairs as f64;
    let mean = sum / n;
    let var = (sum_sq / n - mean * mean).max(0.0);
    PairwiseAuc { auc: mean, std_error: (var / n).sqrt(), exact: false, pairs }
}

/// Writes `fpr,tpr,param`; the parameter column is empty for anchors.
pub fn write_curve<W: Write>(sink: W, curve: &RocCurve) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(["fpr", "tpr", "param"])?;
    for p in &curve.points {
        let param = p.param.map(|v| v.value().to_string()).unwrap_or_default();
        w.write_record([p.fpr.to_string(), p.tpr.to_string(), param])?;
    }
    w.flush()?;
    Ok(())
}
