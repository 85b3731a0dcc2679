//! Partitioning of the auxiliary feature space into bins.
//!
//! Each partitioned feature carries a strictly increasing edge list
//! `e_0 < e_1 < ... < e_B`. Along that feature there are `B + 2` slots:
//!
//! - slot `0`: underflow, `x < e_0`
//! - slot `j` for `1 <= j <= B`: `[e_{j-1}, e_j)`, except slot `B` which is
//!   closed on both ends, `[e_{B-1}, e_B]`
//! - slot `B + 1`: overflow, `x > e_B`
//!
//! Multi-feature partitions are Cartesian grids; the bin index is the
//! row-major combination of the per-feature slots, last feature fastest.

use serde::{Deserialize, Serialize};

use crate::dataio::ScoredDataset;
use crate::error::{invalid, OerError, Result};

/// Edges for one auxiliary feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureAxis {
    /// Index into the sample's auxiliary vector.
    pub feature: usize,
    pub name: String,
    pub edges: Vec<f64>,
}

impl FeatureAxis {
    pub fn new(feature: usize, name: impl Into<String>, edges: Vec<f64>) -> Result<Self> {
        if edges.iter().any(|e| !e.is_finite()) {
            return invalid("bin edges must be finite");
        }
        if edges.windows(2).any(|w| w[0] >= w[1]) {
            return invalid("bin edges must be strictly increasing");
        }
        Ok(Self { feature, name: name.into(), edges })
    }

    /// Number of slots along this feature, outer slots included.
    pub fn slots(&self) -> usize {
        self.edges.len() + 1
    }

    pub fn slot(&self, x: f64) -> usize {
        let n = self.edges.len();
        let c = self.edges.partition_point(|&e| e <= x);
        if n >= 2 && c == n && x == self.edges[n - 1] {
            n - 1
        } else {
            c
        }
    }

    /// Interval `(low, high)` covered by a slot; outer slots are unbounded.
    pub fn slot_range(&self, slot: usize) -> (f64, f64) {
        let lo = if slot == 0 { f64::NEG_INFINITY } else { self.edges[slot - 1] };
        let hi = self.edges.get(slot).copied().unwrap_or(f64::INFINITY);
        (lo, hi)
    }
}

/// Deterministic map from an auxiliary vector to a bin index in `[0, N)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinPartition {
    aux_dim: usize,
    axes: Vec<FeatureAxis>,
}

impl BinPartition {
    pub fn new(aux_dim: usize, axes: Vec<FeatureAxis>) -> Result<Self> {
        if axes.is_empty() {
            return invalid("a partition needs at least one feature axis");
        }
        for axis in &axes {
            if axis.feature >= aux_dim {
                return invalid(format!(
                    "feature index {} out of range for dimension {aux_dim}",
                    axis.feature
                ));
            }
        }
        Ok(Self { aux_dim, axes })
    }

    /// A partition with exactly one bin over a one-dimensional auxiliary space.
    pub fn single_bin() -> Self {
        Self {
            aux_dim: 1,
            axes: vec![FeatureAxis { feature: 0, name: "x".into(), edges: Vec::new() }],
        }
    }

    /// Builds a one-feature partition directly from an edge list.
    pub fn from_edges(edges: Vec<f64>) -> Result<Self> {
        Self::new(1, vec![FeatureAxis::new(0, "x", edges)?])
    }

    pub fn aux_dim(&self) -> usize {
        self.aux_dim
    }

    pub fn axes(&self) -> &[FeatureAxis] {
        &self.axes
    }

    pub fn num_bins(&self) -> usize {
        self.axes.iter().map(FeatureAxis::slots).product()
    }

    /// Maps an auxiliary vector to its bin.
    pub fn assign_bin(&self, aux: &[f64]) -> Result<usize> {
        if aux.len() != self.aux_dim {
            return invalid(format!(
                "auxiliary vector has dimension {}, partition expects {}",
                aux.len(),
                self.aux_dim
            ));
        }
        if aux.iter().any(|v| !v.is_finite()) {
            return invalid("auxiliary vector contains a non-finite value");
        }
        Ok(self.bin_unchecked(aux))
    }

    pub(crate) fn bin_unchecked(&self, aux: &[f64]) -> usize {
        self.axes
            .iter()
            .fold(0, |acc, axis| acc * axis.slots() + axis.slot(aux[axis.feature]))
    }

    /// Bin index of every sample. Datasets validate dimension and finiteness
    /// on construction, so only the dimension is rechecked here.
    pub fn assign_all(&self, data: &ScoredDataset) -> Result<Vec<usize>> {
        if data.aux_dim() != self.aux_dim {
            return invalid(format!(
                "dataset has {} auxiliary features, partition expects {}",
                data.aux_dim(),
                self.aux_dim
            ));
        }
        Ok(data.samples().iter().map(|s| self.bin_unchecked(&s.aux)).collect())
    }

    /// Per-axis slots of a bin index (inverse of the row-major combination).
    pub fn slots_of(&self, mut bin: usize) -> Vec<usize> {
        let mut slots = vec![0; self.axes.len()];
        for (d, axis) in self.axes.iter().enumerate().rev() {
            slots[d] = bin % axis.slots();
            bin /= axis.slots();
        }
        slots
    }

    /// Human-readable description of a bin, e.g. `x1∈[1.5,2)`.
    pub fn describe_bin(&self, bin: usize) -> String {
        self.slots_of(bin)
            .iter()
            .zip(&self.axes)
            .map(|(&slot, axis)| {
                let (lo, hi) = axis.slot_range(slot);
                format!("{}∈[{lo},{hi})", axis.name)
            })
            .collect::<Vec<_>>()
            .join(" ")
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let p: BinPartition = serde_json::from_str(text)?;
        let axes = p
            .axes
            .into_iter()
            .map(|a| FeatureAxis::new(a.feature, a.name, a.edges))
            .collect::<Result<Vec<_>>>()?;
        Self::new(p.aux_dim, axes)
    }
}

/// A warning raised while building a partition.
#[derive(Debug, Clone, PartialEq)]
pub struct BinningWarning {
    pub feature: String,
    pub requested: usize,
    pub effective: usize,
}

fn check_request(data: &ScoredDataset, feature_indices: &[usize], bins_per_feature: &[usize]) -> Result<()> {
    if feature_indices.is_empty() {
        return invalid("no features selected for binning");
    }
    if feature_indices.len() != bins_per_feature.len() {
        return invalid("one bin count is required per selected feature");
    }
    if bins_per_feature.contains(&0) {
        return invalid("bin counts must be at least 1");
    }
    if data.is_empty() {
        return Err(OerError::EmptyInput);
    }
    if let Some(&bad) = feature_indices.iter().find(|&&f| f >= data.aux_dim()) {
        return invalid(format!("feature index {bad} out of range"));
    }
    Ok(())
}

fn feature_values(data: &ScoredDataset, feature: usize) -> Result<Vec<f64>> {
    let values: Vec<f64> = data.samples().iter().map(|s| s.aux[feature]).collect();
    let (lo, hi) = min_max(&values);
    if lo == hi {
        return Err(OerError::DegenerateFeature {
            feature: data.aux_names()[feature].clone(),
            value: lo,
        });
    }
    Ok(values)
}

fn min_max(values: &[f64]) -> (f64, f64) {
    values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
}

fn equal_width_edges(lo: f64, hi: f64, bins: usize) -> Vec<f64> {
    let width = (hi - lo) / bins as f64;
    let mut edges: Vec<f64> = (0..bins).map(|j| lo + width * j as f64).collect();
    edges.push(hi);
    edges
}

/// Equal-width bins between each selected feature's observed min and max.
pub fn make_equal_width_partition(
    data: &ScoredDataset,
    feature_indices: &[usize],
    bins_per_feature: &[usize],
) -> Result<BinPartition> {
    check_request(data, feature_indices, bins_per_feature)?;
    let axes = feature_indices
        .iter()
        .zip(bins_per_feature)
        .map(|(&f, &bins)| {
            let (lo, hi) = min_max(&feature_values(data, f)?);
            FeatureAxis::new(f, data.aux_names()[f].clone(), equal_width_edges(lo, hi, bins))
        })
        .collect::<Result<Vec<_>>>()?;
    BinPartition::new(data.aux_dim(), axes)
}

/// Equal-width bins over explicit per-feature ranges, independent of the data.
pub fn make_equal_width_partition_with_ranges(
    aux_names: &[String],
    feature_indices: &[usize],
    ranges: &[(f64, f64)],
    bins_per_feature: &[usize],
) -> Result<BinPartition> {
    if feature_indices.len() != ranges.len() || ranges.len() != bins_per_feature.len() {
        return invalid("one range and one bin count are required per selected feature");
    }
    let axes = feature_indices
        .iter()
        .zip(ranges.iter().zip(bins_per_feature))
        .map(|(&f, (&(lo, hi), &bins))| {
            let name = aux_names
                .get(f)
                .ok_or_else(|| OerError::InvalidArgument(format!("feature index {f} out of range")))?;
            if bins == 0 {
                return invalid("bin counts must be at least 1");
            }
            if !(lo < hi) {
                return invalid(format!("range [{lo}, {hi}] for {name} is empty"));
            }
            FeatureAxis::new(f, name.clone(), equal_width_edges(lo, hi, bins))
        })
        .collect::<Result<Vec<_>>>()?;
    BinPartition::new(aux_names.len(), axes)
}

/// Equal-mass bins: interior edges sit on empirical quantiles of each feature.
///
/// Edges are taken at order statistics (`sorted[floor(j n / b)]`), so they are
/// always observed values. Repeated quantiles collapse and the feature gets
/// fewer bins than requested; each such feature produces a warning.
pub fn make_quantile_partition(
    data: &ScoredDataset,
    feature_indices: &[usize],
    bins_per_feature: &[usize],
) -> Result<(BinPartition, Vec<BinningWarning>)> {
    check_request(data, feature_indices, bins_per_feature)?;
    let mut warnings = Vec::new();
    let mut axes = Vec::with_capacity(feature_indices.len());
    for (&f, &bins) in feature_indices.iter().zip(bins_per_feature) {
        let mut values = feature_values(data, f)?;
        values.sort_by(f64::total_cmp);
        let n = values.len();
        let mut edges = vec![values[0]];
        for j in 1..bins {
            let q = values[j * n / bins];
            if q > *edges.last().unwrap() && q < values[n - 1] {
                edges.push(q);
            }
        }
        edges.push(values[n - 1]);
        let effective = edges.len() - 1;
        let name = data.aux_names()[f].clone();
        if effective < bins {
            log::warn!("feature {name}: tied quantiles collapsed {bins} requested bins to {effective}");
            warnings.push(BinningWarning { feature: name.clone(), requested: bins, effective });
        }
        axes.push(FeatureAxis::new(f, name, edges)?);
    }
    Ok((BinPartition::new(data.aux_dim(), axes)?, warnings))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::{Label, LabeledSample};
    use rand::{Rng, SeedableRng};

    fn dataset_1d(values: &[f64]) -> ScoredDataset {
        let samples = values
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                let label = if i % 2 == 0 { Label::Positive } else { Label::Negative };
                LabeledSample::new(label, 0.0, vec![v])
            })
            .collect();
        ScoredDataset::new(samples, vec!["x".into()]).unwrap()
    }

    #[test]
    fn example1_style_edges() {
        let data = dataset_1d(&[1.0, 5.0, 2.2, 3.7]);
        let p = make_equal_width_partition(&data, &[0], &[8]).unwrap();
        let edges = &p.axes()[0].edges;
        assert_eq!(edges.len(), 9);
        let interior: Vec<f64> = edges[1..8].to_vec();
        let expected = [1.5, 2.0, 2.5, 3.0, 3.5, 4.0, 4.5];
        for (a, b) in interior.iter().zip(expected) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
        assert_eq!(p.num_bins(), 10);
    }

    #[test]
    fn explicit_range_gives_122_bins_of_width_point_one() {
        let p = make_equal_width_partition_with_ranges(&["x1".into()], &[0], &[(-6.0, 6.0)], &[120]).unwrap();
        assert_eq!(p.num_bins(), 122);
        for w in p.axes()[0].edges.windows(2) {
            assert!((w[1] - w[0] - 0.1).abs() < 1e-9);
        }
        assert_eq!(p.assign_bin(&[-6.5]).unwrap(), 0);
        assert_eq!(p.assign_bin(&[6.5]).unwrap(), 121);
        assert_eq!(p.assign_bin(&[-5.95]).unwrap(), 1);
    }

    #[test]
    fn one_bin_per_feature() {
        let data = dataset_1d(&[0.0, 1.0, 0.5, 0.25]);
        let p = make_equal_width_partition(&data, &[0], &[1]).unwrap();
        assert_eq!(p.num_bins(), 3);
        let bins: Vec<usize> = p.assign_all(&data).unwrap();
        assert!(bins.iter().all(|&b| b == 1), "{bins:?}");
    }

    #[test]
    fn constant_feature_is_degenerate() {
        let data = dataset_1d(&[2.0, 2.0, 2.0]);
        assert!(matches!(
            make_equal_width_partition(&data, &[0], &[4]).unwrap_err(),
            OerError::DegenerateFeature { .. }
        ));
        assert!(make_quantile_partition(&data, &[0], &[4]).is_err());
    }

    #[test]
    fn lookup_and_tie_break() {
        let p = BinPartition::from_edges(vec![1.5, 2.0, 2.5, 3.0, 3.5, 4.0, 4.5]).unwrap();
        assert_eq!(p.assign_bin(&[1.7]).unwrap(), 1);
        assert_eq!(p.assign_bin(&[0.2]).unwrap(), 0);
        // an edge belongs to the interval above it
        assert_eq!(p.assign_bin(&[2.0]).unwrap(), 2);
        assert_eq!(p.assign_bin(&[1.5]).unwrap(), 1);
        // the top interior interval is closed
        assert_eq!(p.assign_bin(&[4.5]).unwrap(), 6);
        assert_eq!(p.assign_bin(&[4.6]).unwrap(), 7);
    }

    #[test]
    fn assign_errors() {
        let p = BinPartition::from_edges(vec![0.0, 1.0]).unwrap();
        assert!(p.assign_bin(&[0.5, 0.5]).is_err());
        assert!(p.assign_bin(&[f64::NAN]).is_err());
        assert!(BinPartition::from_edges(vec![1.0, 1.0]).is_err());
    }

    #[test]
    fn quantile_edges_on_uniform_data() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let values: Vec<f64> = (0..20_000).map(|_| rng.random::<f64>()).collect();
        let data = dataset_1d(&values);
        let (p, warnings) = make_quantile_partition(&data, &[0], &[4]).unwrap();
        assert!(warnings.is_empty());
        let edges = &p.axes()[0].edges;
        assert_eq!(edges.len(), 5);
        for (e, q) in edges[1..4].iter().zip([0.25, 0.5, 0.75]) {
            // sd of an empirical quantile at n = 20000 is below 0.004
            assert!((e - q).abs() < 0.015, "{e} vs {q}");
        }
    }

    #[test]
    fn quantile_ties_collapse_with_warning() {
        let mut values = vec![1.0; 90];
        values.extend((0..10).map(|i| 2.0 + i as f64));
        let data = dataset_1d(&values);
        let (p, warnings) = make_quantile_partition(&data, &[0], &[5]).unwrap();
        assert_eq!(warnings.len(), 1);
        assert!(warnings[0].effective < 5);
        assert_eq!(p.axes()[0].edges.len() - 1, warnings[0].effective);
    }

    #[test]
    fn quantile_single_bin_has_no_interior_edges() {
        let data = dataset_1d(&[3.0, 1.0, 2.0]);
        let (p, _) = make_quantile_partition(&data, &[0], &[1]).unwrap();
        assert_eq!(p.axes()[0].edges, vec![1.0, 3.0]);
    }

    #[test]
    fn grid_indexing_is_row_major() {
        let a = FeatureAxis::new(0, "a", vec![0.0, 1.0]).unwrap();
        let b = FeatureAxis::new(1, "b", vec![0.0, 1.0, 2.0]).unwrap();
        let p = BinPartition::new(2, vec![a, b]).unwrap();
        assert_eq!(p.num_bins(), 3 * 4);
        assert_eq!(p.assign_bin(&[-1.0, -1.0]).unwrap(), 0);
        assert_eq!(p.assign_bin(&[0.5, 1.5]).unwrap(), 4 + 2);
        assert_eq!(p.slots_of(6), vec![1, 2]);
    }

    #[test]
    fn json_round_trip() {
        let p = BinPartition::from_edges(vec![-1.0, 0.0, 2.5]).unwrap();
        let back = BinPartition::from_json(&p.to_json().unwrap()).unwrap();
        assert_eq!(p, back);
        assert!(BinPartition::from_json(r#"{"aux_dim":1,"axes":[{"feature":0,"name":"x","edges":[2.0,1.0]}]}"#).is_err());
    }
}
