//! Seeded synthetic datasets.
//!
//! Two fixed worlds with a single auxiliary feature `x1` and score `x2`:
//!
//! - example 1: `x1 ~ U[1, 5]`; positives score `N(x1, 1)`, negatives `N(0, 1)`.
//!   The feature changes how far apart the classes are.
//! - example 2: positives `(x1, x2) ~ N((0, 1), 2I)`, negatives `N((0, 0), I)`.
//!   The feature changes the class balance and the spread.
//!
//! Both draw the label first with `P(y = +1) = 0.5`. Custom worlds sample a
//! bin from the class priors and a Gaussian score from that bin.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;
use serde::{Deserialize, Serialize};

use crate::dataio::{Label, LabeledSample, ScoredDataset};
use crate::error::{OerError, Result};
use crate::model::BinStats;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExampleId {
    Example1,
    Example2,
    Custom,
}

impl std::str::FromStr for ExampleId {
    type Err = OerError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "example1" => Ok(ExampleId::Example1),
            "example2" => Ok(ExampleId::Example2),
            "custom" => Ok(ExampleId::Custom),
            other => Err(OerError::Spec(format!("unknown example {other:?}"))),
        }
    }
}

/// Description of a synthetic dataset. `bins` and `positive_rate` are only
/// used by custom worlds; only the means, deviations and priors of each bin
/// are read.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub example: ExampleId,
    pub n: usize,
    pub seed: u64,
    #[serde(default = "half")]
    pub positive_rate: f64,
    #[serde(default)]
    pub bins: Vec<BinStats>,
}

fn half() -> f64 {
    0.5
}

fn check_n(n: usize) -> Result<()> {
    if n == 0 {
        return Err(OerError::Spec("sample count must be at least 1".into()));
    }
    Ok(())
}

fn normal(mu: f64, sigma: f64) -> Normal<f64> {
    Normal::new(mu, sigma).expect("constant parameters are valid")
}

fn x1_dataset(samples: Vec<LabeledSample>) -> Result<ScoredDataset> {
    ScoredDataset::new(samples, vec!["x1".into()])
}

pub fn gen_example1(n: usize, seed: u64) -> Result<ScoredDataset> {
    check_n(n)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let unit = normal(0.0, 1.0);
    let samples = (0..n)
        .map(|_| {
            let positive = rng.random_bool(0.5);
            let x1 = rng.random_range(1.0..=5.0);
            let z = unit.sample(&mut rng);
            if positive {
                LabeledSample::new(Label::Positive, x1 + z, vec![x1])
            } else {
                LabeledSample::new(Label::Negative, z, vec![x1])
            }
        })
        .collect();
    x1_dataset(samples)
}

pub fn gen_example2(n: usize, seed: u64) -> Result<ScoredDataset> {
    check_n(n)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let unit = normal(0.0, 1.0);
    let wide = 2f64.sqrt();
    let samples = (0..n)
        .map(|_| {
            let positive = rng.random_bool(0.5);
            let (a, b) = (unit.sample(&mut rng), unit.sample(&mut rng));
            if positive {
                LabeledSample::new(Label::Positive, 1.0 + wide * b, vec![wide * a])
            } else {
                LabeledSample::new(Label::Negative, b, vec![a])
            }
        })
        .collect();
    x1_dataset(samples)
}

/// Samples the per-bin Gaussian world of `spec.bins`; the auxiliary feature
/// `bin` holds the bin index.
pub fn gen_custom(spec: &SynthSpec) -> Result<ScoredDataset> {
    check_n(spec.n)?;
    if spec.bins.is_empty() {
        return Err(OerError::Spec("custom world needs at least one bin".into()));
    }
    if !(spec.positive_rate > 0.0 && spec.positive_rate < 1.0) {
        return Err(OerError::Spec("positive rate must lie strictly between 0 and 1".into()));
    }
    for (i, b) in spec.bins.iter().enumerate() {
        b.validate().map_err(|e| OerError::Spec(format!("bin {i}: {e}")))?;
    }
    let total_pos: f64 = spec.bins.iter().map(|b| b.p_pos).sum();
    let total_neg: f64 = spec.bins.iter().map(|b| b.p_neg).sum();
    if (total_pos - 1.0).abs() > 1e-9 || (total_neg - 1.0).abs() > 1e-9 {
        return Err(OerError::Spec(format!("priors sum to {total_pos} / {total_neg}, expected 1")));
    }
    let pick_pos = WeightedIndex::new(spec.bins.iter().map(|b| b.p_pos)).map_err(|e| OerError::Spec(e.to_string()))?;
    let pick_neg = WeightedIndex::new(spec.bins.iter().map(|b| b.p_neg)).map_err(|e| OerError::Spec(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let unit = normal(0.0, 1.0);
    let samples = (0..spec.n)
        .map(|_| {
            let positive = rng.random_bool(spec.positive_rate);
            let (label, i) = if positive {
                (Label::Positive, pick_pos.sample(&mut rng))
            } else {
                (Label::Negative, pick_neg.sample(&mut rng))
            };
            let b = &spec.bins[i];
            let z = unit.sample(&mut rng);
            let score = if positive { b.mu_pos + b.sigma_pos * z } else { b.mu_neg + b.sigma_neg * z };
            LabeledSample::new(label, score, vec![i as f64])
        })
        .collect();
    ScoredDataset::new(samples, vec!["bin".into()])
}

/// Dispatches on `spec.example`.
pub fn generate(spec: &SynthSpec) -> Result<ScoredDataset> {
    match spec.example {
        ExampleId::Example1 => gen_example1(spec.n, spec.seed),
        ExampleId::Example2 => gen_example2(spec.n, spec.seed),
        ExampleId::Custom => gen_custom(spec),
    }
}
