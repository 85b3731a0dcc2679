//! Optimal per-bin thresholds.
//!
//! For a common benefit-cost ratio `lambda > 0` every bin maximizes
//!
//! ```text
//! J_i(k) = p_i+ (1 - F_i(k)) - lambda * p_i- (1 - G_i(k))
//! ```
//!
//! independently, where `F_i` / `G_i` are the fitted Gaussian score CDFs of
//! the positive / negative class. An interior optimum satisfies
//! `p_i+ f_i(k) = lambda * p_i- g_i(k)`. Thresholds are confined to `[-K, K]`
//! because the optimum is at infinity whenever the two deviations differ and
//! `lambda` lies beyond the ratio's extremum.
//!
//! Three solvers are provided: projected gradient ascent, the closed form for
//! equal variances, and a brute-force grid oracle used for verification.

mod closed_form;
mod gradient;
mod oracle;
mod sweep;

use serde::{Deserialize, Serialize};

pub use closed_form::{solve_closed_form, solve_closed_form_bin};
pub use gradient::{solve_bin_gradient, solve_gradient, solve_gradient_from, BinSolution};
pub use oracle::grid_oracle;
pub use sweep::{default_lambda_grid, log_spaced, sweep_lambda, write_threshold_table};

use crate::error::{invalid, OerError, Result};
use crate::model::{log_density, BinModel, BinStats};

/// Threshold vector for one value of `lambda`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdCurve {
    pub lambda: f64,
    pub clamp: f64,
    pub thresholds: Vec<f64>,
    /// Per-bin convergence flags.
    pub converged: Vec<bool>,
    /// Largest iteration count over bins.
    pub iterations: usize,
}

impl ThresholdCurve {
    pub fn all_converged(&self) -> bool {
        self.converged.iter().all(|&c| c)
    }

    pub fn len(&self) -> usize {
        self.thresholds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.thresholds.is_empty()
    }
}

/// Step-size rule for gradient ascent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LearningRate {
    /// Per-bin adaptive rate: each step moves by at most `scale * min(sigma)`
    /// initially, the step is divided by the larger of the two weighted
    /// densities, halved whenever the gradient changes sign and grown by 20%
    /// while it does not.
    Adaptive { scale: f64 },
    /// One global rate applied to the raw gradient.
    Fixed(f64),
}

/// Starting point for gradient ascent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Init {
    Zero,
    /// Equal-variance closed form using the bin's pooled deviation.
    ClosedForm,
    /// Best point of a coarse objective grid over `[-K, K]`.
    Grid,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub learning_rate: LearningRate,
    /// Stop when the residual norm falls below this; `None` means
    /// `1e-8 * sqrt(N)`.
    pub stop_threshold: Option<f64>,
    pub max_iterations: usize,
    /// Clamp bound `K`; `None` uses [`BinModel::default_clamp`].
    pub clamp: Option<f64>,
    pub init: Init,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            learning_rate: LearningRate::Adaptive { scale: 0.1 },
            stop_threshold: None,
            max_iterations: 100_000,
            clamp: None,
            init: Init::ClosedForm,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        match self.learning_rate {
            LearningRate::Adaptive { scale } if !(scale > 0.0 && scale.is_finite()) => {
                return invalid("adaptive learning-rate scale must be positive");
            }
            LearningRate::Fixed(rate) if !(rate > 0.0 && rate.is_finite()) => {
                return invalid("learning rate must be positive");
            }
            _ => {}
        }
        if let Some(eps) = self.stop_threshold {
            if !(eps > 0.0) {
                return invalid("stop threshold must be positive");
            }
        }
        if let Some(k) = self.clamp {
            if !(k > 0.0 && k.is_finite()) {
                return invalid("clamp bound must be positive and finite");
            }
        }
        if self.max_iterations == 0 {
            return invalid("max_iterations must be at least 1");
        }
        Ok(())
    }

    pub(crate) fn clamp_for(&self, model: &BinModel) -> f64 {
        self.clamp.unwrap_or_else(|| model.default_clamp())
    }

    pub(crate) fn stop_for(&self, bins: usize) -> f64 {
        self.stop_threshold.unwrap_or(1e-8 * (bins as f64).sqrt())
    }
}

pub(crate) fn check_lambda(lambda: f64) -> Result<()> {
    if lambda > 0.0 && lambda.is_finite() {
        Ok(())
    } else {
        invalid(format!("lambda must be positive and finite, got {lambda}"))
    }
}

/// `ln(p+ f(k))` and `ln(lambda p- g(k))`; `-inf` for an empty class.
pub(crate) fn log_weighted_densities(bin: &BinStats, lambda: f64, k: f64) -> (f64, f64) {
    let pos = if bin.p_pos > 0.0 {
        bin.p_pos.ln() + log_density(k, bin.mu_pos, bin.sigma_pos)
    } else {
        f64::NEG_INFINITY
    };
    let neg = if bin.p_neg > 0.0 {
        (lambda * bin.p_neg).ln() + log_density(k, bin.mu_neg, bin.sigma_neg)
    } else {
        f64::NEG_INFINITY
    };
    (pos, neg)
}

/// `p+ f(k) - lambda p- g(k)`, the negated derivative of the bin objective.
pub fn stationarity_residual(bin: &BinStats, lambda: f64, k: f64) -> f64 {
    let (a, b) = log_weighted_densities(bin, lambda, k);
    a.exp() - b.exp()
}

/// Natural log of the benefit-cost ratio `p+ f(k) / (p- g(k))`.
pub fn log_benefit_cost_ratio(bin: &BinStats, k: f64) -> Result<f64> {
    let (a, b) = log_weighted_densities(bin, 1.0, k);
    match (bin.p_pos > 0.0, bin.p_neg > 0.0) {
        (false, false) => Err(OerError::UndefinedBin { bin: 0 }),
        (_, false) => Ok(f64::INFINITY),
        (false, true) => Ok(f64::NEG_INFINITY),
        (true, true) => Ok(a - b),
    }
}

/// Benefit-cost ratio `p+ f(k) / (p- g(k))` of a Gaussian bin.
///
/// Returns `+inf` when the bin holds no negatives. A bin with no samples of
/// either class is an error.
pub fn benefit_cost_ratio(bin: &BinStats, k: f64) -> Result<f64> {
    log_benefit_cost_ratio(bin, k).map(f64::exp)
}

/// Objective `p+ (1 - F(k)) - lambda p- (1 - G(k))` of one bin.
pub fn bin_objective(bin: &BinStats, lambda: f64, k: f64) -> f64 {
    let mut value = 0.0;
    if bin.p_pos > 0.0 {
        value += bin.p_pos * bin.tpr_at(k);
    }
    if bin.p_neg > 0.0 {
        value -= lambda * bin.p_neg * bin.fpr_at(k);
    }
    value
}

/// Model-predicted `(fpr, tpr)` of a threshold vector.
pub fn predicted_operating_point(model: &BinModel, curve: &ThresholdCurve) -> Result<(f64, f64)> {
    if curve.len() != model.num_bins() {
        return invalid(format!(
            "threshold vector has {} entries, model has {} bins",
            curve.len(),
            model.num_bins()
        ));
    }
    let (fpr, tpr) = model
        .stats
        .iter()
        .zip(&curve.thresholds)
        .fold((0.0, 0.0), |(fpr, tpr), (s, &k)| {
            (fpr + s.p_neg * s.fpr_at(k), tpr + s.p_pos * s.tpr_at(k))
        });
    Ok((fpr.clamp(0.0, 1.0), tpr.clamp(0.0, 1.0)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn bin(mu_pos: f64, sigma_pos: f64, mu_neg: f64, sigma_neg: f64) -> BinStats {
        BinStats::from_params(mu_pos, sigma_pos, mu_neg, sigma_neg, 0.5, 0.5)
    }

    #[test]
    fn ratio_at_symmetric_midpoint_is_one() {
        assert_abs_diff_eq!(benefit_cost_ratio(&bin(1.0, 1.0, -1.0, 1.0), 0.0).unwrap(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn ratio_minimum_when_positive_spread_is_wider() {
        let b = bin(0.0, 2.0, 0.0, 1.0);
        // grid search for the minimum of the ratio
        let (k_min, r_min) = (-4000..=4000)
            .map(|i| i as f64 * 1e-3)
            .map(|k| (k, benefit_cost_ratio(&b, k).unwrap()))
            .fold((f64::NAN, f64::INFINITY), |acc, (k, r)| if r < acc.1 { (k, r) } else { acc });
        assert_abs_diff_eq!(k_min, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(r_min, 0.5, epsilon = 1e-12);
        for k in [-1.5, 0.3, 2.0] {
            assert_abs_diff_eq!(benefit_cost_ratio(&b, k).unwrap(), 0.5 * (3.0 * k * k / 8.0).exp(), epsilon = 1e-12);
        }
    }

    #[test]
    fn ratio_equals_two_at_shifted_midpoint() {
        let k = 1.0 + std::f64::consts::LN_2 / 2.0;
        assert_abs_diff_eq!(benefit_cost_ratio(&bin(2.0, 1.0, 0.0, 1.0), k).unwrap(), 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(benefit_cost_ratio(&bin(2.0, 1.0, 0.0, 1.0), 1.3466).unwrap(), 2.0, epsilon = 1e-3);
    }

    #[test]
    fn ratio_degenerate_priors() {
        let no_neg = BinStats { p_neg: 0.0, ..bin(1.0, 1.0, 0.0, 1.0) };
        assert_eq!(benefit_cost_ratio(&no_neg, 0.3).unwrap(), f64::INFINITY);
        let empty = BinStats { p_pos: 0.0, ..no_neg };
        assert!(matches!(benefit_cost_ratio(&empty, 0.3), Err(OerError::UndefinedBin { .. })));
    }

    #[test]
    fn predicted_point_single_bin() {
        let model = BinModel::single(bin(1.0, 1.0, 0.0, 1.0)).unwrap();
        let curve = |k: f64| ThresholdCurve { lambda: 1.0, clamp: 50.0, thresholds: vec![k], converged: vec![true], iterations: 0 };
        let (fpr, tpr) = predicted_operating_point(&model, &curve(0.5)).unwrap();
        assert_abs_diff_eq!(tpr, 0.691_462_461_274_013, epsilon = 1e-12);
        assert_abs_diff_eq!(fpr, 0.308_537_538_725_987, epsilon = 1e-12);
        assert_eq!(predicted_operating_point(&model, &curve(-50.0)).unwrap(), (1.0, 1.0));
        let (fpr, tpr) = predicted_operating_point(&model, &curve(50.0)).unwrap();
        assert!(fpr < 1e-300 && tpr < 1e-200);
        let wrong = ThresholdCurve { thresholds: vec![0.0, 0.0], converged: vec![true; 2], ..curve(0.0) };
        assert!(predicted_operating_point(&model, &wrong).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(SolverConfig::default().validate().is_ok());
        assert!(SolverConfig { max_iterations: 0, ..Default::default() }.validate().is_err());
        assert!(SolverConfig { learning_rate: LearningRate::Fixed(-1.0), ..Default::default() }.validate().is_err());
        assert!(SolverConfig { clamp: Some(0.0), ..Default::default() }.validate().is_err());
    }
}
