use std::io::Write;

use super::{log_benefit_cost_ratio, predicted_operating_point, solve_closed_form, solve_gradient_from};
use super::{SolverConfig, ThresholdCurve};
use crate::error::{invalid, Result};
use crate::model::BinModel;

/// Score quantiles at which benefit-cost ratios are probed for the default grid.
const PROBE_QUANTILES: [f64; 9] = [0.001, 0.01, 0.05, 0.25, 0.5, 0.75, 0.95, 0.99, 0.999];
/// Bound on `|ln lambda|` so every grid value is a finite, normal `f64`.
const MAX_LOG_LAMBDA: f64 = 700.0;

/// `n` values log-spaced between `lo` and `hi` inclusive.
pub fn log_spaced(lo: f64, hi: f64, n: usize) -> Result<Vec<f64>> {
    if !(lo > 0.0 && hi.is_finite() && hi >= lo) {
        return invalid(format!("log-spaced range needs 0 < lo <= hi, got [{lo}, {hi}]"));
    }
    if n == 0 {
        return invalid("grid needs at least one point");
    }
    if n == 1 {
        return Ok(vec![lo]);
    }
    let (a, b) = (lo.ln(), hi.ln());
    Ok((0..n)
        .map(|i| {
            if i == 0 {
                lo
            } else if i == n - 1 {
                hi
            } else {
                (a + (b - a) * i as f64 / (n - 1) as f64).exp()
            }
        })
        .collect())
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Default `lambda` grid for tracing an ROC curve.
///
/// Benefit-cost ratios of every bin holding both classes are evaluated at the
/// score quantiles of `scores`; the grid is log-spaced over
/// `[r_min / 10, r_max * 10]`, with `ln lambda` capped to `[-700, 700]`.
pub fn default_lambda_grid(model: &BinModel, scores: &[f64], points: usize) -> Result<Vec<f64>> {
    if scores.is_empty() {
        return invalid("default lambda grid needs at least one score");
    }
    if points < 2 {
        return invalid("lambda grid needs at least two points");
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    let probes: Vec<f64> = PROBE_QUANTILES.iter().map(|&q| quantile(&sorted, q)).collect();

    let pooled = model.pooled.as_bin();
    let informative: Vec<_> = model.stats.iter().filter(|s| s.p_pos > 0.0 && s.p_neg > 0.0).collect();
    let bins = if informative.is_empty() { vec![&pooled] } else { informative };

    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for bin in bins {
        for &k in &probes {
            let r = log_benefit_cost_ratio(bin, k)?;
            lo = lo.min(r);
            hi = hi.max(r);
        }
    }
    let lo = (lo - std::f64::consts::LN_10).clamp(-MAX_LOG_LAMBDA, MAX_LOG_LAMBDA);
    let hi = (hi + std::f64::consts::LN_10).clamp(-MAX_LOG_LAMBDA, MAX_LOG_LAMBDA);
    log_spaced(lo.exp(), hi.exp(), points)
}

/// Threshold curves over a strictly increasing `lambda` grid.
///
/// Equal-variance models use the closed form; others are solved by gradient
/// ascent, each `lambda` warm-started from the previous solution.
pub fn sweep_lambda(model: &BinModel, lambda_grid: &[f64], config: &SolverConfig) -> Result<Vec<ThresholdCurve>> {
    if lambda_grid.is_empty() {
        return invalid("lambda grid is empty");
    }
    if lambda_grid.iter().any(|&l| !(l > 0.0 && l.is_finite())) {
        return invalid("lambda values must be positive and finite");
    }
    if lambda_grid.windows(2).any(|w| w[1] <= w[0]) {
        return invalid("lambda grid must be strictly increasing");
    }
    config.validate()?;
    if model.equal_variance {
        let clamp = config.clamp_for(model);
        return lambda_grid
            .iter()
            .map(|&l| {
                let mut curve = solve_closed_form(model, l.ln(), Some(clamp))?;
                curve.lambda = l;
                Ok(curve)
            })
            .collect();
    }
    let mut curves: Vec<ThresholdCurve> = Vec::with_capacity(lambda_grid.len());
    for &l in lambda_grid {
        let start = curves.last().map(|c| c.thresholds.as_slice());
        let curve = solve_gradient_from(model, l, config, start)?;
        if !curve.all_converged() {
            log::warn!("lambda {l}: {} bins did not converge", curve.converged.iter().filter(|&&c| !c).count());
        }
        curves.push(curve);
    }
    Ok(curves)
}

/// Writes one row per `(lambda, bin)`: `lambda,bin,k,converged,pred_fpr,pred_tpr`.
/// The predicted rates are those of the whole threshold vector.
pub fn write_threshold_table<W: Write>(sink: W, model: &BinModel, curves: &[ThresholdCurve]) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(["lambda", "bin", "k", "converged", "pred_fpr", "pred_tpr"])?;
    for curve in curves {
        let (fpr, tpr) = predicted_operating_point(model, curve)?;
        for (i, (&k, &c)) in curve.thresholds.iter().zip(&curve.converged).enumerate() {
            w.write_record([
                curve.lambda.to_string(),
                i.to_string(),
                k.to_string(),
                c.to_string(),
                fpr.to_string(),
                tpr.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
