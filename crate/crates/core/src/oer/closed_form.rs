use super::ThresholdCurve;
use crate::error::{invalid, OerError, Result};
use crate::model::{BinModel, BinStats};

/// Equal-variance optimum of one bin with common deviation `sigma`.
///
/// `lambda_log` is the natural log of the benefit-cost ratio. When
/// `mu_pos > mu_neg` the optimum is
/// `sigma^2 (ln(p-/p+) + lambda_log) / (mu_pos - mu_neg) + (mu_pos + mu_neg) / 2`.
/// When `mu_pos < mu_neg` that stationary point is a minimum and the optimum
/// sits on whichever bound is better: `-K` when `p+ >= lambda p-`, else `K`.
pub fn solve_closed_form_bin(bin: &BinStats, sigma: f64, lambda_log: f64, clamp: f64) -> Result<f64> {
    if !lambda_log.is_finite() {
        return invalid("log benefit-cost ratio must be finite");
    }
    let gap = bin.mu_pos - bin.mu_neg;
    if gap == 0.0 {
        return Err(OerError::DegenerateBin {
            bin: 0,
            reason: "equal class means".into(),
        });
    }
    let ln_pos = bin.p_pos.ln();
    let ln_neg = bin.p_neg.ln();
    if gap > 0.0 {
        let k = sigma * sigma * (ln_neg - ln_pos + lambda_log) / gap + 0.5 * (bin.mu_pos + bin.mu_neg);
        Ok(k.clamp(-clamp, clamp))
    } else if ln_pos >= lambda_log + ln_neg {
        Ok(-clamp)
    } else {
        Ok(clamp)
    }
}

/// Closed-form thresholds for an equal-variance model.
///
/// Bins without any training sample take the pooled single-bin solution.
pub fn solve_closed_form(model: &BinModel, lambda_log: f64, clamp: Option<f64>) -> Result<ThresholdCurve> {
    let clamp = clamp.unwrap_or_else(|| model.default_clamp());
    if !(clamp > 0.0 && clamp.is_finite()) {
        return invalid("clamp bound must be positive and finite");
    }
    let mut pooled_k = None;
    let mut thresholds = Vec::with_capacity(model.num_bins());
    for (i, bin) in model.stats.iter().enumerate() {
        let k = if bin.is_empty() {
            match pooled_k {
                Some(k) => k,
                None => {
                    let p = model.pooled;
                    let sigma = ((p.sigma_pos.powi(2) + p.sigma_neg.powi(2)) / 2.0).sqrt();
                    let k = solve_closed_form_bin(&p.as_bin(), sigma, lambda_log, clamp)
                        .map_err(|e| rename_bin(e, i))?;
                    pooled_k = Some(k);
                    k
                }
            }
        } else {
            if !bin.is_equal_variance() {
                return invalid(format!(
                    "bin {i} has unequal deviations ({} vs {}); the closed form needs an equal-variance model",
                    bin.sigma_pos, bin.sigma_neg
                ));
            }
            solve_closed_form_bin(bin, bin.sigma_pos, lambda_log, clamp).map_err(|e| rename_bin(e, i))?
        };
        thresholds.push(k);
    }
    Ok(ThresholdCurve {
        lambda: lambda_log.exp(),
        clamp,
        converged: vec![true; thresholds.len()],
        thresholds,
        iterations: 0,
    })
}

fn rename_bin(err: OerError, bin: usize) -> OerError {
    match err {
        OerError::DegenerateBin { reason, .. } => OerError::DegenerateBin { bin, reason },
        other => other,
    }
}
