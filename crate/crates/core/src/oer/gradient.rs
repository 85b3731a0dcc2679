use super::{bin_objective, check_lambda, log_weighted_densities, solve_closed_form_bin};
use super::{Init, LearningRate, SolverConfig, ThresholdCurve};
use crate::error::{invalid, Result};
use crate::model::{BinModel, BinStats};

/// Relative stationarity tolerance: `|p+ f - lambda p- g| / max(p+ f, lambda p- g)`.
const REL_TOL: f64 = 1e-9;
const COARSE_GRID: usize = 200;

/// Result of solving one bin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BinSolution {
    pub k: f64,
    pub converged: bool,
    pub iterations: usize,
}

/// Signed step direction of the ascent, normalized to `[-1, 1]`:
/// `(lambda p- g - p+ f) / max(p+ f, lambda p- g)`, computed in log space.
fn scaled_ascent(bin: &BinStats, lambda: f64, k: f64) -> (f64, f64) {
    let (a, b) = log_weighted_densities(bin, lambda, k);
    let residual = a.exp() - b.exp();
    let scaled = if a == f64::NEG_INFINITY && b == f64::NEG_INFINITY {
        0.0
    } else if a >= b {
        (b - a).exp() - 1.0
    } else {
        1.0 - (a - b).exp()
    };
    (scaled, residual)
}

/// Projected ascent from `start` until the bin is stationary or pinned at a
/// bound with the gradient pointing outward.
fn ascend(bin: &BinStats, lambda: f64, start: f64, clamp: f64, eps: f64, cfg: &SolverConfig) -> BinSolution {
    let sigma_min = bin.sigma_pos.min(bin.sigma_neg);
    let mut k = start.clamp(-clamp, clamp);
    let mut step = match cfg.learning_rate {
        LearningRate::Adaptive { scale } => scale * sigma_min,
        LearningRate::Fixed(rate) => rate,
    };
    // larger steps could jump over the whole basin of a narrow class peak
    let max_step = match cfg.learning_rate {
        LearningRate::Adaptive { .. } => sigma_min.min(2.0 * clamp),
        LearningRate::Fixed(_) => 2.0 * clamp,
    };
    let mut prev_sign = 0.0;
    for it in 0..cfg.max_iterations {
        let (scaled, residual) = scaled_ascent(bin, lambda, k);
        let pinned = (k <= -clamp && scaled <= 0.0) || (k >= clamp && scaled >= 0.0);
        let stationary = match cfg.learning_rate {
            LearningRate::Adaptive { .. } => residual.abs() <= eps && scaled.abs() <= REL_TOL,
            LearningRate::Fixed(_) => residual.abs() <= eps,
        };
        if pinned || stationary {
            return BinSolution { k, converged: true, iterations: it };
        }
        let next = match cfg.learning_rate {
            LearningRate::Adaptive { .. } => {
                let sign = scaled.signum();
                if prev_sign != 0.0 && sign != prev_sign {
                    step *= 0.5;
                } else if prev_sign != 0.0 {
                    step = (step * 1.2).min(max_step);
                }
                prev_sign = sign;
                if step <= 1e-15 * (1.0 + k.abs()) {
                    // no representable progress left
                    return BinSolution { k, converged: residual.abs() <= eps, iterations: it };
                }
                k + step * scaled
            }
            LearningRate::Fixed(rate) => k - rate * residual,
        };
        k = next.clamp(-clamp, clamp);
    }
    let (scaled, residual) = scaled_ascent(bin, lambda, k);
    let pinned = (k <= -clamp && scaled <= 0.0) || (k >= clamp && scaled >= 0.0);
    BinSolution { k, converged: pinned || residual.abs() <= eps, iterations: cfg.max_iterations }
}

fn is_bound(k: f64, clamp: f64) -> bool {
    k <= -clamp || k >= clamp
}

/// Interior point that is not a local maximum (ascent started on a minimum).
fn is_interior_minimum(bin: &BinStats, lambda: f64, k: f64) -> bool {
    let h = 1e-6 * bin.sigma_pos.min(bin.sigma_neg) * (1.0 + k.abs());
    let (left, _) = scaled_ascent(bin, lambda, k - h);
    let (right, _) = scaled_ascent(bin, lambda, k + h);
    left < 0.0 || right > 0.0
}

fn initial_point(bin: &BinStats, lambda: f64, clamp: f64, init: Init) -> f64 {
    match init {
        Init::Zero => 0.0,
        Init::ClosedForm => {
            let sigma = ((bin.sigma_pos.powi(2) + bin.sigma_neg.powi(2)) / 2.0).sqrt();
            solve_closed_form_bin(bin, sigma, lambda.ln(), clamp).unwrap_or(0.0)
        }
        Init::Grid => (0..=COARSE_GRID)
            .map(|i| -clamp + 2.0 * clamp * i as f64 / COARSE_GRID as f64)
            .map(|k| (k, bin_objective(bin, lambda, k)))
            .fold((0.0, f64::NEG_INFINITY), |best, (k, v)| if v > best.1 { (k, v) } else { best }).0,
    }
    .clamp(-clamp, clamp)
}

/// Solves one bin by projected gradient ascent from `start`.
///
/// The Gaussian stationarity condition has at most two roots, so the bin
/// objective has at most one interior maximum besides the two bounds. After
/// the primary ascent, each bound that is itself a projected maximum becomes a
/// candidate; when the primary run ended on a bound (or stalled on a minimum),
/// ascents are also started from the bounds and from the best point of a
/// coarse objective grid. The candidate with the largest objective wins.
pub fn solve_bin_gradient(
    bin: &BinStats,
    lambda: f64,
    start: f64,
    clamp: f64,
    eps: f64,
    cfg: &SolverConfig,
) -> BinSolution {
    let primary = ascend(bin, lambda, start, clamp, eps, cfg);
    let explore = is_bound(primary.k, clamp) || is_interior_minimum(bin, lambda, primary.k);
    let mut candidates = vec![primary];
    for bound in [-clamp, clamp] {
        if primary.k == bound {
            continue;
        }
        let (scaled, _) = scaled_ascent(bin, lambda, bound);
        let outward = if bound < 0.0 { scaled <= 0.0 } else { scaled >= 0.0 };
        if outward {
            candidates.push(BinSolution { k: bound, converged: true, iterations: 0 });
        } else if explore {
            candidates.push(ascend(bin, lambda, bound, clamp, eps, cfg));
        }
    }
    if explore {
        let coarse = initial_point(bin, lambda, clamp, Init::Grid);
        candidates.push(ascend(bin, lambda, coarse, clamp, eps, cfg));
    }
    let iterations = candidates.iter().map(|c| c.iterations).sum();
    let best = candidates
        .into_iter()
        .map(|c| (bin_objective(bin, lambda, c.k), c))
        .fold(None::<(f64, BinSolution)>, |best, (v, c)| match best {
            Some((bv, _)) if bv >= v => best,
            _ => Some((v, c)),
        })
        .map(|(_, c)| c)
        .unwrap_or(primary);
    BinSolution { iterations, ..best }
}

/// Gradient-ascent thresholds for every bin at one `lambda`.
pub fn solve_gradient(model: &BinModel, lambda: f64, config: &SolverConfig) -> Result<ThresholdCurve> {
    solve_gradient_from(model, lambda, config, None)
}

/// As [`solve_gradient`], optionally warm-started from a previous threshold
/// vector instead of `config.init`.
pub fn solve_gradient_from(
    model: &BinModel,
    lambda: f64,
    config: &SolverConfig,
    start: Option<&[f64]>,
) -> Result<ThresholdCurve> {
    check_lambda(lambda)?;
    config.validate()?;
    if let Some(s) = start {
        if s.len() != model.num_bins() {
            return invalid("warm start has the wrong length");
        }
    }
    let clamp = config.clamp_for(model);
    let n = model.num_bins();
    let eps = config.stop_for(n) / (n as f64).sqrt();

    let mut pooled: Option<BinSolution> = None;
    let mut thresholds = Vec::with_capacity(n);
    let mut converged = Vec::with_capacity(n);
    let mut iterations = 0;
    for (i, bin) in model.stats.iter().enumerate() {
        let solution = if bin.is_empty() {
            *pooled.get_or_insert_with(|| {
                let p = model.pooled.as_bin();
                let s0 = initial_point(&p, lambda, clamp, config.init);
                solve_bin_gradient(&p, lambda, s0, clamp, eps, config)
            })
        } else {
            let s0 = match start {
                Some(s) => s[i],
                None => initial_point(bin, lambda, clamp, config.init),
            };
            solve_bin_gradient(bin, lambda, s0, clamp, eps, config)
        };
        thresholds.push(solution.k);
        converged.push(solution.converged);
        iterations = iterations.max(solution.iterations);
    }
    Ok(ThresholdCurve { lambda, clamp, thresholds, converged, iterations })
}
