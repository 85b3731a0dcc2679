//! Brute-force maximizer of a single bin's objective.
//!
//! The oracle never looks at densities or stationarity: it evaluates the
//! objective on a dense grid over `[-K, K]` and refines the best cell with a
//! golden-section search. To locate optima deep in the tails, objective values
//! are kept as a constant part plus tail probabilities stored as logarithms,
//! so two nearby values compare correctly even when both differ from the
//! constant by less than one ulp.

use std::cmp::Ordering;

use super::check_lambda;
use crate::error::{invalid, Result};
use crate::model::{std_sf, BinStats};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// `ln(1 - Φ(z))`, accurate for arbitrarily large `z`.
pub(crate) fn ln_std_sf(z: f64) -> f64 {
    if z < 5.0 {
        return std_sf(z).ln();
    }
    // Mills ratio by continued fraction, evaluated bottom-up
    let mut t = z;
    for j in (1..=120).rev() {
        t = z + j as f64 / t;
    }
    -0.5 * z * z - LN_SQRT_2PI - t.ln()
}

/// Objective value `base + sum(sign * exp(log))`.
#[derive(Debug, Clone, Copy)]
struct Value {
    pos_base: bool,
    neg_base: bool,
    terms: [(f64, f64); 2],
}

struct Objective {
    bin: BinStats,
    w_pos: f64,
    w_neg: f64,
    ln_w_pos: f64,
    ln_w_neg: f64,
}

impl Objective {
    fn new(bin: &BinStats, lambda: f64) -> Self {
        let w_pos = bin.p_pos;
        let w_neg = lambda * bin.p_neg;
        Self { bin: *bin, w_pos, w_neg, ln_w_pos: w_pos.ln(), ln_w_neg: w_neg.ln() }
    }

    fn eval(&self, k: f64) -> Value {
        let zp = (k - self.bin.mu_pos) / self.bin.sigma_pos;
        let zn = (k - self.bin.mu_neg) / self.bin.sigma_neg;
        // p+ Q(zp)  ==  p+ - p+ Q(-zp)
        let (pos_base, pos_term) = if zp >= 0.0 {
            (false, (1.0, self.ln_w_pos + ln_std_sf(zp)))
        } else {
            (true, (-1.0, self.ln_w_pos + ln_std_sf(-zp)))
        };
        // -w Q(zn)  ==  -w + w Q(-zn)
        let (neg_base, neg_term) = if zn >= 0.0 {
            (false, (-1.0, self.ln_w_neg + ln_std_sf(zn)))
        } else {
            (true, (1.0, self.ln_w_neg + ln_std_sf(-zn)))
        };
        Value { pos_base, neg_base, terms: [pos_term, neg_term] }
    }

    fn compare(&self, a: &Value, b: &Value) -> Ordering {
        let flag = |x: bool| if x { 1.0 } else { 0.0 };
        let base = (flag(a.pos_base) - flag(b.pos_base)) * self.w_pos
            - (flag(a.neg_base) - flag(b.neg_base)) * self.w_neg;
        let terms = a
            .terms
            .iter()
            .copied()
            .chain(b.terms.iter().map(|&(s, l)| (-s, l)));
        let top = a
            .terms
            .iter()
            .chain(&b.terms)
            .map(|t| t.1)
            .fold(f64::NEG_INFINITY, f64::max);
        let tail = if top == f64::NEG_INFINITY {
            0.0
        } else {
            terms.map(|(s, l)| s * (l - top).exp()).sum::<f64>()
        };
        let diff = if base == 0.0 { tail } else { base + tail * top.exp() };
        diff.partial_cmp(&0.0).unwrap_or(Ordering::Equal)
    }
}

fn golden_max(obj: &Objective, mut lo: f64, mut hi: f64) -> (f64, Value) {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let mut f1 = obj.eval(x1);
    let mut f2 = obj.eval(x2);
    for _ in 0..400 {
        if hi - lo <= 4.0 * f64::EPSILON * (1.0 + lo.abs().max(hi.abs())) {
            break;
        }
        if obj.compare(&f1, &f2) != Ordering::Less {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            f1 = obj.eval(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            f2 = obj.eval(x2);
        }
    }
    if obj.compare(&f1, &f2) != Ordering::Less {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

/// Threshold in `[-clamp, clamp]` maximizing `p+ (1 - F(k)) - lambda p- (1 - G(k))`.
///
/// `resolution + 1` equally spaced grid points are evaluated; the best cell
/// and its neighbours are then refined by golden-section search and the
/// result compared with both bounds.
pub fn grid_oracle(bin: &BinStats, lambda: f64, clamp: f64, resolution: usize) -> Result<f64> {
    check_lambda(lambda)?;
    bin.validate()?;
    if resolution < 1000 {
        return invalid("oracle resolution must be at least 1000");
    }
    if !(clamp > 0.0 && clamp.is_finite()) {
        return invalid("clamp bound must be positive and finite");
    }
    if bin.is_empty() {
        // objective is identically zero
        return Ok(0.0);
    }
    let obj = Objective::new(bin, lambda);
    let h = 2.0 * clamp / resolution as f64;
    let grid = |j: usize| if j == resolution { clamp } else { -clamp + h * j as f64 };

    let mut best_j = 0;
    let mut best = obj.eval(grid(0));
    for j in 1..=resolution {
        let v = obj.eval(grid(j));
        if obj.compare(&v, &best) == Ordering::Greater {
            best = v;
            best_j = j;
        }
    }
    let lo = grid(best_j.saturating_sub(1));
    let hi = grid((best_j + 1).min(resolution));
    let (k_refined, v_refined) = golden_max(&obj, lo, hi);

    let candidates = [(grid(best_j), best), (-clamp, obj.eval(-clamp)), (clamp, obj.eval(clamp))];
    let (k, _) = candidates.into_iter().fold((k_refined, v_refined), |acc, c| {
        if obj.compare(&c.1, &acc.1) == Ordering::Greater {
            c
        } else {
            acc
        }
    });
    Ok(k)
}
