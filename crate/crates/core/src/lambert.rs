//! Real branches of the Lambert W (product log) function.
//!
//! Halley iteration from a branch-specific initial guess. Arguments whose
//! magnitude would overflow or underflow an `f64` can be passed in log form
//! through [`lambert_w_exp`].

use std::f64::consts::E;

use crate::error::{KibamError, Result};

const MAX_ITER: usize = 50;
const TOL: f64 = 1e-15;
const NEG_INV_E: f64 = -1.0 / E;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    /// W0, defined on [-1/e, inf), values >= -1.
    Principal,
    /// W-1, defined on [-1/e, 0), values <= -1.
    MinusOne,
}

impl Branch {
    fn name(self) -> &'static str {
        match self {
            Branch::Principal => "principal",
            Branch::MinusOne => "minus-one",
        }
    }
}

/// Series around the branch point in p = ±sqrt(2(ex + 1)).
fn branch_point_series(p: f64) -> f64 {
    -1.0 + p - p * p / 3.0 + 11.0 / 72.0 * p * p * p - 43.0 / 540.0 * p.powi(4)
}

fn initial_guess(branch: Branch, x: f64) -> f64 {
    let q = (2.0 * (E * x + 1.0)).max(0.0);
    match branch {
        Branch::Principal => {
            if x < -0.25 {
                branch_point_series(q.sqrt())
            } else if x < 1.0 {
                // Padé-style start, good on [-1/4, 1)
                x * (1.0 + 4.0 / 3.0 * x) / (1.0 + 7.0 / 3.0 * x + 5.0 / 6.0 * x * x)
            } else {
                let l1 = x.ln();
                let l2 = l1.ln().max(0.0);
                l1 - l2 + if l1 > 0.0 { l2 / l1 } else { 0.0 }
            }
        }
        Branch::MinusOne => {
            if x < -0.25 {
                branch_point_series(-q.sqrt())
            } else {
                let l1 = (-x).ln();
                let l2 = (-l1).ln();
                l1 - l2 + l2 / l1
            }
        }
    }
}

fn halley(x: f64, mut w: f64) -> f64 {
    for _ in 0..MAX_ITER {
        let ew = w.exp();
        let f = w * ew - x;
        let wp1 = w + 1.0;
        if wp1 == 0.0 {
            break;
        }
        let denom = ew * wp1 - (w + 2.0) * f / (2.0 * wp1);
        if denom == 0.0 || !denom.is_finite() {
            break;
        }
        let step = f / denom;
        w -= step;
        if step.abs() <= TOL * (1.0 + w.abs()) {
            break;
        }
    }
    w
}

/// Evaluates `W_branch(x)`.
pub fn lambert_w(branch: Branch, x: f64) -> Result<f64> {
    let out_of_domain = || KibamError::OutOfDomain {
        branch: branch.name(),
        x,
    };
    if x.is_nan() {
        return Err(out_of_domain());
    }
    // allow a few ulps below -1/e to absorb rounding in the caller
    if x < NEG_INV_E * (1.0 + 4.0 * f64::EPSILON) {
        return Err(out_of_domain());
    }
    if x <= NEG_INV_E {
        return Ok(-1.0);
    }
    match branch {
        Branch::Principal => {
            if x == 0.0 {
                return Ok(0.0);
            }
            if x.is_infinite() {
                return Ok(f64::INFINITY);
            }
        }
        Branch::MinusOne => {
            if x >= 0.0 {
                return Err(out_of_domain());
            }
        }
    }
    let q = 2.0 * (E * x + 1.0);
    if q < 1e-14 {
        // Halley is ill-conditioned this close to the branch point
        let p = q.max(0.0).sqrt();
        return Ok(branch_point_series(if branch == Branch::Principal {
            p
        } else {
            -p
        }));
    }
    Ok(halley(x, initial_guess(branch, x)))
}

/// Evaluates `W_branch(sign * exp(ln_abs))` without forming the argument when
/// it would leave the `f64` range.
pub fn lambert_w_exp(branch: Branch, negative: bool, ln_abs: f64) -> Result<f64> {
    const SAFE: f64 = 700.0;
    if ln_abs.abs() <= SAFE {
        let x = if negative {
            -ln_abs.exp()
        } else {
            ln_abs.exp()
        };
        return lambert_w(branch, x);
    }
    let out_of_domain = |x: f64| KibamError::OutOfDomain {
        branch: branch.name(),
        x,
    };
    match (branch, negative, ln_abs > 0.0) {
        (Branch::Principal, false, true) => {
            // w + ln w = L
            let mut w = ln_abs - ln_abs.ln();
            for _ in 0..MAX_ITER {
                let g = w + w.ln() - ln_abs;
                let step = g / (1.0 + 1.0 / w);
                w -= step;
                if step.abs() <= TOL * w.abs() {
                    break;
                }
            }
            Ok(w)
        }
        (Branch::Principal, _, false) => {
            // |x| below 1e-304: W0(x) = x to full precision
            let x = ln_abs.exp();
            Ok(if negative { -x } else { x })
        }
        (Branch::MinusOne, true, false) => {
            // w + ln(-w) = L with w < -1
            let mut w = ln_abs - (-ln_abs).ln();
            for _ in 0..MAX_ITER {
                let g = w + (-w).ln() - ln_abs;
                let step = g / (1.0 + 1.0 / w);
                w -= step;
                if step.abs() <= TOL * w.abs() {
                    break;
                }
            }
            Ok(w)
        }
        (_, true, true) => Err(out_of_domain(f64::NEG_INFINITY)),
        (Branch::MinusOne, false, _) => Err(out_of_domain(ln_abs.exp())),
    }
}
