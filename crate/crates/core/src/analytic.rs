//! Continuous single-task random battery without capacity bounds, evaluated
//! by adaptive quadrature. Used as a reference for the grid solver.

use quadrature::double_exponential;

use crate::battery::{BatteryParams, Coefficients, Soc};
use crate::error::{KibamError, Result};
use crate::load::{LoadModel, DEFAULT_COVERAGE};

/// Absolute tolerance of the load integral in [`density_at`].
pub const DENSITY_TOL: f64 = 1e-10;
/// Absolute tolerance of [`power_probability`].
pub const POWER_TOL: f64 = 1e-4;

/// Joint density of the initial state of charge.
pub trait InitialDensity: Sync {
    fn density(&self, s: Soc) -> f64;
    /// Rectangle `(a range, b range)` outside which the density vanishes.
    fn support(&self) -> ((f64, f64), (f64, f64));
}

/// Uniform density on a rectangle of positive area.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UniformBox {
    a: (f64, f64),
    b: (f64, f64),
    height: f64,
}

impl UniformBox {
    pub fn new(a: (f64, f64), b: (f64, f64)) -> Result<Self> {
        if !(a.0 < a.1 && b.0 < b.1) || ![a.0, a.1, b.0, b.1].iter().all(|x| x.is_finite()) {
            return Err(KibamError::InvalidInit(format!(
                "degenerate box {a:?} x {b:?}"
            )));
        }
        Ok(UniformBox {
            a,
            b,
            height: 1.0 / ((a.1 - a.0) * (b.1 - b.0)),
        })
    }
}

impl InitialDensity for UniformBox {
    fn density(&self, s: Soc) -> f64 {
        if s.a >= self.a.0 && s.a <= self.a.1 && s.b >= self.b.0 && s.b <= self.b.1 {
            self.height
        } else {
            0.0
        }
    }

    fn support(&self) -> ((f64, f64), (f64, f64)) {
        (self.a, self.b)
    }
}

/// `∫ f` over `[lo, hi]` split at `breaks`, with absolute tolerance `tol`.
fn integrate<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, breaks: &[f64], tol: f64) -> Result<f64> {
    if !(hi > lo) {
        return Ok(0.0);
    }
    let mut pts: Vec<f64> = Vec::with_capacity(breaks.len() + 2);
    pts.push(lo);
    pts.extend(
        breaks
            .iter()
            .copied()
            .filter(|&x| x > lo && x < hi && x.is_finite()),
    );
    pts.push(hi);
    pts.sort_by(f64::total_cmp);
    pts.dedup_by(|x, y| (*x - *y).abs() <= 1e-14 * (1.0 + y.abs()));
    let pieces = (pts.len() - 1) as f64;
    let mut total = 0.0;
    let mut error = 0.0;
    for w in pts.windows(2) {
        let out = double_exponential::integrate(&f, w[0], w[1], tol / pieces);
        total += out.integral;
        error += out.error_estimate;
    }
    if !(error <= tol) || !total.is_finite() {
        return Err(KibamError::Quadrature {
            error,
            tolerance: tol,
        });
    }
    Ok(total)
}

/// `∫ h(i) g(i) di`, with kinks of `h` at `breaks`.
fn over_loads<F: Fn(f64) -> f64>(
    g: &LoadModel,
    range: (f64, f64),
    breaks: &[f64],
    tol: f64,
    h: F,
) -> Result<f64> {
    match g {
        LoadModel::Dirac(i) => Ok(h(*i)),
        LoadModel::Discrete(d) => Ok(d.points().iter().map(|&(i, w)| w * h(i)).sum()),
        _ => {
            let (wlo, whi) = g.window(DEFAULT_COVERAGE);
            let lo = wlo.max(range.0);
            let hi = whi.min(range.1);
            let mut all = breaks.to_vec();
            if let LoadModel::Normal { mean, .. } = g {
                all.push(*mean);
            }
            let density = |i: f64| g.density(i).unwrap_or(0.0);
            integrate(|i| h(i) * density(i), lo, hi, &all, tol)
        }
    }
}

/// Values of `t` with `p + t·v` on the edges of `[lo, hi]`, and the interval
/// of `t` keeping it inside.
fn affine_window(p: f64, v: f64, lo: f64, hi: f64) -> Option<(f64, f64)> {
    if v == 0.0 {
        return (p >= lo && p <= hi).then_some((f64::NEG_INFINITY, f64::INFINITY));
    }
    let (t1, t2) = ((lo - p) / v, (hi - p) / v);
    Some((t1.min(t2), t1.max(t2)))
}

/// Density of the unbounded state of charge after a task of `t` minutes
/// with random load `g`, at the point `(x, y)`.
pub fn density_at(
    params: &BatteryParams,
    f0: &dyn InitialDensity,
    g: &LoadModel,
    t: f64,
    at: Soc,
) -> Result<f64> {
    if !(t > 0.0) {
        return Err(KibamError::NonPositiveTime(t));
    }
    g.validate()?;
    let coeffs = params.coefficients(t)?;
    let jac = params.inverse_jacobian_det(t);
    let base = coeffs.invert(at, 0.0);
    let unit = coeffs.invert(at, 1.0);
    let dir = Soc::new(unit.a - base.a, unit.b - base.b);
    let (sa, sb) = f0.support();
    // loads whose preimage lies inside the support rectangle
    let (Some(wa), Some(wb)) = (
        affine_window(base.a, dir.a, sa.0, sa.1),
        affine_window(base.b, dir.b, sb.0, sb.1),
    ) else {
        return Ok(0.0);
    };
    let range = (wa.0.max(wb.0), wa.1.min(wb.1));
    let pre = |i: f64| Soc::new(base.a + i * dir.a, base.b + i * dir.b);
    over_loads(g, range, &[], DENSITY_TOL, |i| f0.density(pre(i)) * jac)
}

/// Inverse of `[b; i] ↦ K_{t,i}[amax; b]`: the bound charge on the full
/// line and the load that lead to `(a, b)` after `t` minutes.
pub fn boundary_preimage(params: &BatteryParams, coeffs: &Coefficients, s: Soc) -> (f64, f64) {
    let amax = params.amax();
    let x = s.a - coeffs.qa * amax;
    let y = s.b - coeffs.qb * amax;
    let det = boundary_det(coeffs);
    let b = (coeffs.sb * x - coeffs.sa * y) / det;
    let i = (coeffs.ra * y - coeffs.rb * x) / det;
    (b, i)
}

/// Determinant `ra·sb − sa·rb` of `[b; i] ↦ K_{t,i}[amax; b]`; the Jacobian
/// determinant of [`boundary_preimage`] is its reciprocal.
pub fn boundary_det(coeffs: &Coefficients) -> f64 {
    coeffs.ra * coeffs.sb - coeffs.sa * coeffs.rb
}

/// Probability that a battery with initial density `f0` powers a task of
/// `t` minutes with random load `g`, i.e. the mass of the transported
/// density in the open positive quadrant. Computed in initial coordinates:
/// for each load the region of initial states mapped into the quadrant is
/// bounded below by two lines.
pub fn power_probability(
    params: &BatteryParams,
    f0: &dyn InitialDensity,
    g: &LoadModel,
    t: f64,
) -> Result<f64> {
    if !(t > 0.0) {
        return Err(KibamError::NonPositiveTime(t));
    }
    g.validate()?;
    let c = params.coefficients(t)?;
    let ((alo, ahi), (blo, bhi)) = f0.support();
    let inner_tol = 1e-9;
    // b0 above which K_{t,i}(a0, b0) has both components positive
    let floor_b =
        |a0: f64, i: f64| ((-c.sa * i - c.qa * a0) / c.ra).max((-c.sb * i - c.qb * a0) / c.rb);
    let mass_for_load = |i: f64| -> Result<f64> {
        // a0 where a floor line crosses the support's b-edges or the lines cross
        let mut breaks = Vec::new();
        for level in [blo, bhi] {
            breaks.push((-c.sa * i - c.ra * level) / c.qa);
            breaks.push((-c.sb * i - c.rb * level) / c.qb);
        }
        let slope = c.qb / c.rb - c.qa / c.ra;
        if slope != 0.0 {
            breaks.push((c.sa * i / c.ra - c.sb * i / c.rb) / slope);
        }
        let column = |a0: f64| -> f64 {
            let lo = floor_b(a0, i).max(blo);
            if lo >= bhi {
                return 0.0;
            }
            integrate(
                |b0| f0.density(Soc::new(a0, b0)),
                lo,
                bhi,
                &[],
                inner_tol * 1e-2,
            )
            .unwrap_or(f64::NAN)
        };
        integrate(column, alo, ahi, &breaks, inner_tol)
    };
    // loads at which a floor line passes a support corner
    let mut breaks = Vec::new();
    for a0 in [alo, ahi] {
        for b0 in [blo, bhi] {
            breaks.push(-(c.qa * a0 + c.ra * b0) / c.sa);
            breaks.push(-(c.qb * a0 + c.rb * b0) / c.sb);
        }
    }
    let failure = std::cell::Cell::new(None);
    let p = over_loads(
        g,
        (f64::NEG_INFINITY, f64::INFINITY),
        &breaks,
        POWER_TOL * 1e-2,
        |i| {
            mass_for_load(i).unwrap_or_else(|e| {
                failure.set(Some(e));
                0.0
            })
        },
    );
    if let Some(e) = failure.into_inner() {
        return Err(e);
    }
    Ok(p?.clamp(0.0, 1.0))
}
