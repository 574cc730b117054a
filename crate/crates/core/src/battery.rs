//! Deterministic kinetic battery model.
//!
//! Charge is measured in mA·min, time in minutes and current in mA, with
//! positive currents discharging the battery. Under a constant load the two
//! wells evolve by the affine closed form `K_{t,I}`; with capacity bounds the
//! available charge is pinned at `amax` once it fills, and the bound charge
//! then relaxes towards `bmax` independently of the load.

use crate::error::{KibamError, Result};
use crate::lambert::{lambert_w_exp, Branch};

/// Minutes per hour, for mAh inputs.
pub const MINUTES_PER_HOUR: f64 = 60.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatteryParams {
    c: f64,
    p: f64,
    d: f64,
    k: f64,
}

/// State of charge: available and bound charge.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Soc {
    pub a: f64,
    pub b: f64,
}

impl Soc {
    pub const EMPTY: Soc = Soc { a: 0.0, b: 0.0 };

    pub fn new(a: f64, b: f64) -> Self {
        Soc { a, b }
    }

    pub fn total(&self) -> f64 {
        self.a + self.b
    }

    /// Componentwise `self <= other + tol`.
    pub fn le(&self, other: &Soc, tol: f64) -> bool {
        self.a <= other.a + tol && self.b <= other.b + tol
    }
}

impl BatteryParams {
    pub fn new(c: f64, p: f64, d: f64) -> Result<Self> {
        if !(c > 0.0 && c < 1.0) {
            return Err(KibamError::InvalidParams(format!(
                "c must lie in (0,1), got {c}"
            )));
        }
        if !(p > 0.0 && p.is_finite()) {
            return Err(KibamError::InvalidParams(format!(
                "p must be positive, got {p}"
            )));
        }
        if !(d > 0.0 && d.is_finite()) {
            return Err(KibamError::InvalidParams(format!(
                "capacity must be positive, got {d}"
            )));
        }
        let k = p / (c * (1.0 - c));
        if !(k.is_finite() && k > 0.0) {
            return Err(KibamError::InvalidParams(format!(
                "k = p/(c(1-c)) is not finite: {k}"
            )));
        }
        Ok(BatteryParams { c, p, d, k })
    }

    /// Capacity given in mAh.
    pub fn from_mah(c: f64, p: f64, capacity_mah: f64) -> Result<Self> {
        Self::new(c, p, capacity_mah * MINUTES_PER_HOUR)
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn k(&self) -> f64 {
        self.k
    }

    pub fn capacity(&self) -> f64 {
        self.d
    }

    pub fn amax(&self) -> f64 {
        self.c * self.d
    }

    pub fn bmax(&self) -> f64 {
        self.d - self.amax()
    }

    /// Absolute tolerance used for comparisons against the box faces.
    pub fn eps(&self) -> f64 {
        1e-9 * self.d
    }

    pub fn with_capacity(&self, d: f64) -> Result<Self> {
        Self::new(self.c, self.p, d)
    }

    pub fn coefficients(&self, t: f64) -> Result<Coefficients> {
        Coefficients::new(self, t)
    }

    pub fn step_unbounded(&self, t: f64, load: f64, s0: Soc) -> Result<Soc> {
        Ok(self.coefficients(t)?.apply(s0, load))
    }

    /// Preimage of `s` under `K_{t,load}`.
    pub fn step_inverse(&self, t: f64, load: f64, s: Soc) -> Result<Soc> {
        Ok(self.coefficients(t)?.invert(s, load))
    }

    /// Jacobian determinant of the inverse map, `e^{kt}`.
    pub fn inverse_jacobian_det(&self, t: f64) -> f64 {
        (self.k * t).exp()
    }

    /// Minimal bound charge at which the load keeps the available charge
    /// pinned at capacity.
    pub fn boundary_threshold(&self, load: f64) -> f64 {
        self.bmax() + load * (1.0 - self.c) / self.p
    }

    /// Bound charge after `t` minutes at full available charge.
    pub fn boundary_evolve(&self, t: f64, b0: f64) -> f64 {
        let decay = (-self.c * self.k * t).exp();
        decay * b0 + (1.0 - decay) * self.bmax()
    }

    /// Positive times at which the available charge equals `level` under a
    /// constant load, in increasing order (at most two).
    pub fn level_crossings(&self, load: f64, s0: Soc, level: f64) -> Vec<f64> {
        let (c, k) = (self.c, self.k);
        // a(t) - level = u e^{-kt} + v t + w
        let u = (1.0 - c) * s0.a - c * s0.b + (1.0 - c) * load / k;
        let v = -c * load;
        let w = c * (s0.a + s0.b) - (1.0 - c) * load / k - level;
        let mut roots = Vec::with_capacity(2);
        if v == 0.0 {
            if u != 0.0 {
                let ratio = -w / u;
                if ratio > 0.0 && ratio <= 1.0 {
                    roots.push(-ratio.ln() / k);
                }
            }
        } else if u == 0.0 {
            roots.push(-w / v);
        } else {
            let negative = (u / v) > 0.0;
            let ln_abs = (k * u / v).abs().ln() + k * w / v;
            for branch in [Branch::Principal, Branch::MinusOne] {
                if let Ok(wv) = lambert_w_exp(branch, negative, ln_abs) {
                    roots.push(wv / k - w / v);
                }
            }
        }
        let f = |t: f64| u * (-k * t).exp() + v * t + w;
        let df = |t: f64| -k * u * (-k * t).exp() + v;
        let mut out: Vec<f64> = roots
            .into_iter()
            .filter(|t| t.is_finite())
            .map(|mut t| {
                // polish: a couple of Newton steps on the original equation
                for _ in 0..3 {
                    let d = df(t);
                    if d == 0.0 {
                        break;
                    }
                    let step = f(t) / d;
                    if !step.is_finite() {
                        break;
                    }
                    t -= step;
                }
                t
            })
            .filter(|&t| t > 0.0)
            .collect();
        out.sort_by(|a, b| a.total_cmp(b));
        out.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * b.abs().max(1.0));
        out
    }

    /// Latest time at which the available charge reaches `amax`.
    pub fn hit_time_upper(&self, load: f64, s0: Soc) -> Option<f64> {
        self.level_crossings(load, s0, self.amax()).last().copied()
    }

    /// First time at which the available charge reaches zero.
    pub fn depletion_time(&self, load: f64, s0: Soc) -> Option<f64> {
        self.level_crossings(load, s0, 0.0).first().copied()
    }

    /// Constant load under which the available charge ends exactly at `amax`
    /// after `t` minutes.
    pub fn slow_charge_load(&self, t: f64, s0: Soc) -> Result<f64> {
        if !(t > 0.0) {
            return Err(KibamError::NonPositiveTime(t));
        }
        Ok(self.coefficients(t)?.slow_charge_load(self.amax(), s0))
    }

    fn check_box(&self, s0: Soc) -> Result<()> {
        let eps = self.eps();
        let inside =
            s0.a >= -eps && s0.b >= -eps && s0.a <= self.amax() + eps && s0.b <= self.bmax() + eps;
        if inside {
            Ok(())
        } else {
            Err(KibamError::OutsideBox {
                a: s0.a,
                b: s0.b,
                amax: self.amax(),
                bmax: self.bmax(),
            })
        }
    }

    fn clamp_box(&self, s: Soc) -> Soc {
        Soc::new(s.a.clamp(0.0, self.amax()), s.b.clamp(0.0, self.bmax()))
    }

    /// Capacity-bounded evolution with the exact hitting time.
    pub fn step_bounded(&self, t: f64, load: f64, s0: Soc) -> Result<Soc> {
        self.check_box(s0)?;
        let coeffs = self.coefficients(t)?;
        let end = coeffs.apply(s0, load);
        match self.classify(s0, end) {
            Regime::Depleted => Ok(Soc::EMPTY),
            Regime::Interior => Ok(self.clamp_box(end)),
            Regime::HitsUpper => {
                let t_hit = self.hit_time_upper(load, s0).unwrap_or(0.0).min(t);
                let at_hit = self.step_unbounded(t_hit, load, s0)?;
                let b = self.boundary_evolve(t - t_hit, at_hit.b.min(self.bmax()));
                Ok(Soc::new(self.amax(), b.clamp(0.0, self.bmax())))
            }
        }
    }

    /// Conservative variant of [`step_bounded`](Self::step_bounded) that
    /// replaces hitting the upper bound by the slower charge `slow_charge_load`.
    pub fn step_bounded_approx(&self, t: f64, load: f64, s0: Soc) -> Result<Soc> {
        self.check_box(s0)?;
        let coeffs = self.coefficients(t)?;
        let end = coeffs.apply(s0, load);
        match self.classify(s0, end) {
            Regime::Depleted => Ok(Soc::EMPTY),
            Regime::Interior => Ok(self.clamp_box(end)),
            Regime::HitsUpper => {
                let b = coeffs.slow_charge_bound(self.amax(), s0);
                Ok(Soc::new(self.amax(), b.clamp(0.0, self.bmax())))
            }
        }
    }

    pub(crate) fn classify(&self, s0: Soc, end: Soc) -> Regime {
        if s0.a <= 0.0 || end.a <= 0.0 {
            Regime::Depleted
        } else if end.a > self.amax() + self.eps() {
            Regime::HitsUpper
        } else {
            Regime::Interior
        }
    }

    /// Whether `s0` powers the task `(t, load)` without depleting.
    pub fn powers_task(&self, s0: Soc, t: f64, load: f64) -> Result<bool> {
        if !(s0.a > 0.0 && s0.b > 0.0) {
            return Err(KibamError::NonPositiveSoc { a: s0.a, b: s0.b });
        }
        let end = self.step_unbounded(t, load, s0)?;
        Ok(end.a > 0.0 && end.b > 0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Regime {
    Interior,
    HitsUpper,
    Depleted,
}

/// Closed-form coefficients of `K_{t,I}` at a fixed `t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Coefficients {
    pub qa: f64,
    pub qb: f64,
    pub ra: f64,
    pub rb: f64,
    pub sa: f64,
    pub sb: f64,
    /// `e^{-kt}`, the determinant of the homogeneous part.
    pub det: f64,
    pub t: f64,
}

impl Coefficients {
    pub fn new(params: &BatteryParams, t: f64) -> Result<Self> {
        if !(t >= 0.0) {
            return Err(KibamError::NegativeTime(t));
        }
        let (c, k) = (params.c, params.k);
        let em1 = (-k * t).exp_m1(); // e^{-kt} - 1
        let e = (-k * t).exp();
        Ok(Coefficients {
            qa: (1.0 - c) * e + c,
            qb: -(1.0 - c) * em1,
            ra: -c * em1,
            rb: c * e + (1.0 - c),
            sa: (1.0 - c) * em1 / k - t * c,
            sb: -(1.0 - c) * em1 / k - t * (1.0 - c),
            det: e,
            t,
        })
    }

    #[inline]
    pub fn apply(&self, s0: Soc, load: f64) -> Soc {
        Soc {
            a: self.qa * s0.a + self.ra * s0.b + self.sa * load,
            b: self.qb * s0.a + self.rb * s0.b + self.sb * load,
        }
    }

    pub fn invert(&self, s: Soc, load: f64) -> Soc {
        let x = s.a - self.sa * load;
        let y = s.b - self.sb * load;
        Soc {
            a: (self.rb * x - self.ra * y) / self.det,
            b: (-self.qb * x + self.qa * y) / self.det,
        }
    }

    #[inline]
    pub fn slow_charge_load(&self, amax: f64, s0: Soc) -> f64 {
        (amax - self.qa * s0.a - self.ra * s0.b) / self.sa
    }

    /// Bound charge reached under [`slow_charge_load`](Self::slow_charge_load).
    #[inline]
    pub fn slow_charge_bound(&self, amax: f64, s0: Soc) -> f64 {
        let load = self.slow_charge_load(amax, s0);
        self.qb * s0.a + self.rb * s0.b + self.sb * load
    }
}

/// Clamped linear battery used as a comparison baseline.
pub fn linear_step(d: f64, t: f64, load: f64, q0: f64) -> Result<f64> {
    if !(0.0..=d).contains(&q0) {
        return Err(KibamError::OutsideBox {
            a: q0,
            b: 0.0,
            amax: d,
            bmax: 0.0,
        });
    }
    Ok((q0 - load * t).clamp(0.0, d))
}
