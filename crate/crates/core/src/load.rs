//! Random load models and their conservative discretization.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{KibamError, Result};

/// Default probability mass kept inside the truncation window of unbounded
/// load densities.
pub const DEFAULT_COVERAGE: f64 = 1.0 - 1e-12;

/// Default number of points per discretized load.
pub const DEFAULT_LOAD_POINTS: usize = 11;

/// Distribution of the constant current drawn during one task, in mA.
#[derive(Debug, Clone, PartialEq)]
pub enum LoadModel {
    Dirac(f64),
    Uniform { lo: f64, hi: f64 },
    Normal { mean: f64, sd: f64 },
    Discrete(DiscreteLoad),
}

/// Finite load distribution: ascending currents with their probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteLoad {
    points: Vec<(f64, f64)>,
}

fn std_normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

fn std_normal_sf(z: f64) -> f64 {
    0.5 * libm::erfc(z / std::f64::consts::SQRT_2)
}

/// Upper quantile: the z with `P(Z > z) = tail`.
fn std_normal_upper_quantile(tail: f64) -> f64 {
    let (mut lo, mut hi) = (0.0f64, 40.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if std_normal_sf(mid) > tail {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-15 {
            break;
        }
    }
    0.5 * (lo + hi)
}

impl LoadModel {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(KibamError::InvalidLoad(msg));
        match self {
            LoadModel::Dirac(x) if !x.is_finite() => bad(format!("non-finite dirac load {x}")),
            LoadModel::Uniform { lo, hi } if !(lo.is_finite() && hi.is_finite() && lo < hi) => bad(
                format!("uniform bounds must satisfy lo < hi, got [{lo}, {hi}]"),
            ),
            LoadModel::Normal { mean, sd }
                if !(mean.is_finite() && sd.is_finite() && *sd >= 0.0) =>
            {
                bad(format!(
                    "normal load needs finite mean and sd >= 0, got ({mean}, {sd})"
                ))
            }
            LoadModel::Discrete(d) => d.validate(),
            _ => Ok(()),
        }
    }

    pub fn mean(&self) -> f64 {
        match self {
            LoadModel::Dirac(x) => *x,
            LoadModel::Uniform { lo, hi } => 0.5 * (lo + hi),
            LoadModel::Normal { mean, .. } => *mean,
            LoadModel::Discrete(d) => d.points.iter().map(|(i, w)| i * w).sum(),
        }
    }

    /// The same model shifted by a constant current.
    pub fn shifted(&self, delta: f64) -> LoadModel {
        match self {
            LoadModel::Dirac(x) => LoadModel::Dirac(x + delta),
            LoadModel::Uniform { lo, hi } => LoadModel::Uniform {
                lo: lo + delta,
                hi: hi + delta,
            },
            LoadModel::Normal { mean, sd } => LoadModel::Normal {
                mean: mean + delta,
                sd: *sd,
            },
            LoadModel::Discrete(d) => LoadModel::Discrete(d.shifted(delta)),
        }
    }

    /// Probability density, for absolutely continuous models.
    pub fn density(&self, i: f64) -> Option<f64> {
        match self {
            LoadModel::Uniform { lo, hi } => Some(if (*lo..=*hi).contains(&i) {
                1.0 / (hi - lo)
            } else {
                0.0
            }),
            LoadModel::Normal { mean, sd } if *sd > 0.0 => {
                let z = (i - mean) / sd;
                Some((-0.5 * z * z).exp() / (sd * (2.0 * std::f64::consts::PI).sqrt()))
            }
            _ => None,
        }
    }

    /// Interval holding at least `coverage` of the probability mass.
    pub fn window(&self, coverage: f64) -> (f64, f64) {
        match self {
            LoadModel::Dirac(x) => (*x, *x),
            LoadModel::Uniform { lo, hi } => (*lo, *hi),
            LoadModel::Normal { mean, sd } => {
                let z = std_normal_upper_quantile(0.5 * (1.0 - coverage));
                (mean - z * sd, mean + z * sd)
            }
            LoadModel::Discrete(d) => {
                let pts = d.points();
                (pts[0].0, pts[pts.len() - 1].0)
            }
        }
    }

    /// Replaces the model by `n_points` currents, each the right end of an
    /// equal-width interval of the support window carrying that interval's
    /// mass. Tail mass outside the window goes to the extreme points.
    pub fn discretize(&self, n_points: usize, coverage: f64) -> Result<DiscreteLoad> {
        self.validate()?;
        if n_points == 0 {
            return Err(KibamError::InvalidLoad(
                "n_points must be at least 1".into(),
            ));
        }
        if !(coverage > 0.0 && coverage <= 1.0) {
            return Err(KibamError::InvalidLoad(format!(
                "coverage must lie in (0,1], got {coverage}"
            )));
        }
        match self {
            LoadModel::Dirac(x) => Ok(DiscreteLoad {
                points: vec![(*x, 1.0)],
            }),
            LoadModel::Normal { mean, sd } if *sd == 0.0 => Ok(DiscreteLoad {
                points: vec![(*mean, 1.0)],
            }),
            LoadModel::Discrete(d) => Ok(d.clone()),
            LoadModel::Uniform { lo, hi } => {
                let width = (hi - lo) / n_points as f64;
                let points = (0..n_points)
                    .map(|j| {
                        let right = if j + 1 == n_points {
                            *hi
                        } else {
                            lo + (j + 1) as f64 * width
                        };
                        (right, 1.0 / n_points as f64)
                    })
                    .collect();
                Ok(DiscreteLoad { points })
            }
            LoadModel::Normal { mean, sd } => {
                let (wlo, whi) = self.window(coverage);
                let width = (whi - wlo) / n_points as f64;
                let edge = |j: usize| ((wlo + j as f64 * width) - mean) / sd;
                let mut points = Vec::with_capacity(n_points);
                for j in 0..n_points {
                    let right = if j + 1 == n_points {
                        whi
                    } else {
                        wlo + (j + 1) as f64 * width
                    };
                    let mass = match (j == 0, j + 1 == n_points) {
                        (true, true) => 1.0,
                        (true, false) => std_normal_cdf(edge(1)),
                        (false, true) => std_normal_sf(edge(j)),
                        (false, false) => {
                            let (a, b) = (edge(j), edge(j + 1));
                            if b <= 0.0 {
                                std_normal_cdf(b) - std_normal_cdf(a)
                            } else {
                                std_normal_sf(a) - std_normal_sf(b)
                            }
                        }
                    };
                    points.push((right, mass));
                }
                let total: f64 = points.iter().map(|p| p.1).sum();
                for p in &mut points {
                    p.1 /= total;
                }
                Ok(DiscreteLoad { points })
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            LoadModel::Dirac(x) => *x,
            LoadModel::Uniform { lo, hi } => rng.random_range(*lo..*hi),
            LoadModel::Normal { mean, sd } => {
                if *sd == 0.0 {
                    *mean
                } else {
                    Normal::new(*mean, *sd)
                        .map(|n| n.sample(rng))
                        .unwrap_or(*mean)
                }
            }
            LoadModel::Discrete(d) => d.sample(rng),
        }
    }
}

impl DiscreteLoad {
    /// Builds a discrete load, sorting points by current.
    pub fn new(mut points: Vec<(f64, f64)>) -> Result<Self> {
        points.sort_by(|a, b| a.0.total_cmp(&b.0));
        let d = DiscreteLoad { points };
        d.validate()?;
        Ok(d)
    }

    pub fn dirac(load: f64) -> Self {
        DiscreteLoad {
            points: vec![(load, 1.0)],
        }
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    fn validate(&self) -> Result<()> {
        if self.points.is_empty() {
            return Err(KibamError::InvalidLoad(
                "discrete load has no points".into(),
            ));
        }
        if self
            .points
            .iter()
            .any(|(i, w)| !i.is_finite() || !(*w >= 0.0))
        {
            return Err(KibamError::InvalidLoad(
                "discrete load needs finite currents and weights >= 0".into(),
            ));
        }
        if self.points.windows(2).any(|w| w[0].0 > w[1].0) {
            return Err(KibamError::InvalidLoad(
                "discrete load points must be ascending".into(),
            ));
        }
        let total: f64 = self.points.iter().map(|p| p.1).sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(KibamError::InvalidLoad(format!(
                "discrete weights sum to {total}, not 1"
            )));
        }
        Ok(())
    }

    pub fn shifted(&self, delta: f64) -> DiscreteLoad {
        DiscreteLoad {
            points: self.points.iter().map(|&(i, w)| (i + delta, w)).collect(),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for &(i, w) in &self.points {
            acc += w;
            if u < acc {
                return i;
            }
        }
        self.points[self.points.len() - 1].0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dirac_is_single_point() {
        let d = LoadModel::Dirac(90.0)
            .discretize(11, DEFAULT_COVERAGE)
            .unwrap();
        assert_eq!(d.points(), &[(90.0, 1.0)]);
    }

    #[test]
    fn uniform_four_points() {
        let d = LoadModel::Uniform { lo: -0.1, hi: 0.1 }
            .discretize(4, 1.0)
            .unwrap();
        let expected = [-0.05, 0.0, 0.05, 0.1];
        for ((i, w), e) in d.points().iter().zip(expected) {
            assert!((i - e).abs() < 1e-15, "{i} vs {e}");
            assert_eq!(*w, 0.25);
        }
    }

    #[test]
    fn normal_masses_against_simpson() {
        let model = LoadModel::Normal {
            mean: 90.0,
            sd: 5.0,
        };
        let d = model.discretize(11, DEFAULT_COVERAGE).unwrap();
        let (lo, hi) = model.window(DEFAULT_COVERAGE);
        let width = (hi - lo) / 11.0;
        // composite Simpson on the density, independent of erfc
        let pdf = |x: f64| {
            (-0.5 * ((x - 90.0) / 5.0).powi(2)).exp() / (5.0 * (2.0 * std::f64::consts::PI).sqrt())
        };
        let simpson = |a: f64, b: f64| {
            let n = 2000;
            let h = (b - a) / n as f64;
            let mut s = pdf(a) + pdf(b);
            for j in 1..n {
                s += pdf(a + j as f64 * h) * if j % 2 == 1 { 4.0 } else { 2.0 };
            }
            s * h / 3.0
        };
        for (j, (i, w)) in d.points().iter().enumerate() {
            assert!((i - (lo + (j + 1) as f64 * width)).abs() < 1e-9);
            let mut expected = simpson(lo + j as f64 * width, lo + (j + 1) as f64 * width);
            if j == 0 || j == 10 {
                expected += 0.5e-12;
            }
            assert!((w - expected).abs() < 1e-12, "point {j}: {w} vs {expected}");
        }
        let total: f64 = d.points().iter().map(|p| p.1).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn invalid_inputs() {
        let m = LoadModel::Uniform { lo: 0.0, hi: 1.0 };
        assert!(m.discretize(0, 1.0).is_err());
        assert!(m.discretize(3, 0.0).is_err());
        assert!(m.discretize(3, 1.5).is_err());
        assert!(LoadModel::Uniform { lo: 1.0, hi: 0.0 }.validate().is_err());
        assert!(DiscreteLoad::new(vec![(1.0, 0.5), (2.0, 0.4)]).is_err());
        let d = DiscreteLoad::new(vec![(2.0, 0.5), (1.0, 0.5)]).unwrap();
        assert_eq!(d.points()[0].0, 1.0);
    }

    #[test]
    fn shift_moves_support() {
        let m = LoadModel::Normal {
            mean: 90.0,
            sd: 5.0,
        }
        .shifted(-400.0);
        assert_eq!(m.mean(), -310.0);
        let d = DiscreteLoad::dirac(3.0).shifted(1.0);
        assert_eq!(d.points(), &[(4.0, 1.0)]);
    }
}
