//! Discretized state-of-charge distributions and their conservative
//! transformer.
//!
//! A [`SocDistribution`] holds probability mass on three parts of the state
//! space: an `n_grid × n_grid` grid of inner cells, a strip of cells on the
//! line of full available charge, and the depleted state. Every cell carries
//! its mass at its lower corner, and images are floored back onto the grid,
//! so each transform under-approximates the charge held by the battery.

use rand::Rng;

use crate::accum::ExtSum;
use crate::battery::{linear_step, BatteryParams, Coefficients, Soc};
use crate::error::{KibamError, Result};
use crate::load::DiscreteLoad;
use crate::par;

/// Initial state-of-charge distribution.
#[derive(Debug, Clone, PartialEq)]
pub enum InitSpec {
    /// Uniform fill level `x` in `[lo, hi]` (fractions of capacity) with both
    /// wells at the same level: `a = x·amax`, `b = x·bmax`.
    DiagonalUniform {
        lo: f64,
        hi: f64,
    },
    /// Uniform over a rectangle of (available, bound) charge.
    BoxUniform {
        a: (f64, f64),
        b: (f64, f64),
    },
    Dirac(Soc),
}

impl InitSpec {
    pub fn validate(&self, params: &BatteryParams) -> Result<()> {
        let bad = |m: String| Err(KibamError::InvalidInit(m));
        let eps = params.eps();
        match *self {
            InitSpec::DiagonalUniform { lo, hi } => {
                if !(0.0 <= lo && lo <= hi && hi <= 1.0) {
                    return bad(format!("fill range [{lo}, {hi}] must lie within [0, 1]"));
                }
            }
            InitSpec::BoxUniform { a, b } => {
                let ok = |r: (f64, f64), max: f64| r.0 >= -eps && r.0 <= r.1 && r.1 <= max + eps;
                if !ok(a, params.amax()) || !ok(b, params.bmax()) {
                    return bad(format!(
                        "box {a:?} x {b:?} outside [0, {}] x [0, {}]",
                        params.amax(),
                        params.bmax()
                    ));
                }
            }
            InitSpec::Dirac(s) => {
                if s.a < -eps
                    || s.b < -eps
                    || s.a > params.amax() + eps
                    || s.b > params.bmax() + eps
                {
                    return bad(format!("point ({}, {}) outside the capacity box", s.a, s.b));
                }
            }
        }
        Ok(())
    }

    pub fn sample<R: Rng + ?Sized>(&self, params: &BatteryParams, rng: &mut R) -> Soc {
        let draw = |rng: &mut R, lo: f64, hi: f64| {
            if hi > lo {
                rng.random_range(lo..hi)
            } else {
                lo
            }
        };
        match *self {
            InitSpec::DiagonalUniform { lo, hi } => {
                let x = draw(rng, lo, hi);
                Soc::new(x * params.amax(), x * params.bmax())
            }
            InitSpec::BoxUniform { a, b } => {
                let av = draw(rng, a.0, a.1);
                let bv = draw(rng, b.0, b.1);
                Soc::new(av, bv)
            }
            InitSpec::Dirac(s) => s,
        }
    }
}

/// Index of the cell containing `x`, snapping values within `snap` below a
/// cell edge onto that edge, and clamped to `[0, n)`.
#[inline]
pub fn cell_index(x: f64, inv_delta: f64, snap: f64, n: usize) -> usize {
    let f = ((x + snap) * inv_delta).floor();
    if f <= 0.0 {
        0
    } else if f >= (n - 1) as f64 {
        n - 1
    } else {
        f as usize
    }
}

/// Where a single representative point lands after one task.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cell {
    Inner(usize, usize),
    Boundary(usize),
    Depleted,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SocDistribution {
    n_grid: usize,
    delta_a: f64,
    delta_b: f64,
    inner: Vec<f64>,
    boundary: Vec<f64>,
    depleted: ExtSum,
}

/// Aggregate view of a distribution.
#[derive(Debug, Clone)]
pub struct GridSummary {
    pub inner_total: f64,
    pub boundary_total: f64,
    pub depleted: ExtSum,
    pub survival: ExtSum,
    /// Mass per available-charge row, the boundary strip last.
    pub a_marginal: Vec<f64>,
    /// Mass per bound-charge column, inner and boundary together.
    pub b_marginal: Vec<f64>,
}

fn overlap(lo: f64, hi: f64, cell_lo: f64, cell_hi: f64) -> f64 {
    (hi.min(cell_hi) - lo.max(cell_lo)).max(0.0)
}

/// Fractions of `[lo, hi]` falling into each of `n` cells of width `delta`.
fn interval_weights(lo: f64, hi: f64, delta: f64, n: usize) -> Vec<(usize, f64)> {
    let inv = 1.0 / delta;
    if hi <= lo {
        return vec![(cell_index(lo, inv, 0.0, n), 1.0)];
    }
    let first = cell_index(lo, inv, 0.0, n);
    let last = cell_index(hi, inv, 0.0, n);
    let len = hi - lo;
    let mut out = Vec::new();
    for j in first..=last {
        let cell_lo = j as f64 * delta;
        let cell_hi = if j + 1 == n {
            f64::INFINITY
        } else {
            (j + 1) as f64 * delta
        };
        let w = overlap(lo, hi, cell_lo, cell_hi) / len;
        // drop rounding slivers at aligned edges
        if w > 1e-12 {
            out.push((j, w));
        }
    }
    let total: f64 = out.iter().map(|p| p.1).sum();
    for p in &mut out {
        p.1 /= total;
    }
    out
}

impl SocDistribution {
    /// Empty (all-zero) distribution on the grid for `params`.
    pub fn zeros(params: &BatteryParams, n_grid: usize) -> Result<Self> {
        if n_grid == 0 {
            return Err(KibamError::InvalidInit("n_grid must be positive".into()));
        }
        Ok(SocDistribution {
            n_grid,
            delta_a: params.amax() / n_grid as f64,
            delta_b: params.bmax() / n_grid as f64,
            inner: vec![0.0; n_grid * n_grid],
            boundary: vec![0.0; n_grid],
            depleted: ExtSum::new(),
        })
    }

    pub fn init(params: &BatteryParams, n_grid: usize, spec: &InitSpec) -> Result<Self> {
        spec.validate(params)?;
        let mut dist = Self::zeros(params, n_grid)?;
        let n = n_grid;
        match *spec {
            InitSpec::Dirac(s) => {
                let cell = dist.locate(params, s);
                dist.deposit(cell, 1.0);
            }
            InitSpec::DiagonalUniform { lo, hi } => {
                // level x lands in cell (floor(xN), floor(xN)) for every c
                for (j, w) in interval_weights(lo, hi, 1.0 / n as f64, n) {
                    dist.inner[j * n + j] += w;
                }
            }
            InitSpec::BoxUniform { a, b } => {
                let wa = interval_weights(a.0.max(0.0), a.1.min(params.amax()), dist.delta_a, n);
                let wb = interval_weights(b.0.max(0.0), b.1.min(params.bmax()), dist.delta_b, n);
                for &(i, x) in &wa {
                    for &(j, y) in &wb {
                        dist.inner[i * n + j] += x * y;
                    }
                }
            }
        }
        Ok(dist)
    }

    pub fn n_grid(&self) -> usize {
        self.n_grid
    }

    pub fn delta_a(&self) -> f64 {
        self.delta_a
    }

    pub fn delta_b(&self) -> f64 {
        self.delta_b
    }

    /// Inner masses, row-major with the available-charge index as row.
    pub fn inner(&self) -> &[f64] {
        &self.inner
    }

    pub fn inner_at(&self, a_idx: usize, b_idx: usize) -> f64 {
        self.inner[a_idx * self.n_grid + b_idx]
    }

    pub fn boundary(&self) -> &[f64] {
        &self.boundary
    }

    pub fn depleted(&self) -> &ExtSum {
        &self.depleted
    }

    /// Reassembles a distribution from exported parts.
    pub fn from_parts(
        params: &BatteryParams,
        n_grid: usize,
        inner: Vec<f64>,
        boundary: Vec<f64>,
        depleted: ExtSum,
    ) -> Result<Self> {
        let mut d = Self::zeros(params, n_grid)?;
        if inner.len() != n_grid * n_grid || boundary.len() != n_grid {
            return Err(KibamError::InvalidInit(format!(
                "expected {}x{} inner cells and {} boundary cells",
                n_grid, n_grid, n_grid
            )));
        }
        if inner.iter().chain(&boundary).any(|&m| !(m >= 0.0)) {
            return Err(KibamError::InvalidInit(
                "masses must be non-negative".into(),
            ));
        }
        d.inner = inner;
        d.boundary = boundary;
        d.depleted = depleted;
        Ok(d)
    }

    /// Lower-corner representative of an inner cell.
    pub fn representative(&self, a_idx: usize, b_idx: usize) -> Soc {
        Soc::new(a_idx as f64 * self.delta_a, b_idx as f64 * self.delta_b)
    }

    /// Grid cell for a point of the capacity box.
    pub fn locate(&self, params: &BatteryParams, s: Soc) -> Cell {
        let snap = params.eps();
        let n = self.n_grid;
        if s.a <= 0.0 {
            Cell::Depleted
        } else if s.a >= params.amax() - snap {
            Cell::Boundary(cell_index(s.b, 1.0 / self.delta_b, snap, n))
        } else {
            Cell::Inner(
                cell_index(s.a, 1.0 / self.delta_a, snap, n),
                cell_index(s.b, 1.0 / self.delta_b, snap, n),
            )
        }
    }

    fn deposit(&mut self, cell: Cell, mass: f64) {
        match cell {
            Cell::Inner(i, j) => self.inner[i * self.n_grid + j] += mass,
            Cell::Boundary(j) => self.boundary[j] += mass,
            Cell::Depleted => self.depleted.add(mass),
        }
    }

    /// Moves the depleted mass out, leaving zero behind.
    pub fn take_depleted(&mut self) -> ExtSum {
        std::mem::take(&mut self.depleted)
    }

    pub fn add_depleted(&mut self, mass: &ExtSum) {
        self.depleted.add_sum(mass);
    }

    pub fn inner_total(&self) -> f64 {
        self.inner.iter().sum()
    }

    pub fn boundary_total(&self) -> f64 {
        self.boundary.iter().sum()
    }

    pub fn total_mass(&self) -> f64 {
        self.inner_total() + self.boundary_total() + self.depleted.value()
    }

    /// Lower bound on the probability of not being depleted: `1 - depleted`.
    pub fn survival_probability(&self) -> ExtSum {
        self.depleted.one_minus()
    }

    pub fn summary(&self) -> GridSummary {
        let n = self.n_grid;
        let mut a_marginal: Vec<f64> = self.inner.chunks(n).map(|row| row.iter().sum()).collect();
        a_marginal.push(self.boundary_total());
        let mut b_marginal = self.boundary.clone();
        for row in self.inner.chunks(n) {
            for (acc, &m) in b_marginal.iter_mut().zip(row) {
                *acc += m;
            }
        }
        GridSummary {
            inner_total: self.inner_total(),
            boundary_total: self.boundary_total(),
            depleted: self.depleted.clone(),
            survival: self.survival_probability(),
            a_marginal,
            b_marginal,
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for m in self.inner.iter_mut().chain(self.boundary.iter_mut()) {
            *m *= factor;
        }
        self.depleted.scale(factor);
    }

    /// Adds the masses of `other` (same grid) into `self`.
    pub fn absorb(&mut self, other: &SocDistribution) {
        debug_assert_eq!(self.n_grid, other.n_grid);
        for (x, y) in self.inner.iter_mut().zip(&other.inner) {
            *x += y;
        }
        for (x, y) in self.boundary.iter_mut().zip(&other.boundary) {
            *x += y;
        }
        self.depleted.add_sum(&other.depleted);
    }

    pub fn zeros_like(&self) -> Self {
        SocDistribution {
            n_grid: self.n_grid,
            delta_a: self.delta_a,
            delta_b: self.delta_b,
            inner: vec![0.0; self.inner.len()],
            boundary: vec![0.0; self.boundary.len()],
            depleted: ExtSum::new(),
        }
    }

    /// Distribution after a task of `duration` minutes with load `load`.
    pub fn transform(
        &self,
        params: &BatteryParams,
        duration: f64,
        load: &DiscreteLoad,
    ) -> Result<Self> {
        self.transform_chunked(params, duration, load, 1)
    }

    /// Same as [`transform`](Self::transform), with the source rows split
    /// into `chunks` contiguous blocks processed independently (in parallel
    /// with the `parallel` feature) and merged in block order. The result
    /// depends on `chunks` only through floating-point summation order.
    pub fn transform_chunked(
        &self,
        params: &BatteryParams,
        duration: f64,
        load: &DiscreteLoad,
        chunks: usize,
    ) -> Result<Self> {
        if !(duration > 0.0) {
            return Err(KibamError::NonPositiveTime(duration));
        }
        let kernel = Kernel::new(params, self, duration, load)?;
        let n = self.n_grid;
        let chunks = chunks.clamp(1, n + 1);
        // n inner rows plus one pseudo-row for the boundary strip
        let bounds: Vec<(usize, usize)> = (0..chunks)
            .map(|c| ((n + 1) * c / chunks, (n + 1) * (c + 1) / chunks))
            .collect();
        let mut out = self.zeros_like();
        out.depleted = self.depleted.clone();
        if chunks == 1 {
            let mut dep = ExtSum::new();
            kernel.run_rows(self, 0, n + 1, &mut out.inner, &mut out.boundary, &mut dep);
            out.depleted.add_sum(&dep);
            return Ok(out);
        }
        let parts = par::map_collect(&bounds, |&(r0, r1)| {
            let mut inner = vec![0.0; n * n];
            let mut boundary = vec![0.0; n];
            let mut dep = ExtSum::new();
            kernel.run_rows(self, r0, r1, &mut inner, &mut boundary, &mut dep);
            (inner, boundary, dep)
        });
        for (inner, boundary, dep) in parts {
            for (x, y) in out.inner.iter_mut().zip(&inner) {
                *x += y;
            }
            for (x, y) in out.boundary.iter_mut().zip(&boundary) {
                *x += y;
            }
            out.depleted.add_sum(&dep);
        }
        Ok(out)
    }
}

/// Precomputed per-task quantities shared by all source cells.
struct Kernel {
    n: usize,
    coeffs: Coefficients,
    amax: f64,
    eps: f64,
    inv_da: f64,
    inv_db: f64,
    delta_a: f64,
    delta_b: f64,
    /// (shift of a, shift of b, weight, boundary threshold) per load point
    loads: Vec<(f64, f64, f64, f64)>,
    boundary_decay: f64,
    bmax: f64,
}

impl Kernel {
    fn new(
        params: &BatteryParams,
        dist: &SocDistribution,
        duration: f64,
        load: &DiscreteLoad,
    ) -> Result<Self> {
        let coeffs = params.coefficients(duration)?;
        let loads = load
            .points()
            .iter()
            .map(|&(i, w)| {
                (
                    coeffs.sa * i,
                    coeffs.sb * i,
                    w,
                    params.boundary_threshold(i),
                )
            })
            .collect();
        Ok(Kernel {
            n: dist.n_grid,
            coeffs,
            amax: params.amax(),
            eps: params.eps(),
            inv_da: 1.0 / dist.delta_a,
            inv_db: 1.0 / dist.delta_b,
            delta_a: dist.delta_a,
            delta_b: dist.delta_b,
            loads,
            boundary_decay: (-params.c() * params.k() * duration).exp(),
            bmax: params.bmax(),
        })
    }

    #[inline]
    fn ia(&self, a: f64) -> usize {
        cell_index(a, self.inv_da, self.eps, self.n)
    }

    #[inline]
    fn ib(&self, b: f64) -> usize {
        cell_index(b, self.inv_db, self.eps, self.n)
    }

    /// Rows `r0..r1`; row `n` stands for the boundary strip.
    fn run_rows(
        &self,
        src: &SocDistribution,
        r0: usize,
        r1: usize,
        inner: &mut [f64],
        boundary: &mut [f64],
        dep: &mut ExtSum,
    ) {
        let n = self.n;
        let c = &self.coeffs;
        for row in r0..r1 {
            if row == n {
                self.run_boundary(src, inner, boundary, dep);
                continue;
            }
            let masses = &src.inner[row * n..(row + 1) * n];
            if row == 0 {
                // available charge at its lower corner is empty
                for &m in masses {
                    dep.add(m);
                }
                continue;
            }
            let a0 = row as f64 * self.delta_a;
            for (col, &mass) in masses.iter().enumerate() {
                if mass == 0.0 {
                    continue;
                }
                let b0 = col as f64 * self.delta_b;
                let base_a = c.qa * a0 + c.ra * b0;
                let base_b = c.qb * a0 + c.rb * b0;
                let mut w_dep = 0.0;
                let mut w_slow = 0.0;
                for &(sa_i, sb_i, w, _) in &self.loads {
                    let ea = base_a + sa_i;
                    if ea <= 0.0 {
                        w_dep += w;
                    } else if ea > self.amax + self.eps {
                        w_slow += w;
                    } else {
                        let eb = base_b + sb_i;
                        inner[self.ia(ea) * n + self.ib(eb)] += mass * w;
                    }
                }
                if w_dep > 0.0 {
                    dep.add(mass * w_dep);
                }
                if w_slow > 0.0 {
                    let b = c
                        .slow_charge_bound(self.amax, Soc::new(a0, b0))
                        .min(self.bmax);
                    boundary[self.ib(b)] += mass * w_slow;
                }
            }
        }
    }

    fn run_boundary(
        &self,
        src: &SocDistribution,
        inner: &mut [f64],
        boundary: &mut [f64],
        dep: &mut ExtSum,
    ) {
        let n = self.n;
        let c = &self.coeffs;
        for (col, &mass) in src.boundary.iter().enumerate() {
            if mass == 0.0 {
                continue;
            }
            let b0 = col as f64 * self.delta_b;
            let base_a = c.qa * self.amax + c.ra * b0;
            let base_b = c.qb * self.amax + c.rb * b0;
            let mut w_dep = 0.0;
            for &(sa_i, sb_i, w, threshold) in &self.loads {
                if b0 >= threshold {
                    // charging covers diffusion: slide along the boundary
                    let b = self.boundary_decay * b0 + (1.0 - self.boundary_decay) * self.bmax;
                    boundary[self.ib(b)] += mass * w;
                    continue;
                }
                let ea = base_a + sa_i;
                if ea > self.amax {
                    // leaves and re-hits the boundary: keep the mass in place
                    boundary[col] += mass * w;
                } else if ea > 0.0 {
                    let eb = base_b + sb_i;
                    inner[self.ia(ea) * n + self.ib(eb)] += mass * w;
                } else {
                    w_dep += w;
                }
            }
            if w_dep > 0.0 {
                dep.add(mass * w_dep);
            }
        }
    }
}

/// Distribution of the total charge of the linear (single-well) reference
/// battery: `2·n_grid` cells of width `d / (2·n_grid)` plus one cell holding
/// the full battery exactly, and a depleted mass.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearDistribution {
    capacity: f64,
    delta: f64,
    mass: Vec<f64>,
    depleted: ExtSum,
}

/// `∫ clamp(u, 0, len) du` from 0 to `u`.
fn clamp_integral(u: f64, len: f64) -> f64 {
    if u <= 0.0 {
        0.0
    } else if u <= len {
        0.5 * u * u
    } else {
        0.5 * len * len + len * (u - len)
    }
}

/// CDF of `A + B` with `A`, `B` independent uniforms (either may be a point).
fn uniform_sum_cdf(s: f64, a: (f64, f64), b: (f64, f64)) -> f64 {
    let (la, lb) = (a.1 - a.0, b.1 - b.0);
    let f = if la <= 0.0 && lb <= 0.0 {
        if s >= a.0 + b.0 {
            1.0
        } else {
            0.0
        }
    } else if la <= 0.0 {
        (s - a.0 - b.0) / lb
    } else if lb <= 0.0 {
        (s - a.0 - b.0) / la
    } else {
        (clamp_integral(s - a.0 - b.0, lb) - clamp_integral(s - a.1 - b.0, lb)) / (la * lb)
    };
    f.clamp(0.0, 1.0)
}

impl LinearDistribution {
    /// Initial distribution of `a + b` for `spec`.
    pub fn init(params: &BatteryParams, n_grid: usize, spec: &InitSpec) -> Result<Self> {
        spec.validate(params)?;
        if n_grid == 0 {
            return Err(KibamError::InvalidInit("n_grid must be positive".into()));
        }
        let d = params.capacity();
        let cells = 2 * n_grid + 1;
        let mut dist = LinearDistribution {
            capacity: d,
            delta: d / (2 * n_grid) as f64,
            mass: vec![0.0; cells],
            depleted: ExtSum::new(),
        };
        match *spec {
            InitSpec::Dirac(s) => {
                let j = dist.index(s.total(), params.eps());
                dist.mass[j] = 1.0;
            }
            InitSpec::DiagonalUniform { lo, hi } => {
                for (j, w) in interval_weights(lo * d, hi * d, dist.delta, cells) {
                    dist.mass[j] += w;
                }
            }
            InitSpec::BoxUniform { a, b } => {
                let lo = a.0 + b.0;
                let hi = a.1 + b.1;
                if hi <= lo {
                    let j = dist.index(lo, params.eps());
                    dist.mass[j] = 1.0;
                } else {
                    for j in dist.index(lo, 0.0)..=dist.index(hi, 0.0) {
                        let edge_lo = j as f64 * dist.delta;
                        let edge_hi = if j + 1 == cells {
                            f64::INFINITY
                        } else {
                            edge_lo + dist.delta
                        };
                        let w = uniform_sum_cdf(edge_hi, a, b) - uniform_sum_cdf(edge_lo, a, b);
                        if w > 1e-12 {
                            dist.mass[j] += w;
                        }
                    }
                    let total: f64 = dist.mass.iter().sum();
                    for m in &mut dist.mass {
                        *m /= total;
                    }
                }
            }
        }
        Ok(dist)
    }

    fn index(&self, q: f64, snap: f64) -> usize {
        cell_index(q, 1.0 / self.delta, snap, self.mass.len())
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn masses(&self) -> &[f64] {
        &self.mass
    }

    pub fn depleted(&self) -> &ExtSum {
        &self.depleted
    }

    /// Moves the depleted mass out, leaving zero behind.
    pub fn take_depleted(&mut self) -> ExtSum {
        std::mem::take(&mut self.depleted)
    }

    pub fn add_depleted(&mut self, mass: &ExtSum) {
        self.depleted.add_sum(mass);
    }

    pub fn charged_total(&self) -> f64 {
        self.mass.iter().sum()
    }

    pub fn survival_probability(&self) -> ExtSum {
        self.depleted.one_minus()
    }

    pub fn zeros_like(&self) -> Self {
        LinearDistribution {
            capacity: self.capacity,
            delta: self.delta,
            mass: vec![0.0; self.mass.len()],
            depleted: ExtSum::new(),
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for m in &mut self.mass {
            *m *= factor;
        }
        self.depleted.scale(factor);
    }

    pub fn absorb(&mut self, other: &LinearDistribution) {
        for (x, y) in self.mass.iter_mut().zip(&other.mass) {
            *x += y;
        }
        self.depleted.add_sum(&other.depleted);
    }

    /// Distribution after a task of `duration` minutes: each cell's lower
    /// corner moves by `-I·duration`, clamped to the capacity, and is floored.
    pub fn transform(&self, duration: f64, load: &DiscreteLoad) -> Result<Self> {
        if !(duration > 0.0) {
            return Err(KibamError::NonPositiveTime(duration));
        }
        let snap = 1e-9 * self.capacity;
        let mut out = self.zeros_like();
        out.depleted = self.depleted.clone();
        for (j, &mass) in self.mass.iter().enumerate() {
            if mass == 0.0 {
                continue;
            }
            let q0 = (j as f64 * self.delta).min(self.capacity);
            let mut w_dep = 0.0;
            for &(i, w) in load.points() {
                if i > 0.0 && q0 - i * duration <= 0.0 {
                    w_dep += w;
                } else {
                    let q = linear_step(self.capacity, duration, i, q0)?;
                    out.mass[self.index(q, snap)] += mass * w;
                }
            }
            if w_dep > 0.0 {
                out.depleted.add(mass * w_dep);
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::load::LoadModel;

    fn example2() -> BatteryParams {
        BatteryParams::new(0.5, 0.002, 20.0).unwrap()
    }

    #[test]
    fn dirac_init_is_single_cell() {
        let p = example2();
        let d = SocDistribution::init(&p, 50, &InitSpec::Dirac(Soc::new(5.0, 5.0))).unwrap();
        assert_eq!(d.inner_at(25, 25), 1.0);
        assert_eq!(d.inner_total(), 1.0);
        assert_eq!(d.survival_probability().value(), 1.0);
    }

    #[test]
    fn box_init_example2() {
        let p = example2();
        let spec = InitSpec::BoxUniform {
            a: (4.0, 6.5),
            b: (4.0, 6.5),
        };
        let d = SocDistribution::init(&p, 100, &spec).unwrap();
        assert!((d.inner_total() - 1.0).abs() < 1e-12);
        let cell = 1.0 / 625.0;
        for i in 40..65 {
            for j in 40..65 {
                assert!((d.inner_at(i, j) - cell).abs() < 1e-12, "({i},{j})");
            }
        }
        assert_eq!(d.inner_at(39, 50), 0.0);
        assert_eq!(d.inner_at(65, 50), 0.0);
    }

    #[test]
    fn diagonal_init_satellite() {
        let p = BatteryParams::from_mah(0.5, 0.0006, 5000.0).unwrap();
        let d = SocDistribution::init(&p, 1200, &InitSpec::DiagonalUniform { lo: 0.7, hi: 0.9 })
            .unwrap();
        assert!((d.inner_total() - 1.0).abs() < 1e-12);
        let mut support = vec![];
        for i in 0..1200 {
            for j in 0..1200 {
                if d.inner_at(i, j) > 0.0 {
                    assert_eq!(i, j);
                    support.push(i);
                }
            }
        }
        // a = b in [0.35 d, 0.45 d] -> rows 840..1080
        assert_eq!(support.first(), Some(&840));
        assert_eq!(support.last(), Some(&1079));
        assert_eq!(support.len(), 240);
    }

    #[test]
    fn init_outside_box_rejected() {
        let p = example2();
        assert!(SocDistribution::init(&p, 10, &InitSpec::Dirac(Soc::new(11.0, 1.0))).is_err());
        assert!(SocDistribution::init(
            &p,
            10,
            &InitSpec::BoxUniform {
                a: (9.0, 12.0),
                b: (1.0, 2.0)
            }
        )
        .is_err());
        assert!(
            SocDistribution::init(&p, 10, &InitSpec::DiagonalUniform { lo: 0.5, hi: 1.2 }).is_err()
        );
    }

    #[test]
    fn near_identity_keeps_cells() {
        let p = example2();
        let spec = InitSpec::BoxUniform {
            a: (4.0, 6.5),
            b: (2.0, 8.0),
        };
        let d = SocDistribution::init(&p, 100, &spec).unwrap();
        let load = LoadModel::Uniform { lo: -0.1, hi: 0.1 }
            .discretize(5, 1.0)
            .unwrap();
        let out = d.transform(&p, 1e-9, &load).unwrap();
        for (x, y) in d.inner().iter().zip(out.inner()) {
            assert!((x - y).abs() < 1e-15);
        }
    }

    #[test]
    fn dirac_cell_matches_core_step() {
        let p = example2();
        let load = DiscreteLoad::dirac(-0.05);
        for &(a, b) in &[(5.0, 5.0), (9.0, 3.0), (1.0, 8.0), (9.9, 9.9)] {
            let d = SocDistribution::init(&p, 100, &InitSpec::Dirac(Soc::new(a, b))).unwrap();
            let (ia, ib) = match d.locate(&p, Soc::new(a, b)) {
                Cell::Inner(i, j) => (i, j),
                other => panic!("{other:?}"),
            };
            let rep = d.representative(ia, ib);
            let expected = d.locate(&p, p.step_bounded_approx(30.0, -0.05, rep).unwrap());
            let out = d.transform(&p, 30.0, &load).unwrap();
            let mut mass_at = out.zeros_like();
            mass_at.deposit(expected, 1.0);
            assert_eq!(out.inner(), mass_at.inner(), "start ({a},{b})");
            assert_eq!(out.boundary(), mass_at.boundary());
        }
    }

    #[test]
    fn full_drain_depletes_everything() {
        let p = example2();
        let d = SocDistribution::init(
            &p,
            40,
            &InitSpec::BoxUniform {
                a: (1.0, 9.0),
                b: (1.0, 9.0),
            },
        )
        .unwrap();
        let out = d.transform(&p, 10.0, &DiscreteLoad::dirac(100.0)).unwrap();
        assert_eq!(out.depleted().value(), 1.0);
        assert_eq!(out.survival_probability().value(), 0.0);
        assert_eq!(out.inner_total(), 0.0);
    }

    #[test]
    fn charging_reaches_boundary_and_slides() {
        let p = example2();
        let d = SocDistribution::init(&p, 50, &InitSpec::Dirac(Soc::new(9.0, 9.0))).unwrap();
        let load = DiscreteLoad::dirac(-0.5);
        let d1 = d.transform(&p, 20.0, &load).unwrap();
        assert!((d1.boundary_total() - 1.0).abs() < 1e-15);
        let summary = d1.summary();
        assert_eq!(summary.boundary_total, d1.boundary_total());
        assert_eq!(*summary.a_marginal.last().unwrap(), 1.0);
        let j1 = d1.boundary().iter().position(|&m| m > 0.0).unwrap();
        let d2 = d1.transform(&p, 200.0, &load).unwrap();
        let j2 = d2.boundary().iter().position(|&m| m > 0.0).unwrap();
        assert!(j2 > j1);
        assert!((d2.boundary_total() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn chunked_matches_sequential() {
        let p = example2();
        let d = SocDistribution::init(
            &p,
            60,
            &InitSpec::BoxUniform {
                a: (2.0, 9.5),
                b: (3.0, 9.0),
            },
        )
        .unwrap();
        let load = LoadModel::Normal { mean: 0.0, sd: 0.1 }
            .discretize(7, 1.0 - 1e-9)
            .unwrap();
        let seq = d.transform(&p, 40.0, &load).unwrap();
        let par = d.transform_chunked(&p, 40.0, &load, 7).unwrap();
        for (x, y) in seq.inner().iter().zip(par.inner()) {
            assert!((x - y).abs() <= 1e-15);
        }
        assert_eq!(
            seq.depleted().cmp_exact(par.depleted()),
            std::cmp::Ordering::Equal
        );
    }

    #[test]
    fn zero_duration_rejected() {
        let p = example2();
        let d = SocDistribution::init(&p, 10, &InitSpec::Dirac(Soc::new(5.0, 5.0))).unwrap();
        assert!(d.transform(&p, 0.0, &DiscreteLoad::dirac(0.0)).is_err());
    }

    #[test]
    fn linear_idle_is_identity() {
        let p = example2();
        let d = LinearDistribution::init(
            &p,
            50,
            &InitSpec::BoxUniform {
                a: (4.0, 6.5),
                b: (4.0, 6.5),
            },
        )
        .unwrap();
        assert!((d.charged_total() - 1.0).abs() < 1e-12);
        let out = d.transform(30.0, &DiscreteLoad::dirac(0.0)).unwrap();
        assert_eq!(out.masses(), d.masses());
        assert!(out.depleted().is_zero());
    }

    #[test]
    fn linear_full_drain() {
        let p = example2();
        let d = LinearDistribution::init(&p, 50, &InitSpec::DiagonalUniform { lo: 0.2, hi: 0.9 })
            .unwrap();
        let out = d.transform(10.0, &DiscreteLoad::dirac(5.0)).unwrap();
        assert!((out.depleted().value() - 1.0).abs() < 1e-12);
        assert_eq!(out.charged_total(), 0.0);
    }

    #[test]
    fn linear_box_sum_is_triangular() {
        let p = example2();
        let d = LinearDistribution::init(
            &p,
            100,
            &InitSpec::BoxUniform {
                a: (4.0, 6.0),
                b: (4.0, 6.0),
            },
        )
        .unwrap();
        // a + b is triangular on [8, 12] with peak at 10; cell width 0.1
        let m = d.masses();
        assert!((m[99] - m[100]).abs() < 1e-12);
        assert!((m[80] - 0.00125).abs() < 1e-9, "{}", m[80]);
        assert_eq!(m[79], 0.0);
        assert_eq!(m[120], 0.0);
    }

    #[test]
    fn linear_charge_clamps_to_full() {
        let p = example2();
        let d = LinearDistribution::init(&p, 10, &InitSpec::Dirac(Soc::new(9.0, 9.0))).unwrap();
        let out = d.transform(100.0, &DiscreteLoad::dirac(-1.0)).unwrap();
        assert_eq!(*out.masses().last().unwrap(), 1.0);
    }
}
