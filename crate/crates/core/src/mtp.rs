//! Markov task processes, their superposition with a periodic charge
//! pattern, and forward propagation of charge distributions over the
//! induced time-ordered graph.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};

use ordered_float::OrderedFloat;

use crate::accum::ExtSum;
use crate::battery::BatteryParams;
use crate::error::{KibamError, Result};
use crate::grid::{LinearDistribution, SocDistribution};
use crate::load::{DiscreteLoad, LoadModel};
use crate::par;

const PROB_TOL: f64 = 1e-12;

/// A discrete-time Markov chain whose states are tasks: each task runs for
/// a fixed number of minutes under a random constant load.
#[derive(Debug, Clone, PartialEq)]
pub struct Mtp {
    names: Vec<String>,
    /// Sparse rows of the transition matrix, positive entries only.
    transitions: Vec<Vec<(usize, f64)>>,
    initial: Vec<f64>,
    durations: Vec<u64>,
    loads: Vec<LoadModel>,
}

impl Mtp {
    /// Builds and validates a task process from a dense transition matrix.
    pub fn new(
        names: Vec<String>,
        transitions: Vec<Vec<f64>>,
        initial: Vec<f64>,
        durations: Vec<u64>,
        loads: Vec<LoadModel>,
    ) -> Result<Self> {
        let n = names.len();
        if transitions.len() != n || transitions.iter().any(|r| r.len() != n) {
            return Err(KibamError::InvalidModel(format!(
                "transition matrix must be {n}x{n}"
            )));
        }
        let sparse = transitions
            .iter()
            .map(|row| {
                row.iter()
                    .enumerate()
                    .filter(|(_, &p)| p != 0.0)
                    .map(|(j, &p)| (j, p))
                    .collect()
            })
            .collect();
        Self::from_sparse(names, sparse, initial, durations, loads)
    }

    pub fn from_sparse(
        names: Vec<String>,
        transitions: Vec<Vec<(usize, f64)>>,
        initial: Vec<f64>,
        durations: Vec<u64>,
        loads: Vec<LoadModel>,
    ) -> Result<Self> {
        let n = names.len();
        let bad = |m: String| Err(KibamError::InvalidModel(m));
        if n == 0 {
            return bad("at least one task is required".into());
        }
        if transitions.len() != n || initial.len() != n || durations.len() != n || loads.len() != n
        {
            return bad(
                "names, transitions, initial, durations and loads must have equal length".into(),
            );
        }
        let mut seen = BTreeSet::new();
        for name in &names {
            if !seen.insert(name) {
                return bad(format!("duplicate task name {name:?}"));
            }
        }
        for (s, row) in transitions.iter().enumerate() {
            if row
                .iter()
                .any(|&(j, p)| j >= n || !(0.0..=1.0).contains(&p))
            {
                return bad(format!("row {:?} has an invalid entry", names[s]));
            }
            let sum: f64 = row.iter().map(|p| p.1).sum();
            if (sum - 1.0).abs() > PROB_TOL {
                return bad(format!("row {:?} sums to {sum}", names[s]));
            }
        }
        if initial.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
            return bad("initial probabilities must lie in [0, 1]".into());
        }
        let sum: f64 = initial.iter().sum();
        if (sum - 1.0).abs() > PROB_TOL {
            return bad(format!("initial distribution sums to {sum}"));
        }
        if let Some(s) = durations.iter().position(|&d| d == 0) {
            return bad(format!("task {:?} has zero duration", names[s]));
        }
        for load in &loads {
            load.validate()?;
        }
        let transitions = transitions
            .into_iter()
            .map(|row| row.into_iter().filter(|&(_, p)| p > 0.0).collect())
            .collect();
        Ok(Mtp {
            names,
            transitions,
            initial,
            durations,
            loads,
        })
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn successors(&self, s: usize) -> &[(usize, f64)] {
        &self.transitions[s]
    }

    pub fn initial(&self) -> &[f64] {
        &self.initial
    }

    pub fn duration(&self, s: usize) -> u64 {
        self.durations[s]
    }

    pub fn load(&self, s: usize) -> &LoadModel {
        &self.loads[s]
    }

    /// Same process with every load replaced by a point mass at its mean.
    pub fn with_dirac_loads(&self) -> Mtp {
        let mut m = self.clone();
        m.loads = m.loads.iter().map(|g| LoadModel::Dirac(g.mean())).collect();
        m
    }

    /// Discretizes every task's load.
    pub fn discretized_loads(&self, n_points: usize, coverage: f64) -> Result<Vec<DiscreteLoad>> {
        self.loads
            .iter()
            .map(|g| g.discretize(n_points, coverage))
            .collect()
    }
}

/// Deterministic cyclic load pattern, e.g. sunlight and eclipse.
#[derive(Debug, Clone, PartialEq)]
pub struct PeriodicCharge {
    segments: Vec<(u64, f64)>,
    phase0: u64,
}

impl PeriodicCharge {
    /// `segments` are `(minutes, current)` pairs; `phase0` is the offset into
    /// the cycle at time zero.
    pub fn new(segments: Vec<(u64, f64)>, phase0: u64) -> Result<Self> {
        if segments.is_empty() {
            return Err(KibamError::InvalidModel(
                "charge pattern needs at least one segment".into(),
            ));
        }
        if segments.iter().any(|&(d, i)| d == 0 || !i.is_finite()) {
            return Err(KibamError::InvalidModel(
                "charge segments need positive durations and finite currents".into(),
            ));
        }
        Ok(PeriodicCharge { segments, phase0 })
    }

    /// A single zero-current segment, i.e. no charging at all.
    pub fn none() -> Self {
        PeriodicCharge {
            segments: vec![(1, 0.0)],
            phase0: 0,
        }
    }

    pub fn segments(&self) -> &[(u64, f64)] {
        &self.segments
    }

    pub fn period(&self) -> u64 {
        self.segments.iter().map(|s| s.0).sum()
    }

    /// Segment index and minutes left in it at time zero.
    pub fn start(&self) -> (usize, u64) {
        let mut off = self.phase0 % self.period();
        for (j, &(d, _)) in self.segments.iter().enumerate() {
            if off < d {
                return (j, d - off);
            }
            off -= d;
        }
        unreachable!("offset reduced modulo the period")
    }

    /// Same pattern with every current multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        PeriodicCharge {
            segments: self
                .segments
                .iter()
                .map(|&(d, i)| (d, i * factor))
                .collect(),
            phase0: self.phase0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
struct Phase {
    task: usize,
    task_left: u64,
    segment: usize,
    segment_left: u64,
}

/// Product of a task process with a periodic charge pattern. Each state is
/// a task together with the minutes it has left, the charge segment, and the
/// minutes that segment has left; it runs until the earlier of the two
/// ends, under the task's load shifted by the segment's current. A pattern
/// with a single segment is a constant current and splits no task.
pub fn compose(m: &Mtp, charge: &PeriodicCharge) -> Result<Mtp> {
    let constant = charge.segments.len() == 1;
    let (seg0, left0) = if constant {
        (0, u64::MAX)
    } else {
        charge.start()
    };
    let mut index: HashMap<Phase, usize> = HashMap::new();
    let mut phases: Vec<Phase> = Vec::new();
    let mut queue = VecDeque::new();
    let mut intern = |p: Phase, phases: &mut Vec<Phase>, queue: &mut VecDeque<usize>| -> usize {
        *index.entry(p).or_insert_with(|| {
            phases.push(p);
            queue.push_back(phases.len() - 1);
            phases.len() - 1
        })
    };
    let mut initial_pairs = Vec::new();
    for (s, &pi) in m.initial.iter().enumerate() {
        if pi > 0.0 {
            let p = Phase {
                task: s,
                task_left: m.durations[s],
                segment: seg0,
                segment_left: left0,
            };
            initial_pairs.push((intern(p, &mut phases, &mut queue), pi));
        }
    }
    let mut rows: Vec<Vec<(usize, f64)>> = Vec::new();
    while let Some(id) = queue.pop_front() {
        let p = phases[id];
        let step = p.task_left.min(p.segment_left);
        let (segment, segment_left) = if constant {
            (0, u64::MAX)
        } else if p.segment_left == step {
            let next = (p.segment + 1) % charge.segments.len();
            (next, charge.segments[next].0)
        } else {
            (p.segment, p.segment_left - step)
        };
        let row = if p.task_left == step {
            m.transitions[p.task]
                .iter()
                .map(|&(t, pr)| {
                    let q = Phase {
                        task: t,
                        task_left: m.durations[t],
                        segment,
                        segment_left,
                    };
                    (intern(q, &mut phases, &mut queue), pr)
                })
                .collect()
        } else {
            let q = Phase {
                task: p.task,
                task_left: p.task_left - step,
                segment,
                segment_left,
            };
            vec![(intern(q, &mut phases, &mut queue), 1.0)]
        };
        if rows.len() <= id {
            rows.resize(id + 1, Vec::new());
        }
        rows[id] = row;
    }
    let n = phases.len();
    let mut initial = vec![0.0; n];
    for (id, pi) in initial_pairs {
        initial[id] += pi;
    }
    let names = phases
        .iter()
        .map(|p| {
            if constant {
                format!("{}[{}]", m.names[p.task], p.task_left)
            } else {
                format!(
                    "{}[{}]@{}[{}]",
                    m.names[p.task], p.task_left, p.segment, p.segment_left
                )
            }
        })
        .collect();
    let durations = phases
        .iter()
        .map(|p| p.task_left.min(p.segment_left))
        .collect();
    let loads = phases
        .iter()
        .map(|p| m.loads[p.task].shifted(charge.segments[p.segment].1))
        .collect();
    Mtp::from_sparse(names, rows, initial, durations, loads)
}

/// A charge distribution that can be carried along the task graph.
pub trait Label: Clone + Send + Sync {
    type Ctx: Sync;

    /// Distribution after a task of `duration` minutes.
    fn step(&self, ctx: &Self::Ctx, duration: f64, load: &DiscreteLoad) -> Result<Self>;
    fn scale(&mut self, factor: f64);
    fn absorb(&mut self, other: &Self);
    /// Moves the depleted mass out, leaving zero behind.
    fn take_depleted(&mut self) -> ExtSum;
    fn add_depleted(&mut self, mass: &ExtSum);
    /// Mass not yet depleted.
    fn live_mass(&self) -> f64;
}

impl Label for SocDistribution {
    type Ctx = BatteryParams;

    fn step(&self, ctx: &BatteryParams, duration: f64, load: &DiscreteLoad) -> Result<Self> {
        self.transform(ctx, duration, load)
    }

    fn scale(&mut self, factor: f64) {
        SocDistribution::scale(self, factor)
    }

    fn absorb(&mut self, other: &Self) {
        SocDistribution::absorb(self, other)
    }

    fn take_depleted(&mut self) -> ExtSum {
        SocDistribution::take_depleted(self)
    }

    fn add_depleted(&mut self, mass: &ExtSum) {
        SocDistribution::add_depleted(self, mass)
    }

    fn live_mass(&self) -> f64 {
        self.inner_total() + self.boundary_total()
    }
}

impl Label for LinearDistribution {
    type Ctx = ();

    fn step(&self, _: &(), duration: f64, load: &DiscreteLoad) -> Result<Self> {
        self.transform(duration, load)
    }

    fn scale(&mut self, factor: f64) {
        LinearDistribution::scale(self, factor)
    }

    fn absorb(&mut self, other: &Self) {
        LinearDistribution::absorb(self, other)
    }

    fn take_depleted(&mut self) -> ExtSum {
        LinearDistribution::take_depleted(self)
    }

    fn add_depleted(&mut self, mass: &ExtSum) {
        LinearDistribution::add_depleted(self, mass)
    }

    fn live_mass(&self) -> f64 {
        self.charged_total()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PropagateOptions {
    pub n_load_points: usize,
    pub coverage: f64,
    /// Keep the list of visited (task, time) vertices.
    pub record_vertices: bool,
    /// Check total mass after every time level.
    pub track_mass: bool,
}

impl Default for PropagateOptions {
    fn default() -> Self {
        PropagateOptions {
            n_load_points: crate::load::DEFAULT_LOAD_POINTS,
            coverage: crate::load::DEFAULT_COVERAGE,
            record_vertices: false,
            track_mass: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Propagation<L> {
    /// Sum of the labels of all vertices at the horizon.
    pub dist: L,
    /// Reached (task, time) vertices in time order, if recorded.
    pub vertices: Option<Vec<(usize, f64)>>,
    pub vertex_count: usize,
    /// Largest frontier (number of vertices alive at once).
    pub max_frontier: usize,
    /// Largest deviation of the total mass from its initial value.
    pub max_mass_error: Option<f64>,
}

type Frontier<L> = BTreeMap<OrderedFloat<f64>, BTreeMap<usize, L>>;

fn insert_label<L: Label>(frontier: &mut Frontier<L>, t: f64, s: usize, label: L) -> bool {
    let level = frontier.entry(OrderedFloat(t)).or_default();
    match level.get_mut(&s) {
        Some(existing) => {
            existing.absorb(&label);
            false
        }
        None => {
            level.insert(s, label);
            true
        }
    }
}

/// Distribution at time `horizon` of a battery starting with `init` and
/// running the task process `m`.
///
/// Vertices are created lazily and processed in increasing time order; all
/// vertices of one time level are transformed independently and their
/// outputs merged in task order, so only the frontier is held in memory.
pub fn propagate<L: Label>(
    m: &Mtp,
    ctx: &L::Ctx,
    init: &L,
    horizon: f64,
    opts: &PropagateOptions,
) -> Result<Propagation<L>> {
    if !(horizon > 0.0) || !horizon.is_finite() {
        return Err(KibamError::NonPositiveTime(horizon));
    }
    let loads = m.discretized_loads(opts.n_load_points, opts.coverage)?;
    let mut start = init.clone();
    let mut depleted = start.take_depleted();
    let initial_mass = start.live_mass() + depleted.value();
    let mut zero = start.clone();
    zero.scale(0.0);

    let mut frontier: Frontier<L> = BTreeMap::new();
    let mut vertices = opts.record_vertices.then(Vec::new);
    let mut vertex_count = 0;
    for (s, &pi) in m.initial.iter().enumerate() {
        if pi > 0.0 {
            let mut label = start.clone();
            label.scale(pi);
            insert_label(&mut frontier, 0.0, s, label);
            vertex_count += 1;
            if let Some(v) = vertices.as_mut() {
                v.push((s, 0.0));
            }
        }
    }

    let mut result = zero;
    let mut final_tasks = BTreeSet::new();
    let mut max_frontier = 0;
    let mut max_mass_error = opts.track_mass.then_some(0.0f64);
    while let Some((time, level)) = frontier.pop_first() {
        let t = time.0;
        max_frontier =
            max_frontier.max(level.len() + frontier.values().map(BTreeMap::len).sum::<usize>());
        let nodes: Vec<(usize, L)> = level.into_iter().collect();
        let outputs = par::map_collect(&nodes, |(s, label)| {
            let next = (t + m.durations[*s] as f64).min(horizon);
            label.step(ctx, next - t, &loads[*s]).map(|out| (next, out))
        });
        for ((s, _), out) in nodes.iter().zip(outputs) {
            let (next, mut out) = out?;
            depleted.add_sum(&out.take_depleted());
            if next >= horizon {
                result.absorb(&out);
                for &(succ, _) in &m.transitions[*s] {
                    if final_tasks.insert(succ) {
                        vertex_count += 1;
                        if let Some(v) = vertices.as_mut() {
                            v.push((succ, horizon));
                        }
                    }
                }
                continue;
            }
            for &(succ, p) in &m.transitions[*s] {
                let mut part = out.clone();
                part.scale(p);
                if insert_label(&mut frontier, next, succ, part) {
                    vertex_count += 1;
                    if let Some(v) = vertices.as_mut() {
                        v.push((succ, next));
                    }
                }
            }
        }
        if let Some(err) = max_mass_error.as_mut() {
            let live: f64 = frontier
                .values()
                .flat_map(BTreeMap::values)
                .map(L::live_mass)
                .sum();
            let total = live + result.live_mass() + depleted.value();
            *err = err.max((total - initial_mass).abs());
        }
    }
    result.add_depleted(&depleted);
    if let Some(v) = vertices.as_mut() {
        v.sort_by(|x, y| x.1.total_cmp(&y.1).then(x.0.cmp(&y.0)));
    }
    Ok(Propagation {
        dist: result,
        vertices,
        vertex_count,
        max_frontier,
        max_mass_error,
    })
}

/// Probability mass depleted by time `horizon`; the battery powers the
/// process up to `horizon` with probability at least one minus this.
pub fn depletion_bound(
    m: &Mtp,
    params: &BatteryParams,
    init: &SocDistribution,
    horizon: f64,
    opts: &PropagateOptions,
) -> Result<ExtSum> {
    Ok(propagate(m, params, init, horizon, opts)?
        .dist
        .depleted()
        .clone())
}

/// (task, time) vertices of the graph induced by `m` up to `horizon`,
/// reachable from the initial tasks, in time order.
pub fn reachable_vertices(m: &Mtp, horizon: f64) -> Vec<(usize, f64)> {
    let mut seen: BTreeSet<(OrderedFloat<f64>, usize)> = BTreeSet::new();
    let mut todo: BTreeSet<(OrderedFloat<f64>, usize)> = BTreeSet::new();
    for (s, &pi) in m.initial.iter().enumerate() {
        if pi > 0.0 {
            todo.insert((OrderedFloat(0.0), s));
        }
    }
    while let Some((t, s)) = todo.pop_first() {
        if !seen.insert((t, s)) || t.0 >= horizon {
            continue;
        }
        let next = (t.0 + m.durations[s] as f64).min(horizon);
        for &(succ, _) in &m.transitions[s] {
            todo.insert((OrderedFloat(next), succ));
        }
    }
    seen.into_iter().map(|(t, s)| (s, t.0)).collect()
}
