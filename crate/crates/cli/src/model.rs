//! JSON model files: battery, initial charge, task process, charge pattern
//! and solver settings.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use kibam::export::DEFAULT_HEATMAP_FLOOR;
use kibam::load::{DEFAULT_COVERAGE, DEFAULT_LOAD_POINTS};
use kibam::mtp::{compose, Mtp, PeriodicCharge};
use kibam::{BatteryParams, InitSpec, LoadModel, Soc};
use serde::Deserialize;

/// A model file that failed to parse or validate.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelError {
    pub path: Option<PathBuf>,
    pub message: String,
}

impl fmt::Display for ModelError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.path {
            Some(p) => write!(f, "{}: {}", p.display(), self.message),
            None => f.write_str(&self.message),
        }
    }
}

impl std::error::Error for ModelError {}

fn invalid(message: impl Into<String>) -> ModelError {
    ModelError {
        path: None,
        message: message.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub battery: BatteryFile,
    pub init: InitFile,
    pub mtp: MtpFile,
    #[serde(default)]
    pub charge: Option<ChargeFile>,
    #[serde(default)]
    pub solver: SolverFile,
    #[serde(default)]
    pub outputs: OutputsFile,
}

/// Capacity is given either in mAh (loads in mA, time in minutes) or
/// directly in charge units.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BatteryFile {
    #[serde(rename = "capacity_mAh", default)]
    pub capacity_mah: Option<f64>,
    #[serde(default)]
    pub capacity: Option<f64>,
    pub c: f64,
    pub p_per_min: f64,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitFile {
    DiagonalUniform { lo: f64, hi: f64 },
    BoxUniform { a: [f64; 2], b: [f64; 2] },
    Dirac { a: f64, b: f64 },
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LoadFile {
    Dirac { value: f64 },
    Uniform { lo: f64, hi: f64 },
    Normal { mean: f64, sd: f64 },
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransitionFile {
    pub from: String,
    pub to: String,
    pub p: f64,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MtpFile {
    pub states: Vec<String>,
    pub initial: BTreeMap<String, f64>,
    pub transitions: Vec<TransitionFile>,
    pub durations: BTreeMap<String, u64>,
    pub loads: BTreeMap<String, LoadFile>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChargeFile {
    /// `(minutes, current)` pairs repeated cyclically.
    pub segments: Vec<(u64, f64)>,
    #[serde(default)]
    pub phase0: u64,
}

#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverFile {
    #[serde(default)]
    pub n_grid: Option<usize>,
    #[serde(default)]
    pub n_load_points: Option<usize>,
    #[serde(default)]
    pub coverage: Option<f64>,
    #[serde(default)]
    pub horizon_min: Option<f64>,
    /// Replace every load by a point mass at its mean.
    #[serde(default)]
    pub dirac_loads: bool,
}

#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputsFile {
    #[serde(default)]
    pub dir: Option<PathBuf>,
    #[serde(default)]
    pub heatmap_floor: Option<f64>,
}

/// Values from the command line that take precedence over the file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub capacity_mah: Option<f64>,
    pub horizon_min: Option<f64>,
    pub n_grid: Option<usize>,
    pub n_load_points: Option<usize>,
    pub dirac_loads: bool,
    pub out: Option<PathBuf>,
}

/// A validated model ready to run.
#[derive(Debug, Clone)]
pub struct Model {
    pub params: BatteryParams,
    pub init: InitSpec,
    /// The task process as written, before adding the charge pattern.
    pub tasks: Mtp,
    pub charge: Option<PeriodicCharge>,
    pub n_grid: usize,
    pub n_load_points: usize,
    pub coverage: f64,
    pub horizon: f64,
    pub out: Option<PathBuf>,
    pub heatmap_floor: f64,
}

impl Model {
    /// The task process with the charge pattern folded in.
    pub fn composed(&self) -> kibam::Result<Mtp> {
        match &self.charge {
            Some(c) => compose(&self.tasks, c),
            None => Ok(self.tasks.clone()),
        }
    }
}

/// Grid size giving the same relative resolution as 1200 cells at 5000 mAh.
pub fn default_n_grid(capacity_mah: f64) -> usize {
    ((1200.0 * capacity_mah / 5000.0).round() as usize).max(1)
}

const DEFAULT_N_GRID: usize = 100;

fn kib(field: &'static str) -> impl Fn(kibam::KibamError) -> ModelError {
    move |e| invalid(format!("{field}: {e}"))
}

impl ModelFile {
    pub fn parse(text: &str) -> Result<Self, ModelError> {
        serde_json::from_str(text).map_err(|e| invalid(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        let at = |mut e: ModelError| {
            e.path = Some(path.to_path_buf());
            e
        };
        let text = std::fs::read_to_string(path).map_err(|e| at(invalid(e.to_string())))?;
        Self::parse(&text).map_err(at)
    }

    /// Checks the file and builds the model, applying `ov` first.
    pub fn build(&self, ov: &Overrides) -> Result<Model, ModelError> {
        let b = &self.battery;
        let capacity_mah = ov.capacity_mah.or(b.capacity_mah);
        let params = match (ov.capacity_mah, b.capacity_mah, b.capacity) {
            (Some(mah), _, _) | (None, Some(mah), None) => {
                BatteryParams::from_mah(b.c, b.p_per_min, mah)
            }
            (None, None, Some(d)) => BatteryParams::new(b.c, b.p_per_min, d),
            (None, None, None) => {
                return Err(invalid(
                    "battery: one of capacity_mAh or capacity is required",
                ))
            }
            (None, Some(_), Some(_)) => {
                return Err(invalid("battery: give capacity_mAh or capacity, not both"))
            }
        }
        .map_err(kib("battery"))?;

        let init = match self.init {
            InitFile::DiagonalUniform { lo, hi } => InitSpec::DiagonalUniform { lo, hi },
            InitFile::BoxUniform { a, b } => InitSpec::BoxUniform {
                a: (a[0], a[1]),
                b: (b[0], b[1]),
            },
            InitFile::Dirac { a, b } => InitSpec::Dirac(Soc::new(a, b)),
        };
        init.validate(&params).map_err(kib("init"))?;

        let tasks = self.mtp.build()?;
        let tasks = if ov.dirac_loads || self.solver.dirac_loads {
            tasks.with_dirac_loads()
        } else {
            tasks
        };
        let charge = match &self.charge {
            Some(c) => {
                Some(PeriodicCharge::new(c.segments.clone(), c.phase0).map_err(kib("charge"))?)
            }
            None => None,
        };

        let s = &self.solver;
        let n_grid = ov
            .n_grid
            .or(s.n_grid)
            .unwrap_or_else(|| capacity_mah.map_or(DEFAULT_N_GRID, default_n_grid));
        if n_grid == 0 {
            return Err(invalid("solver.n_grid: must be positive"));
        }
        let n_load_points = ov
            .n_load_points
            .or(s.n_load_points)
            .unwrap_or(DEFAULT_LOAD_POINTS);
        if n_load_points == 0 {
            return Err(invalid("solver.n_load_points: must be positive"));
        }
        let coverage = s.coverage.unwrap_or(DEFAULT_COVERAGE);
        if !(coverage > 0.0 && coverage <= 1.0) {
            return Err(invalid(format!(
                "solver.coverage: must lie in (0, 1], got {coverage}"
            )));
        }
        let horizon = ov
            .horizon_min
            .or(s.horizon_min)
            .ok_or_else(|| invalid("solver.horizon_min: missing (or pass --horizon-min)"))?;
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(invalid(format!(
                "solver.horizon_min: must be positive, got {horizon}"
            )));
        }
        let heatmap_floor = self.outputs.heatmap_floor.unwrap_or(DEFAULT_HEATMAP_FLOOR);
        if !(heatmap_floor > 0.0) {
            return Err(invalid(format!(
                "outputs.heatmap_floor: must be positive, got {heatmap_floor}"
            )));
        }
        Ok(Model {
            params,
            init,
            tasks,
            charge,
            n_grid,
            n_load_points,
            coverage,
            horizon,
            out: ov.out.clone().or_else(|| self.outputs.dir.clone()),
            heatmap_floor,
        })
    }
}

impl MtpFile {
    fn build(&self) -> Result<Mtp, ModelError> {
        let n = self.states.len();
        let index: BTreeMap<&str, usize> = self
            .states
            .iter()
            .enumerate()
            .map(|(i, s)| (s.as_str(), i))
            .collect();
        if index.len() != n {
            return Err(invalid("mtp.states: duplicate state name"));
        }
        let lookup = |field: String, name: &str| {
            index
                .get(name)
                .copied()
                .ok_or_else(|| invalid(format!("{field}: unknown state '{name}'")))
        };
        let mut initial = vec![0.0; n];
        for (name, &p) in &self.initial {
            initial[lookup("mtp.initial".into(), name)?] = p;
        }
        let mut rows: Vec<Vec<(usize, f64)>> = vec![vec![]; n];
        for (k, t) in self.transitions.iter().enumerate() {
            let from = lookup(format!("mtp.transitions[{k}].from"), &t.from)?;
            let to = lookup(format!("mtp.transitions[{k}].to"), &t.to)?;
            if rows[from].iter().any(|&(j, _)| j == to) {
                return Err(invalid(format!(
                    "mtp.transitions[{k}]: duplicate edge {} -> {}",
                    t.from, t.to
                )));
            }
            rows[from].push((to, t.p));
        }
        for row in &mut rows {
            row.sort_by_key(|&(j, _)| j);
        }
        let mut durations = vec![None; n];
        for (name, &d) in &self.durations {
            durations[lookup("mtp.durations".into(), name)?] = Some(d);
        }
        let mut loads = vec![None; n];
        for (name, g) in &self.loads {
            loads[lookup("mtp.loads".into(), name)?] = Some(match *g {
                LoadFile::Dirac { value } => LoadModel::Dirac(value),
                LoadFile::Uniform { lo, hi } => LoadModel::Uniform { lo, hi },
                LoadFile::Normal { mean, sd } => LoadModel::Normal { mean, sd },
            });
        }
        let missing = |field: &str, i: usize| {
            invalid(format!("{field}: no entry for state '{}'", self.states[i]))
        };
        let durations = durations
            .into_iter()
            .enumerate()
            .map(|(i, d)| d.ok_or_else(|| missing("mtp.durations", i)))
            .collect::<Result<Vec<_>, _>>()?;
        let loads = loads
            .into_iter()
            .enumerate()
            .map(|(i, g)| g.ok_or_else(|| missing("mtp.loads", i)))
            .collect::<Result<Vec<_>, _>>()?;
        Mtp::from_sparse(self.states.clone(), rows, initial, durations, loads)
            .map_err(|e| invalid(format!("mtp: {e}")))
    }
}
