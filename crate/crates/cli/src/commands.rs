//! The four subcommands, as library functions returning printable reports.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use kibam::export::{write_snapshot, SnapshotFiles};
use kibam::montecarlo::{simulate, Estimate};
use kibam::mtp::{propagate, PropagateOptions};
use kibam::{ExtSum, KibamError, LinearDistribution, SocDistribution};

use crate::model::{Model, ModelError};

#[derive(Debug)]
pub enum CliError {
    /// Bad model file or arguments.
    Validation(String),
    /// I/O, resource or convergence failure while running.
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Validation(m) => write!(f, "invalid input: {m}"),
            CliError::Runtime(m) => write!(f, "run failed: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<KibamError> for CliError {
    fn from(e: KibamError) -> Self {
        match e {
            KibamError::Quadrature { .. } | KibamError::Io(_) => CliError::Runtime(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> CliError + '_ {
    move |e| CliError::Runtime(format!("{}: {e}", path.display()))
}

fn options(model: &Model) -> PropagateOptions {
    PropagateOptions {
        n_load_points: model.n_load_points,
        coverage: model.coverage,
        ..Default::default()
    }
}

#[derive(Debug, Clone)]
pub struct SolveReport {
    pub n_grid: usize,
    pub horizon: f64,
    pub composed_tasks: usize,
    pub vertices: usize,
    pub max_frontier: usize,
    pub inner_total: f64,
    pub boundary_total: f64,
    pub depleted: ExtSum,
    pub survival: ExtSum,
    pub elapsed: Duration,
    pub written: Vec<PathBuf>,
}

impl fmt::Display for SolveReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "grid cells per axis   {}", self.n_grid)?;
        writeln!(f, "horizon (min)         {}", self.horizon)?;
        writeln!(f, "composed tasks        {}", self.composed_tasks)?;
        writeln!(f, "vertices              {}", self.vertices)?;
        writeln!(f, "largest frontier      {}", self.max_frontier)?;
        writeln!(f, "inner mass            {:e}", self.inner_total)?;
        writeln!(f, "boundary mass         {:e}", self.boundary_total)?;
        writeln!(
            f,
            "depleted              {}",
            self.depleted.to_sci_string(6)
        )?;
        writeln!(
            f,
            "depleted (exact)      {}",
            self.depleted.to_exact_decimal()
        )?;
        writeln!(
            f,
            "survival at least     {}",
            self.survival.to_exact_decimal()
        )?;
        for p in &self.written {
            writeln!(f, "wrote                 {}", p.display())?;
        }
        write!(f, "wall time (s)         {:.3}", self.elapsed.as_secs_f64())
    }
}

/// Propagates the grid distribution through the composed task process.
pub fn solve(model: &Model) -> Result<SolveReport, CliError> {
    let started = Instant::now();
    let m = model.composed()?;
    let init = SocDistribution::init(&model.params, model.n_grid, &model.init)?;
    let out = propagate(&m, &model.params, &init, model.horizon, &options(model))?;
    let summary = out.dist.summary();
    let mut written = vec![];
    if let Some(dir) = &model.out {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        let files = SnapshotFiles::new(dir, "final");
        write_snapshot(&out.dist, &files, model.heatmap_floor)?;
        written.extend([
            files.inner_csv,
            files.boundary_csv,
            files.scalars,
            files.heatmap,
        ]);
    }
    Ok(SolveReport {
        n_grid: model.n_grid,
        horizon: model.horizon,
        composed_tasks: m.len(),
        vertices: out.vertex_count,
        max_frontier: out.max_frontier,
        inner_total: summary.inner_total,
        boundary_total: summary.boundary_total,
        depleted: summary.depleted,
        survival: summary.survival,
        elapsed: started.elapsed(),
        written,
    })
}

#[derive(Debug, Clone)]
pub struct LinearReport {
    pub n_cells: usize,
    pub composed_tasks: usize,
    pub depleted: ExtSum,
    pub survival: ExtSum,
    pub elapsed: Duration,
}

impl fmt::Display for LinearReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "charge cells          {}", self.n_cells)?;
        writeln!(f, "composed tasks        {}", self.composed_tasks)?;
        writeln!(
            f,
            "depleted              {}",
            self.depleted.to_sci_string(6)
        )?;
        writeln!(
            f,
            "depleted (exact)      {}",
            self.depleted.to_exact_decimal()
        )?;
        writeln!(
            f,
            "survival at least     {}",
            self.survival.to_exact_decimal()
        )?;
        write!(f, "wall time (s)         {:.3}", self.elapsed.as_secs_f64())
    }
}

/// Same run for the single-well model holding all charge as available.
pub fn linear(model: &Model) -> Result<LinearReport, CliError> {
    let started = Instant::now();
    let m = model.composed()?;
    let init = LinearDistribution::init(&model.params, model.n_grid, &model.init)?;
    let out = propagate(&m, &(), &init, model.horizon, &options(model))?;
    Ok(LinearReport {
        n_cells: out.dist.masses().len(),
        composed_tasks: m.len(),
        depleted: out.dist.depleted().clone(),
        survival: out.dist.survival_probability(),
        elapsed: started.elapsed(),
    })
}

#[derive(Debug, Clone)]
pub struct SimulateReport {
    pub estimate: Estimate,
    pub seed: u64,
    pub runs_csv: Option<PathBuf>,
    pub elapsed: Duration,
}

impl fmt::Display for SimulateReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let e = &self.estimate;
        writeln!(f, "runs                  {} (seed {})", e.runs, self.seed)?;
        writeln!(f, "depleted runs         {}", e.runs - e.survived)?;
        writeln!(
            f,
            "survival              {:.6} +- {:.6}",
            e.survival, e.std_error
        )?;
        if let Some(p) = &self.runs_csv {
            writeln!(f, "wrote                 {}", p.display())?;
        }
        write!(f, "wall time (s)         {:.3}", self.elapsed.as_secs_f64())
    }
}

/// Monte Carlo estimate with exact bounded dynamics; with an output
/// directory every run is listed in `runs.csv`.
pub fn simulate_runs(model: &Model, runs: u64, seed: u64) -> Result<SimulateReport, CliError> {
    if runs == 0 {
        return Err(CliError::Validation("--runs must be positive".into()));
    }
    let started = Instant::now();
    let m = model.composed()?;
    let outcomes = simulate(&m, &model.params, &model.init, model.horizon, 0..runs, seed)?;
    let survived = outcomes.iter().filter(|o| !o.depleted).count() as u64;
    let mut runs_csv = None;
    if let Some(dir) = &model.out {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        let path = dir.join("runs.csv");
        let mut w = std::io::BufWriter::new(fs::File::create(&path).map_err(io_err(&path))?);
        writeln!(w, "run,depleted,depletion_time,available,bound").map_err(io_err(&path))?;
        for (r, o) in outcomes.iter().enumerate() {
            let t = o.depletion_time.map(|t| t.to_string()).unwrap_or_default();
            writeln!(
                w,
                "{r},{},{t},{},{}",
                o.depleted, o.final_soc.a, o.final_soc.b
            )
            .map_err(io_err(&path))?;
        }
        w.flush().map_err(io_err(&path))?;
        runs_csv = Some(path);
    }
    Ok(SimulateReport {
        estimate: Estimate::from_counts(runs, survived),
        seed,
        runs_csv,
        elapsed: started.elapsed(),
    })
}

/// Writes a snapshot of the distribution at every checkpoint time, using
/// the prefix `t<minutes>`.
pub fn export(model: &Model, checkpoints: &[f64]) -> Result<Vec<SnapshotFiles>, CliError> {
    let dir = model
        .out
        .as_ref()
        .ok_or_else(|| CliError::Validation("export needs --out or outputs.dir".into()))?;
    if checkpoints.is_empty() {
        return Err(CliError::Validation(
            "export needs at least one checkpoint".into(),
        ));
    }
    if let Some(t) = checkpoints.iter().find(|t| !(**t >= 0.0 && t.is_finite())) {
        return Err(CliError::Validation(format!(
            "checkpoint {t} is not a non-negative time"
        )));
    }
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let m = model.composed()?;
    let init = SocDistribution::init(&model.params, model.n_grid, &model.init)?;
    let mut written = vec![];
    for &t in checkpoints {
        let dist = if t == 0.0 {
            init.clone()
        } else {
            propagate(&m, &model.params, &init, t, &options(model))?.dist
        };
        let files = SnapshotFiles::new(dir, &format!("t{t}"));
        write_snapshot(&dist, &files, model.heatmap_floor)?;
        written.push(files);
    }
    Ok(written)
}
