//! Trajectory sampling of the capacity-bounded battery under a task
//! process, using exact hitting times. Gives an unbiased survival estimate
//! to hold the grid bounds against.

use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::battery::{BatteryParams, Soc};
use crate::error::{KibamError, Result};
use crate::grid::InitSpec;
use crate::mtp::Mtp;
use crate::par;

/// Outcome of one sampled run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunOutcome {
    pub depleted: bool,
    /// State at the horizon, or empty if depleted.
    pub final_soc: Soc,
    pub depletion_time: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub runs: u64,
    pub survived: u64,
    /// Fraction of runs that did not deplete before the horizon.
    pub survival: f64,
    /// Binomial standard error of `survival`.
    pub std_error: f64,
}

impl Estimate {
    pub fn from_counts(runs: u64, survived: u64) -> Self {
        let p = survived as f64 / runs as f64;
        Estimate {
            runs,
            survived,
            survival: p,
            std_error: (p * (1.0 - p) / runs as f64).sqrt(),
        }
    }
}

/// Generator for run number `run` of the experiment seeded with `seed`.
pub fn run_rng(seed: u64, run: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(run);
    rng
}

fn pick<R: Rng + ?Sized>(weights: impl Iterator<Item = (usize, f64)>, rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = 0;
    for (s, w) in weights {
        acc += w;
        last = s;
        if u < acc {
            return s;
        }
    }
    last
}

/// Samples one run of `m` up to `horizon` minutes.
pub fn sample_run<R: Rng + ?Sized>(
    m: &Mtp,
    params: &BatteryParams,
    init: &InitSpec,
    horizon: f64,
    rng: &mut R,
) -> Result<RunOutcome> {
    let mut soc = init.sample(params, rng);
    let mut task = pick(m.initial().iter().copied().enumerate(), rng);
    let depleted_at = |t: f64| RunOutcome {
        depleted: true,
        final_soc: Soc::EMPTY,
        depletion_time: Some(t),
    };
    if soc.a <= 0.0 {
        return Ok(depleted_at(0.0));
    }
    let mut t = 0.0;
    loop {
        let dur = (m.duration(task) as f64).min(horizon - t);
        let load = m.load(task).sample(rng);
        let end = params.step_unbounded(dur, load, soc)?;
        if end.a <= 0.0 {
            // no return from zero within a constant-load segment
            let hit = params.depletion_time(load, soc).unwrap_or(dur).min(dur);
            return Ok(depleted_at(t + hit));
        }
        soc = params.step_bounded(dur, load, soc)?;
        t += dur;
        if t >= horizon {
            return Ok(RunOutcome {
                depleted: false,
                final_soc: soc,
                depletion_time: None,
            });
        }
        task = pick(m.successors(task).iter().copied(), rng);
    }
}

/// Outcomes of runs `runs` (each with its own stream of `seed`), in order.
pub fn simulate(
    m: &Mtp,
    params: &BatteryParams,
    init: &InitSpec,
    horizon: f64,
    runs: Range<u64>,
    seed: u64,
) -> Result<Vec<RunOutcome>> {
    if !(horizon > 0.0) {
        return Err(KibamError::NonPositiveTime(horizon));
    }
    init.validate(params)?;
    const BLOCK: u64 = 1024;
    let blocks: Vec<Range<u64>> = (runs.start..runs.end)
        .step_by(BLOCK as usize)
        .map(|s| s..(s + BLOCK).min(runs.end))
        .collect();
    let parts = par::map_collect(&blocks, |block| {
        block
            .clone()
            .map(|r| sample_run(m, params, init, horizon, &mut run_rng(seed, r)))
            .collect::<Result<Vec<_>>>()
    });
    let mut out = Vec::with_capacity((runs.end - runs.start) as usize);
    for part in parts {
        out.extend(part?);
    }
    Ok(out)
}

/// Survival estimate from `n_runs` independent runs.
pub fn estimate(
    m: &Mtp,
    params: &BatteryParams,
    init: &InitSpec,
    horizon: f64,
    n_runs: u64,
    seed: u64,
) -> Result<Estimate> {
    if n_runs < 1 {
        return Err(KibamError::InvalidModel(
            "at least one run is required".into(),
        ));
    }
    let outcomes = simulate(m, params, init, horizon, 0..n_runs, seed)?;
    let survived = outcomes.iter().filter(|o| !o.depleted).count() as u64;
    Ok(Estimate::from_counts(n_runs, survived))
}
