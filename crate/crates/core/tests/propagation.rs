use std::cmp::Ordering;

use kibam::grid::Cell;
use kibam::mtp::{compose, propagate, reachable_vertices, Mtp, PeriodicCharge, PropagateOptions};
use kibam::{BatteryParams, InitSpec, LinearDistribution, LoadModel, Soc, SocDistribution};

fn params() -> BatteryParams {
    BatteryParams::new(0.5, 0.002, 20.0).unwrap()
}

fn chain(order: &[usize]) -> Mtp {
    // three tasks; `order[k]` is the position of task k in the state list
    let base_p = [[0.2, 0.5, 0.3], [0.6, 0.0, 0.4], [0.1, 0.1, 0.8]];
    let base_loads = [
        LoadModel::Normal {
            mean: 0.08,
            sd: 0.02,
        },
        LoadModel::Uniform { lo: -0.3, hi: 0.0 },
        LoadModel::Dirac(0.15),
    ];
    let durations = [7u64, 13, 5];
    let n = 3;
    let mut names = vec![String::new(); n];
    let mut p = vec![vec![0.0; n]; n];
    let mut init = vec![0.0; n];
    let mut dur = vec![0; n];
    let mut loads = vec![LoadModel::Dirac(0.0); n];
    for k in 0..n {
        names[order[k]] = format!("t{k}");
        for j in 0..n {
            p[order[k]][order[j]] = base_p[k][j];
        }
        dur[order[k]] = durations[k];
        loads[order[k]] = base_loads[k].clone();
    }
    init[order[0]] = 0.7;
    init[order[2]] = 0.3;
    Mtp::new(names, p, init, dur, loads).unwrap()
}

#[test]
fn relabelling_tasks_changes_only_summation_order() {
    let p = params();
    let init = SocDistribution::init(
        &p,
        40,
        &InitSpec::BoxUniform {
            a: (2.0, 5.0),
            b: (3.0, 8.0),
        },
    )
    .unwrap();
    let opts = PropagateOptions {
        n_load_points: 5,
        ..Default::default()
    };
    let a = propagate(&chain(&[0, 1, 2]), &p, &init, 120.0, &opts)
        .unwrap()
        .dist;
    let b = propagate(&chain(&[2, 0, 1]), &p, &init, 120.0, &opts)
        .unwrap()
        .dist;
    for (x, y) in a.inner().iter().zip(b.inner()) {
        assert!((x - y).abs() <= 1e-14, "{x} {y}");
    }
    let (da, db) = (a.depleted().value(), b.depleted().value());
    assert!(da > 0.0);
    assert!((da - db).abs() <= 1e-14 * da);
}

#[test]
fn depletion_grows_with_horizon() {
    let p = params();
    let m = chain(&[0, 1, 2]);
    let init =
        SocDistribution::init(&p, 30, &InitSpec::DiagonalUniform { lo: 0.3, hi: 0.6 }).unwrap();
    let opts = PropagateOptions {
        n_load_points: 5,
        ..Default::default()
    };
    let mut last = kibam::ExtSum::new();
    for horizon in [20.0, 45.5, 90.0, 200.0] {
        let e = propagate(&m, &p, &init, horizon, &opts)
            .unwrap()
            .dist
            .depleted()
            .clone();
        assert_ne!(e.cmp_exact(&last), Ordering::Less, "horizon {horizon}");
        last = e;
    }
    assert!(last.value() > 0.0);
}

#[test]
fn mass_is_conserved_at_every_level() {
    let p = params();
    let charge = PeriodicCharge::new(vec![(11, -0.5), (6, 0.0)], 3).unwrap();
    let m = compose(&chain(&[0, 1, 2]), &charge).unwrap();
    let init =
        SocDistribution::init(&p, 25, &InitSpec::DiagonalUniform { lo: 0.1, hi: 0.9 }).unwrap();
    let opts = PropagateOptions {
        n_load_points: 4,
        track_mass: true,
        ..Default::default()
    };
    let out = propagate(&m, &p, &init, 300.0, &opts).unwrap();
    assert!(out.max_mass_error.unwrap() < 1e-9);
    assert!((out.dist.total_mass() - 1.0).abs() < 1e-9);
}

#[test]
fn deterministic_chain_matches_approx_steps() {
    let p = params();
    let names = vec!["charge".to_string(), "draw".to_string()];
    let m = Mtp::new(
        names,
        vec![vec![0.0, 1.0], vec![1.0, 0.0]],
        vec![1.0, 0.0],
        vec![17, 23],
        vec![LoadModel::Dirac(-0.4), LoadModel::Dirac(0.2)],
    )
    .unwrap();
    let start = Soc::new(3.3, 6.1);
    let init = SocDistribution::init(&p, 50, &InitSpec::Dirac(start)).unwrap();
    let horizon = 400.0;
    let out = propagate(&m, &p, &init, horizon, &PropagateOptions::default())
        .unwrap()
        .dist;

    // follow the representative point by hand
    let mut cell = init.locate(&p, start);
    let (mut t, mut task) = (0.0, 0);
    while t < horizon {
        let dur = (m.duration(task) as f64).min(horizon - t);
        let rep = match cell {
            Cell::Inner(i, j) => init.representative(i, j),
            Cell::Boundary(j) => Soc::new(p.amax(), j as f64 * init.delta_b()),
            Cell::Depleted => break,
        };
        let load = m.load(task).mean();
        cell = match cell {
            Cell::Inner(0, _) => Cell::Depleted,
            Cell::Boundary(_) => {
                // boundary rules of the transformer
                let b = rep.b;
                if b >= p.boundary_threshold(load) {
                    init.locate(&p, Soc::new(p.amax(), p.boundary_evolve(dur, b)))
                } else {
                    let e = p.step_unbounded(dur, load, rep).unwrap();
                    if e.a > p.amax() {
                        cell
                    } else {
                        init.locate(&p, e)
                    }
                }
            }
            _ => init.locate(&p, p.step_bounded_approx(dur, load, rep).unwrap()),
        };
        t += dur;
        task = 1 - task;
    }
    match cell {
        Cell::Inner(i, j) => assert_eq!(out.inner_at(i, j), 1.0),
        Cell::Boundary(j) => assert_eq!(out.boundary()[j], 1.0),
        Cell::Depleted => assert_eq!(out.depleted().value(), 1.0),
    }
    assert!((out.total_mass() - 1.0).abs() < 1e-15);
}

#[test]
fn linear_model_propagates() {
    let p = params();
    let m = chain(&[0, 1, 2]);
    let init =
        LinearDistribution::init(&p, 30, &InitSpec::DiagonalUniform { lo: 0.3, hi: 0.6 }).unwrap();
    let opts = PropagateOptions {
        n_load_points: 5,
        track_mass: true,
        ..Default::default()
    };
    let out = propagate(&m, &(), &init, 200.0, &opts).unwrap();
    assert!(out.max_mass_error.unwrap() < 1e-9);
    let kibam_init =
        SocDistribution::init(&p, 30, &InitSpec::DiagonalUniform { lo: 0.3, hi: 0.6 }).unwrap();
    let kibam = propagate(&m, &p, &kibam_init, 200.0, &opts).unwrap();
    // the single well has all its charge available
    assert!(out.dist.depleted().value() <= kibam.dist.depleted().value());
}

#[test]
fn composed_vertices_are_finite() {
    let charge = PeriodicCharge::new(vec![(66, -400.0), (33, 0.0)], 0).unwrap();
    let names = ["Low", "Middle", "High", "Transfer"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let p = vec![
        vec![0.4, 0.0, 0.0, 0.6],
        vec![0.0, 0.4, 0.0, 0.6],
        vec![0.0, 0.0, 0.4, 0.6],
        vec![0.125, 0.125, 0.25, 0.5],
    ];
    let loads = [90.0, 190.0, 250.0, 400.0]
        .iter()
        .map(|&mean| LoadModel::Normal { mean, sd: 5.0 })
        .collect();
    let m = Mtp::new(
        names,
        p,
        vec![1.0, 0.0, 0.0, 0.0],
        vec![90, 90, 90, 5],
        loads,
    )
    .unwrap();
    let c = compose(&m, &charge).unwrap();
    // states are (task, minutes left) x (segment, minutes left)
    assert!(c.len() <= 4 * 90 * 99);
    let v = reachable_vertices(&c, 1000.0);
    assert!(v.iter().all(|&(_, t)| t <= 1000.0));
    assert_eq!(v.first().map(|x| x.1), Some(0.0));
}
