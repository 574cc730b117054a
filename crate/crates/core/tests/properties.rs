use kibam::grid::Cell;
use kibam::{BatteryParams, DiscreteLoad, InitSpec, LoadModel, Soc, SocDistribution};
use proptest::prelude::*;

const CASES: u32 = 10_000;

fn params() -> impl Strategy<Value = BatteryParams> {
    (0.05f64..0.95, 1e-4f64..0.05, 1.0f64..1e5)
        .prop_map(|(c, p, d)| BatteryParams::new(c, p, d).unwrap())
}

fn close(x: f64, y: f64, scale: f64) -> bool {
    (x - y).abs() <= 1e-9 * scale.max(1.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(CASES))]

    #[test]
    fn coefficient_identities(p in params(), t in 0.0f64..1e4) {
        let c = p.coefficients(t).unwrap();
        prop_assert!((c.qa + c.qb - 1.0).abs() < 1e-12);
        prop_assert!((c.ra + c.rb - 1.0).abs() < 1e-12);
        prop_assert!((c.sa + c.sb + t).abs() <= 1e-12 * t.max(1.0));
    }

    #[test]
    fn semigroup(p in params(), t1 in 0.0f64..500.0, t2 in 0.0f64..500.0, load in -50.0f64..50.0,
                 fa in 0.0f64..1.0, fb in 0.0f64..1.0) {
        let s = Soc::new(fa * p.amax(), fb * p.bmax());
        let once = p.step_unbounded(t1 + t2, load, s).unwrap();
        let twice = p.step_unbounded(t2, load, p.step_unbounded(t1, load, s).unwrap()).unwrap();
        let scale = p.capacity() + load.abs() * (t1 + t2);
        prop_assert!(close(once.a, twice.a, scale) && close(once.b, twice.b, scale), "{once:?} {twice:?}");
    }

    #[test]
    fn inverse_round_trip(p in params(), t in 0.0f64..300.0, load in -50.0f64..50.0,
                          fa in 0.0f64..1.0, fb in 0.0f64..1.0) {
        let s = Soc::new(fa * p.amax(), fb * p.bmax());
        let back = p.step_inverse(t, load, p.step_unbounded(t, load, s).unwrap()).unwrap();
        let scale = (p.capacity() + load.abs() * t) * (p.k() * t).exp();
        prop_assert!(close(back.a, s.a, scale) && close(back.b, s.b, scale));
    }

    #[test]
    fn no_return_across_levels(p_rate in 1e-4f64..0.05, t_end in 1.0f64..500.0, load in -20.0f64..20.0,
                               a0 in -500.0f64..1500.0, b0 in -500.0f64..1500.0, upper in any::<bool>()) {
        // equal wells, so both charges live on one scale
        let p = BatteryParams::new(0.5, p_rate, 2000.0).unwrap();
        let kappa = if upper { p.amax() } else { 0.0 };
        let tol = 1e-7;
        let at = |t: f64| p.step_unbounded(t, load, Soc::new(a0, b0)).unwrap();
        let end = at(t_end);
        for below in [true, false] {
            // starts strictly on the other side of kappa
            let other_side = if below { a0 > kappa && b0 > kappa } else { a0 < kappa && b0 < kappa };
            if !other_side {
                continue;
            }
            let crossed = |x: f64| if below { x <= kappa - tol } else { x >= kappa + tol };
            let reached = |x: f64| if below { x <= kappa + tol } else { x >= kappa - tol };
            for j in 1..=40 {
                let s = at(t_end * j as f64 / 40.0);
                if crossed(s.b) {
                    prop_assert!(reached(s.a), "bound charge crossed first: {s:?}");
                }
                if crossed(s.a) {
                    prop_assert!(reached(end.a), "available charge returned: {s:?} -> {end:?}");
                }
            }
        }
    }

    #[test]
    fn bounded_step_is_monotone(p in params(), t in 0.1f64..300.0, load_frac in -3.0f64..1.0,
                                fa in 0.0f64..1.0, fb in 0.0f64..1.0, da in 0.0f64..1.0, db in 0.0f64..1.0) {
        let load = load_frac * p.capacity() / 300.0;
        let lo = Soc::new(fa * p.amax(), fb * p.bmax());
        let hi = Soc::new(lo.a + da * (p.amax() - lo.a), lo.b + db * (p.bmax() - lo.b));
        let x = p.step_bounded(t, load, lo).unwrap();
        let y = p.step_bounded(t, load, hi).unwrap();
        prop_assert!(x.le(&y, 1e-9 * p.capacity()), "{lo:?} -> {x:?}, {hi:?} -> {y:?}");
    }

    #[test]
    fn approx_step_under_exact(p in params(), t in 0.1f64..300.0, load_frac in -3.0f64..0.5,
                               fa in 0.0f64..1.0, fb in 0.0f64..1.0) {
        let load = load_frac * p.capacity() / 300.0;
        let s = Soc::new(fa * p.amax(), fb * p.bmax());
        let approx = p.step_bounded_approx(t, load, s).unwrap();
        let exact = p.step_bounded(t, load, s).unwrap();
        prop_assert!(approx.le(&exact, 1e-9 * p.capacity()), "{s:?}: {approx:?} vs {exact:?}");
    }

    #[test]
    fn transform_conserves_mass(n in 4usize..16, a_lo in 0.0f64..0.9, a_w in 0.0f64..0.1,
                                b_lo in 0.0f64..0.9, b_w in 0.0f64..0.1, mean in -0.5f64..0.5,
                                sd in 0.0f64..0.3, steps in 1usize..4, t in 1.0f64..80.0) {
        let p = BatteryParams::new(0.5, 0.002, 20.0).unwrap();
        let spec = InitSpec::BoxUniform {
            a: (a_lo * p.amax(), (a_lo + a_w) * p.amax()),
            b: (b_lo * p.bmax(), (b_lo + b_w) * p.bmax()),
        };
        let load = LoadModel::Normal { mean, sd }.discretize(5, 1.0 - 1e-12).unwrap();
        let mut d = SocDistribution::init(&p, n, &spec).unwrap();
        let mut depleted = d.depleted().clone();
        for _ in 0..steps {
            d = d.transform(&p, t, &load).unwrap();
            prop_assert!((d.total_mass() - 1.0).abs() < 1e-9);
            prop_assert!(d.inner().iter().chain(d.boundary()).all(|&m| m >= 0.0));
            prop_assert!(d.depleted().cmp_exact(&depleted) != std::cmp::Ordering::Less);
            depleted = d.depleted().clone();
        }
    }

    #[test]
    fn dirac_cell_follows_approx_step(n in 5usize..60, fa in 0.0f64..1.0, fb in 0.0f64..1.0,
                                      load in -1.0f64..0.5, t in 0.5f64..120.0) {
        let p = BatteryParams::new(0.5, 0.002, 20.0).unwrap();
        let d = SocDistribution::init(&p, n, &InitSpec::Dirac(Soc::new(fa * p.amax() * 0.999, fb * p.bmax()))).unwrap();
        let (i, j) = match d.locate(&p, Soc::new(fa * p.amax() * 0.999, fb * p.bmax())) {
            Cell::Inner(i, j) => (i, j),
            other => return Err(TestCaseError::fail(format!("{other:?}"))),
        };
        let out = d.transform(&p, t, &DiscreteLoad::dirac(load)).unwrap();
        let expected = if i == 0 {
            Cell::Depleted
        } else {
            d.locate(&p, p.step_bounded_approx(t, load, d.representative(i, j)).unwrap())
        };
        match expected {
            Cell::Inner(a, b) => prop_assert_eq!(out.inner_at(a, b), 1.0),
            Cell::Boundary(b) => prop_assert_eq!(out.boundary()[b], 1.0),
            Cell::Depleted => prop_assert_eq!(out.depleted().value(), 1.0),
        }
    }

    #[test]
    fn discharge_never_fills(n in 4usize..20, lo in 0.0f64..0.95, w in 0.0f64..0.05,
                             mean in 0.01f64..1.0, t in 1.0f64..100.0) {
        let p = BatteryParams::new(0.5, 0.002, 20.0).unwrap();
        let load = LoadModel::Uniform { lo: mean * 0.5, hi: mean }.discretize(4, 1.0).unwrap();
        let mut d = SocDistribution::init(&p, n, &InitSpec::DiagonalUniform { lo, hi: lo + w }).unwrap();
        for _ in 0..3 {
            d = d.transform(&p, t, &load).unwrap();
            prop_assert_eq!(d.boundary_total(), 0.0);
        }
    }
}
