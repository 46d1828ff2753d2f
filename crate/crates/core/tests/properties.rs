//! Structural invariants checked on random data.

use std::f64::consts::PI;

use delaylift::boundary::{dirichlet_map, f_operator, yosida_apply, Yosida};
use delaylift::delay::{shift_observation_gamma, DelayMeasure, HistorySegment, Profile};
use delaylift::exec::Exec;
use delaylift::lift::{lifted_control_map, lifted_semigroup_apply, LiftedState, LiftedSystem};
use delaylift::sde::{brownian_path, phi_w, simulate_states, BrownianPath};
use delaylift::signal::Signal;
use delaylift::systems::{make_heat, make_schrodinger, make_toy, SystemSpec};
use delaylift::verify::{regularity_suite, wellposedness_constant, TripleBasis};
use delaylift::{CMatrix, CVector, C64};
use proptest::prelude::*;

fn c(x: f64) -> C64 {
    C64::new(x, 0.0)
}

fn heat() -> LiftedSystem {
    make_heat(&SystemSpec::heat().with_cells(32)).unwrap()
}

fn vector(n: usize) -> impl Strategy<Value = CVector> {
    proptest::collection::vec((-1.0f64..1.0, -1.0f64..1.0), n)
        .prop_map(move |v| CVector::from_iterator(n, v.into_iter().map(|(a, b)| C64::new(a, b))))
}

fn lifted_state(ls: &LiftedSystem) -> impl Strategy<Value = LiftedState> {
    let (r, m) = (ls.r(), ls.m());
    (vector(ls.bt().n()), proptest::collection::vec(-1.0f64..1.0, m + 1)).prop_map(move |(x, h)| LiftedState {
        x,
        h: HistorySegment::new(r, m, h.into_iter().map(|v| CVector::from_element(1, c(v))).collect()).unwrap(),
    })
}

fn signal(ls: &LiftedSystem, n: usize) -> impl Strategy<Value = Signal> {
    let dt = ls.dt();
    proptest::collection::vec(-1.0f64..1.0, n + 1)
        .prop_map(move |v| Signal::new(dt, v.into_iter().map(|s| CVector::from_element(1, c(s))).collect()).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn semigroup_law(x in vector(32), t in 0.0f64..1.0, s in 0.0f64..1.0) {
        let ls = heat();
        let g = ls.bt().restricted();
        let two = g.semigroup_apply(t, &g.semigroup_apply(s, &x).unwrap()).unwrap();
        let one = g.semigroup_apply(t + s, &x).unwrap();
        prop_assert!((two - one).norm() <= 1e-8 * x.norm());
    }

    #[test]
    fn resolvent_identity(x in vector(32), lam in 1.5f64..20.0, mu in 1.5f64..20.0) {
        let ls = heat();
        let g = ls.bt().restricted();
        prop_assume!(g.growth_bound() + 1.0 < lam.min(mu));
        let (l, m) = (c(lam), c(mu));
        let lhs = g.apply_resolvent(l, &x).unwrap() - g.apply_resolvent(m, &x).unwrap();
        let rhs = g.apply_resolvent(l, &g.apply_resolvent(m, &x).unwrap()).unwrap() * (m - l);
        prop_assert!((lhs - rhs).norm() <= 1e-8 * x.norm());
    }

    #[test]
    fn dirichlet_equations_and_decomposition(v in -2.0f64..2.0, lam in 0.5f64..50.0, z in vector(33)) {
        for ls in [heat(), make_schrodinger(&SystemSpec::schrodinger().with_cells(32)).unwrap()] {
            let bt = ls.bt();
            let n = bt.n();
            let z = z.rows(0, bt.ext_dim()).into_owned();
            let lam = c(lam);
            let d = dirichlet_map(bt, lam).unwrap();
            let dv = d.apply(&CVector::from_element(1, c(v)));
            let scale = dv.norm().max(1.0);
            let harmonic = bt.full_op() * &dv - dv.rows(0, n) * lam;
            prop_assert!(harmonic.norm() <= 1e-9 * scale * bt.full_op().norm());
            prop_assert!(((bt.trace() * &dv)[0] - c(v)).norm() <= 1e-9 * scale);
            let dgz = d.apply(&(bt.trace() * &z));
            let inside = bt.free_part(&(&z - &dgz));
            let rhs = bt.restricted().matrix() * inside + dgz.rows(0, n) * lam;
            let lhs = bt.full_op() * &z;
            prop_assert!((lhs - rhs).norm() <= 1e-9 * bt.full_op().norm() * z.norm().max(1.0));
        }
    }

    #[test]
    fn f_operator_is_linear(a in -2.0f64..2.0, b in -2.0f64..2.0, seed in 0u64..1000) {
        let ls = heat();
        let n = 16;
        let dt = 1.0 / n as f64;
        let normals = delaylift::sde::standard_normals(seed, 0, 2 * (n + 1));
        let mk = |off: usize| Signal::scalar(dt, n, |t| normals[off + (t / dt).round() as usize]);
        let (u, w) = (mk(0), mk(n + 1));
        let lam = c(ls.lambda_ref());
        let f = |s: &Signal| f_operator(ls.bt(), lam, s, 1.0, dt).unwrap();
        let combo = u.scale(c(a)).axpy(c(b), &w).unwrap();
        let (fu, fw, fc) = (f(&u), f(&w), f(&combo));
        for k in 0..fc.samples.len() {
            if let (Some(x), Some(y), Some(z)) = (&fu.samples[k], &fw.samples[k], &fc.samples[k]) {
                let expected = x * c(a) + y * c(b);
                prop_assert!((z - &expected).norm() <= 1e-9 * (1.0 + expected.norm()));
            }
        }
    }

    #[test]
    fn history_never_sees_the_state(z in lifted_state(&heat()), x2 in vector(32), k in 0usize..70) {
        let ls = heat();
        let other = LiftedState { x: x2, h: z.h.clone() };
        let t = k as f64 * ls.dt();
        let a = lifted_semigroup_apply(&ls, t, &z).unwrap();
        let b = lifted_semigroup_apply(&ls, t, &other).unwrap();
        prop_assert_eq!(a.h, b.h);
    }

    #[test]
    fn control_map_is_linear(u in signal(&heat(), 48), w in signal(&heat(), 48), a in -2.0f64..2.0, k in 0usize..48) {
        let ls = heat();
        let t = k as f64 * ls.dt();
        let combo = u.scale(c(a)).axpy(c(1.0), &w).unwrap();
        let lhs = lifted_control_map(&ls, t, &combo).unwrap();
        let rhs = lifted_control_map(&ls, t, &u).unwrap().scale_add(a, &lifted_control_map(&ls, t, &w).unwrap());
        prop_assert!((lhs.x - &rhs.x).norm() <= 1e-9 * (1.0 + rhs.x.norm()));
        prop_assert!((lhs.h.axpy(c(-1.0), &rhs.h).unwrap()).max_norm() <= 1e-9 * (1.0 + rhs.h.max_norm()));
    }

    #[test]
    fn simulation_is_additive(
        z1 in lifted_state(&heat()),
        z2 in lifted_state(&heat()),
        u1 in signal(&heat(), 40),
        u2 in signal(&heat(), 40),
        p in 0u64..50,
    ) {
        let ls = heat();
        let path = brownian_path(40, ls.dt(), 5, p).unwrap();
        let run = |z: &LiftedState, u: &Signal| simulate_states(&ls, &z.x, &z.h, u, &path).unwrap();
        let sum = z1.axpy(c(1.0), &z2).unwrap();
        let both = run(&sum, &u1.axpy(c(1.0), &u2).unwrap());
        let (a, b) = (run(&z1, &u1), run(&z2, &u2));
        for k in 0..both.len() {
            let expected = &a[k].x + &b[k].x;
            prop_assert!((&both[k].x - &expected).norm() <= 1e-8 * (1.0 + expected.norm()));
        }
    }

    #[test]
    fn adapted_to_the_past(z in lifted_state(&heat()), u in signal(&heat(), 40), cut in 0usize..40, p in 0u64..50) {
        let ls = heat();
        let path = brownian_path(40, ls.dt(), 9, p).unwrap();
        let mut fresh = path.clone();
        let other = brownian_path(40, ls.dt(), 10, p).unwrap();
        fresh.increments[cut..].copy_from_slice(&other.increments[cut..]);
        let a = simulate_states(&ls, &z.x, &z.h, &u, &path).unwrap();
        let b = simulate_states(&ls, &z.x, &z.h, &u, &fresh).unwrap();
        prop_assert_eq!(&a[..=cut], &b[..=cut]);
    }

    #[test]
    fn noise_free_runs_ignore_the_path(z in lifted_state(&heat()), u in signal(&heat(), 40), p in 0u64..1000) {
        let ls = make_heat(&SystemSpec::heat().with_cells(32).with_noise_scale(0.0)).unwrap();
        let a = simulate_states(&ls, &z.x, &z.h, &u, &brownian_path(40, ls.dt(), 1, p).unwrap()).unwrap();
        let b = simulate_states(&ls, &z.x, &z.h, &u, &BrownianPath::silent(40, ls.dt())).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn picard_contracts(u in signal(&heat(), 32), p in 0u64..100) {
        let ls = heat();
        let path = brownian_path(32, ls.dt(), 3, p).unwrap();
        let res = phi_w(&ls, 1.0, &u, &path, 50, 1e-10).unwrap();
        prop_assert!(res.ratio < 1.0);
    }
}

trait ScaleAdd {
    fn scale_add(self, a: f64, other: &LiftedState) -> LiftedState;
}

impl ScaleAdd for LiftedState {
    /// `a · self + other`.
    fn scale_add(self, a: f64, other: &LiftedState) -> LiftedState {
        LiftedState {
            x: &self.x * c(a) + &other.x,
            h: self.h.scale(c(a)).axpy(c(1.0), &other.h).unwrap(),
        }
    }
}

#[test]
fn laplace_transform_of_the_semigroup_is_the_resolvent() {
    let ls = heat();
    let g = ls.bt().restricted();
    let lam = g.growth_bound() + 1.0;
    let x = CVector::from_iterator(
        g.dim(),
        ls.bt().geometry.free_positions.iter().map(|&s| c((PI * s).cos())),
    );
    // Past T the neglected tail is below 1e-6.
    let t_end = (1e-6f64).ln() / (-lam);
    let steps = 20_000;
    let dt = t_end / steps as f64;
    let step = g.semigroup(dt).unwrap();
    let mut cur = x.clone();
    let mut integral = CVector::zeros(g.dim());
    for k in 0..=steps {
        let w = if k == 0 || k == steps { 0.5 } else { 1.0 };
        integral += &cur * c(w * dt * (-lam * k as f64 * dt).exp());
        cur = &step * cur;
    }
    let exact = g.apply_resolvent(c(lam), &x).unwrap();
    assert!((integral - &exact).norm() <= 1e-4 * exact.norm());
}

#[test]
fn yosida_limit_matches_direct_observation_on_smooth_states() {
    for ls in [heat(), make_toy(&SystemSpec::toy()).unwrap()] {
        let bt = ls.bt();
        let x = CVector::from_iterator(bt.n(), bt.geometry.free_positions.iter().map(|&s| c(1.0 + (PI * s).cos())));
        let sched = Yosida::default();
        let y = yosida_apply(bt, &x, &sched).unwrap();
        let direct = bt.c_matrix() * &x;
        assert!((y - &direct).norm() <= 10.0 * sched.tol * direct.norm().max(1.0));
    }
}

#[test]
fn lifted_flow_is_strongly_continuous() {
    let mut errs = Vec::new();
    let mut dts = Vec::new();
    for m in [128, 256, 512, 1024] {
        let ls = SystemSpec::heat().with_cells(32).build(DelayMeasure::dead_time(1.0, 1), m).unwrap();
        let bt = ls.bt();
        // Smooth on the grid, not just sampled from a smooth function: R(1, A)² lands in D(A²).
        let g = bt.restricted();
        let raw = CVector::from_iterator(bt.n(), bt.geometry.free_positions.iter().map(|&s| c((PI * s).cos())));
        let x = g.apply_resolvent(c(1.0), &g.apply_resolvent(c(1.0), &raw).unwrap()).unwrap();
        let h = HistorySegment::from_fn(1.0, m, 1, |th| CVector::from_element(1, c((PI * th).sin())));
        let z = LiftedState { x, h };
        let next = lifted_semigroup_apply(&ls, ls.dt(), &z).unwrap();
        errs.push(bt.metric().norm(&(next.x - &z.x)));
        dts.push(ls.dt());
    }
    let order = delaylift::report::loglog_slope(&dts, &errs).unwrap();
    assert!(order >= 1.0 - 0.05, "order {order} {errs:?}");
}

#[test]
fn mean_square_increments_shrink() {
    let mut previous = f64::INFINITY;
    for m in [8, 16, 32, 64] {
        let ls = SystemSpec::heat().with_cells(32).build(DelayMeasure::dead_time(1.0, 1), m).unwrap();
        let bt = ls.bt();
        let x = CVector::from_iterator(bt.n(), bt.geometry.free_positions.iter().map(|&s| c(1.0 + (PI * s).cos())));
        let h = HistorySegment::from_fn(1.0, m, 1, |_| CVector::from_element(1, c(0.5)));
        let n = m;
        let u = Signal::scalar(ls.dt(), n, |_| 0.5);
        let mean: f64 = (0..64)
            .map(|p| {
                let path = brownian_path(n, ls.dt(), 77, p).unwrap();
                let states = simulate_states(&ls, &x, &h, &u, &path).unwrap();
                (0..n).map(|k| bt.metric().norm(&(&states[k + 1].x - &states[k].x)).powi(2)).sum::<f64>() / n as f64
            })
            .sum::<f64>()
            / 64.0;
        assert!(mean < previous, "m={m}: {mean} vs {previous}");
        previous = mean;
    }
}

#[test]
fn delay_functional_is_admissible_for_the_shift() {
    let measures = [
        DelayMeasure::dead_time(1.0, 1),
        DelayMeasure::new(
            1.0,
            1,
            vec![delaylift::delay::Atom {
                theta: -0.5,
                weight: CMatrix::from_element(1, 1, c(0.7)),
            }],
            Some(delaylift::delay::Density {
                profile: Profile::Exp { scale: 1.0, rate: 2.0 },
                weight: CMatrix::identity(1, 1),
            }),
            false,
        )
        .unwrap(),
    ];
    for nu in &measures {
        let gammas: Vec<f64> = [16, 32, 64]
            .iter()
            .map(|&m| {
                let probes: Vec<HistorySegment> = (0..5)
                    .map(|k| HistorySegment::from_fn(1.0, m, 1, |th| CVector::from_element(1, c((k as f64 * PI * th).cos()))))
                    .collect();
                shift_observation_gamma(nu, 2.0, &probes).unwrap()
            })
            .collect();
        for w in gammas.windows(2) {
            let ratio = w[1] / w[0];
            assert!((1.0 / 1.2..=1.2).contains(&ratio), "{gammas:?}");
        }
        assert!(gammas.iter().all(|g| *g <= nu.total_variation() * 1.5));
    }
}

#[test]
fn verdicts_are_deterministic() {
    let ls = make_schrodinger(&SystemSpec::schrodinger().with_cells(32)).unwrap();
    assert_eq!(regularity_suite(&ls).unwrap(), regularity_suite(&ls).unwrap());
    let toy = make_toy(&SystemSpec::toy()).unwrap();
    let run = |exec| wellposedness_constant(&toy, 1.0, &TripleBasis::default(), 20, 16, 4, toy.dt(), exec).unwrap();
    assert_eq!(run(Exec::Sequential), run(Exec::Parallel { threads: Some(3) }));
}
