use proptest::prelude::*;
use pulsefront::eigen::{floquet_lambda, EigenProblemSpec};
use pulsefront::kernel::interior_convolve;
use pulsefront::simulator::{
    apply_pulse, run_fixed, run_free, run_from_state, step_boundaries, step_interior, FixedEdge, FrontState, SimConfig,
};
use pulsefront::{Coefficients, Error, FrontierParams, HarvestRule, InitialData, KernelSpec, ModelParams, Rates};

fn tri(s: f64) -> KernelSpec {
    KernelSpec::triangular(s).unwrap()
}

fn rates() -> Rates {
    Rates { b: 2.0, a: 1.0, m1: 0.5, m2: 0.5, alpha1: 1.0, alpha2: 1.0 }
}

fn model(h0: f64, mu: f64, harvest: HarvestRule) -> ModelParams {
    ModelParams {
        k1: tri(1.0),
        k2: tri(1.0),
        coefficients: Coefficients::constant(1.0, 1.0, 1.0, rates()).unwrap(),
        harvest,
        frontier: FrontierParams { mu1: 0.5 * mu, mu2: 0.5 * mu, h0 },
        initial: InitialData::bump(h0, 1.0, 1.0),
    }
}

#[test]
fn single_step_matches_direct_summation() {
    let mut p = model(2.0, 1.0, HarvestRule::Identity);
    p.k2 = KernelSpec::truncated_gaussian(0.3).unwrap();
    let s = FrontState::from_initial(&p.initial, -2.0, 2.0, 0.05, true).unwrap();
    let dt = 0.05;
    let next = step_interior(&s, &p.coefficients, &p.k1, &p.k2, dt).unwrap();
    let r = rates();
    for i in 1..s.len() - 1 {
        let (u, v) = (s.u1[i], s.u2[i]);
        let c1 = interior_convolve(&p.k1, s.dx, &s.u1, i);
        let c2 = interior_convolve(&p.k2, s.dx, &s.u2, i);
        let e1 = u + dt * ((c1 - u) + r.b * v - (r.a + r.m1) * u - r.alpha1 * u * u);
        let e2 = v + dt * ((c2 - v) + r.a * u - r.m2 * v - r.alpha2 * v * v);
        assert!((next.u1[i] - e1).abs() <= 1e-14 && (next.u2[i] - e2).abs() <= 1e-14, "node {i}");
    }
    assert_eq!(next.t, dt);
}

#[test]
fn pulse_examples() {
    let mut s = FrontState::from_initial(&InitialData::bump(1.0, 1.0, 1.0), -1.0, 1.0, 1.0, false).unwrap();
    s.u2 = vec![0.0, 1.0, 2.0];
    assert_eq!(apply_pulse(&s, &HarvestRule::Linear { c: 0.5 }, 1.0).unwrap().u2, vec![0.0, 0.5, 1.0]);
    assert_eq!(apply_pulse(&s, &HarvestRule::Identity, 1.0).unwrap(), s);
    s.u2 = vec![1.0, 3.0, 0.0];
    let bh = apply_pulse(&s, &HarvestRule::BevertonHolt { m: 2.0, a: 1.0 }, 1.0).unwrap();
    assert_eq!(bh.u2, vec![2.0 * 1.0 / (1.0 + 1.0), 2.0 * 3.0 / (1.0 + 3.0), 0.0]);
    assert_eq!(bh.u1, s.u1);
    s.t = 2.5;
    assert!(matches!(apply_pulse(&s, &HarvestRule::Identity, 1.0), Err(Error::OffSchedule(_))));
}

#[test]
fn boundaries_examples() {
    let p = model(1.0, 0.0, HarvestRule::Identity);
    let s = FrontState::from_initial(&p.initial, -1.0, 1.0, 0.05, true).unwrap();
    assert_eq!(step_boundaries(&s, &p.frontier, &p.k1, &p.k2, 0.1), (s.g, s.h));
    let fp = FrontierParams { mu1: 1.0, mu2: 2.0, h0: 1.0 };
    let mut zero = s.clone();
    zero.u1.iter_mut().for_each(|v| *v = 0.0);
    zero.u2.iter_mut().for_each(|v| *v = 0.0);
    assert_eq!(step_boundaries(&zero, &fp, &p.k1, &p.k2, 0.1), (zero.g, zero.h));
    let (g, h) = step_boundaries(&s, &fp, &p.k1, &p.k2, 0.1);
    assert!(h > s.h);
    assert_eq!(g, -h);
}

#[test]
fn boundary_increment_matches_double_integral() {
    // h' = sum_i mu_i int_g^h u_i(x) int_h^inf J(x - y) dy dx, by brute force in y
    let p = model(1.0, 0.0, HarvestRule::Identity);
    let s = FrontState::from_initial(&p.initial, -1.0, 1.0, 0.05, true).unwrap();
    let fp = FrontierParams { mu1: 1.0, mu2: 0.5, h0: 1.0 };
    let dt = 0.01;
    let (_, h) = step_boundaries(&s, &fp, &p.k1, &p.k2, dt);
    let n = s.len();
    let tail = |x: f64| {
        let m = 20_000;
        let dy = 1.0 / m as f64;
        (0..m).map(|j| p.k1.evaluate(x - (s.h + (j as f64 + 0.5) * dy))).sum::<f64>() * dy
    };
    let mut oracle = 0.0;
    for i in 0..n {
        let w = if i == 0 || i == n - 1 { 0.5 * s.dx } else { s.dx };
        oracle += w * (fp.mu1 * s.u1[i] + fp.mu2 * s.u2[i]) * tail(s.x(i));
    }
    assert!(((h - s.h) / dt - oracle).abs() < 1e-8, "{} vs {oracle}", (h - s.h) / dt);
}

#[test]
fn horizon_zero_is_initial_record() {
    let p = model(1.0, 1.0, HarvestRule::Linear { c: 0.5 });
    let traj = run_free(&p, &SimConfig::auto(&p, 0.05, 0)).unwrap();
    assert_eq!(traj.records.len(), 1);
    assert_eq!((traj.records[0].g, traj.records[0].h), (-1.0, 1.0));
}

#[test]
fn no_capacity_reduces_to_fixed_domain() {
    let p = model(1.5, 0.0, HarvestRule::Linear { c: 0.5 });
    let cfg = SimConfig { record_stride: 1, fixed_edge: FixedEdge::Zero, ..SimConfig::auto(&p, 0.05, 5) };
    let free = run_free(&p, &cfg).unwrap();
    let fixed = run_fixed(&p, (-1.5, 1.5), &cfg).unwrap();
    assert_eq!(free.records.len(), fixed.records.len());
    for (a, b) in free.records.iter().zip(&fixed.records) {
        for (x, y) in [(a.mass1, b.mass1), (a.mass2, b.mass2), (a.max1, b.max1), (a.max2, b.max2), (a.g, b.g), (a.h, b.h)] {
            assert!((x - y).abs() <= 1e-12);
        }
    }
}

#[test]
fn zero_data_stays_zero() {
    let mut p = model(1.0, 1.0, HarvestRule::Linear { c: 0.5 });
    p.initial = InitialData::samples(1.0, vec![0.0, 0.0], vec![0.0, 0.0]).unwrap();
    let traj = run_fixed(&p, (-3.0, 3.0), &SimConfig { record_stride: 1, ..SimConfig::auto(&p, 0.05, 3) }).unwrap();
    assert!(traj.records.iter().all(|r| r.mass1 == 0.0 && r.mass2 == 0.0 && r.max1 == 0.0 && r.max2 == 0.0));
}

#[test]
fn identity_harvest_spreads_when_domain_eigenvalue_nonpositive() {
    let p = model(2.0, 2.0, HarvestRule::Identity);
    let spec = EigenProblemSpec::new((-2.0, 2.0), p.coefficients.clone(), p.k1.clone(), p.k2.clone(), 1.0, 80, 16).unwrap();
    assert!(floquet_lambda(&spec).unwrap().lambda <= 0.0);
    let traj = run_free(&p, &SimConfig::auto(&p, 0.05, 60)).unwrap();
    let last = traj.records.last().unwrap();
    assert!(last.h - last.g > 4.0 * 2.0, "span {}", last.h - last.g);
}

#[test]
fn fixed_domain_decays_when_eigenvalue_positive() {
    let p = model(0.5, 0.0, HarvestRule::Linear { c: 0.5 });
    let traj = run_fixed(&p, (-0.5, 0.5), &SimConfig::auto(&p, 0.05, 150)).unwrap();
    let last = traj.records.last().unwrap();
    assert!(last.max1.max(last.max2) < 1e-5 * traj.a_bound);
}

#[test]
fn fixed_domain_period_map_converges() {
    let p = model(2.0, 0.0, HarvestRule::Linear { c: 0.5 });
    let cfg = SimConfig { snapshot_every: 1, ..SimConfig::auto(&p, 0.05, 300) };
    let traj = run_fixed(&p, (-2.0, 2.0), &cfg).unwrap();
    let n = traj.snapshots.len();
    let (a, b) = (&traj.snapshots[n - 2].pre, &traj.snapshots[n - 1].pre);
    let diff = a.0.iter().zip(&b.0).chain(a.1.iter().zip(&b.1)).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    assert!(diff < 1e-6, "{diff}");
    assert!(b.0.iter().all(|v| *v > 0.0));
}

#[test]
fn open_edges_evolve_end_nodes() {
    let p = model(1.0, 0.0, HarvestRule::Linear { c: 0.5 });
    let cfg = SimConfig::auto(&p, 0.05, 1);
    let open = run_fixed(&p, (-1.0, 1.0), &cfg).unwrap().final_state;
    let zero = run_fixed(&p, (-1.0, 1.0), &SimConfig { fixed_edge: FixedEdge::Zero, ..cfg }).unwrap().final_state;
    assert!(open.u1[0] > 0.0);
    assert_eq!(zero.u1[0], 0.0);
}

#[test]
fn snapshots_record_exact_pulse() {
    let rule = HarvestRule::BevertonHolt { m: 0.8, a: 2.0 };
    let p = model(1.0, 1.0, rule);
    let traj = run_free(&p, &SimConfig { snapshot_every: 1, ..SimConfig::auto(&p, 0.05, 4) }).unwrap();
    assert_eq!(traj.snapshots.len(), 5);
    for s in &traj.snapshots[..4] {
        let post = s.post.as_ref().unwrap();
        assert_eq!(post.0, s.pre.0);
        for (a, b) in s.pre.1.iter().zip(&post.1) {
            assert_eq!(rule.apply(*a).unwrap().to_bits(), b.to_bits());
        }
    }
    assert!(traj.snapshots[4].post.is_none());
}

#[test]
fn translation_by_grid_multiple_is_exact() {
    let p = model(1.0, 0.0, HarvestRule::Linear { c: 0.5 });
    let cfg = SimConfig { record_stride: 1, ..SimConfig::auto(&p, 0.05, 3) };
    let base = FrontState::from_initial(&p.initial, -2.0, 2.0, 0.05, false).unwrap();
    let shifted = FrontState { first: base.first + 37, g: base.g + 37.0 * 0.05, h: base.h + 37.0 * 0.05, ..base.clone() };
    let a = run_from_state(&p, &cfg, base, false).unwrap().final_state;
    let b = run_from_state(&p, &cfg, shifted, false).unwrap().final_state;
    assert_eq!(a.u1, b.u1);
    assert_eq!(a.u2, b.u2);
}

#[test]
fn refinement_orders() {
    let p = model(1.0, 2.0, HarvestRule::Linear { c: 0.5 });
    let horizon = 4;
    let order = |v: &[f64]| ((v[0] - v[1]).abs() / (v[1] - v[2]).abs()).log2();
    // dx halvings at a fixed fine time step
    let fine = SimConfig::auto(&p, 0.01, horizon).steps_per_period * 32;
    let by_dx: Vec<f64> = [0.04, 0.02, 0.01]
        .iter()
        .map(|dx| {
            let cfg = SimConfig { steps_per_period: fine, ..SimConfig::auto(&p, *dx, horizon) };
            run_free(&p, &cfg).unwrap().final_state.h
        })
        .collect();
    // dt halvings at a fixed grid
    let base = SimConfig::auto(&p, 0.02, horizon);
    let by_dt: Vec<f64> = [1, 2, 4]
        .iter()
        .map(|m| {
            let cfg = SimConfig { steps_per_period: base.steps_per_period * m, ..base.clone() };
            run_free(&p, &cfg).unwrap().final_state.h
        })
        .collect();
    assert!(order(&by_dx) >= 1.6, "dx order {}", order(&by_dx));
    assert!(order(&by_dt) >= 0.8, "dt order {}", order(&by_dt));
}

#[test]
fn unstable_configuration_refused() {
    let p = model(1.0, 1.0, HarvestRule::Linear { c: 0.5 });
    let cfg = SimConfig { steps_per_period: 2, ..SimConfig::auto(&p, 0.05, 1) };
    assert!(matches!(run_free(&p, &cfg), Err(Error::Stability(_))));
    assert!(matches!(run_fixed(&p, (-1.0, 1.0), &cfg), Err(Error::Stability(_))));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn invariants_hold(
        b in 0.5f64..3.0, a in 0.3f64..2.0, m1 in 0.1f64..1.0, m2 in 0.1f64..1.0,
        c in 0.1f64..0.95, mu in 0.0f64..4.0, cells in 4usize..30, amp in 0.1f64..3.0,
    ) {
        let dx = 0.05;
        let h0 = cells as f64 * dx;
        let r = Rates { b, a, m1, m2, alpha1: 1.0, alpha2: 1.0 };
        let p = ModelParams {
            k1: tri(1.0),
            k2: KernelSpec::truncated_gaussian(0.5).unwrap(),
            coefficients: Coefficients::constant(1.0, 0.7, 1.0, r).unwrap(),
            harvest: HarvestRule::Linear { c },
            frontier: FrontierParams { mu1: mu, mu2: 0.5 * mu, h0 },
            initial: InitialData::bump(h0, amp, 0.5 * amp),
        };
        let traj = run_free(&p, &SimConfig { record_stride: 1, ..SimConfig::auto(&p, dx, 5) }).unwrap();
        prop_assert_eq!(traj.audit.violations(), 0);
        prop_assert!(traj.records.windows(2).all(|w| w[1].t > w[0].t));
        for w in traj.records.windows(2) {
            if mu > 0.0 {
                prop_assert!(w[1].h > w[0].h && w[1].g < w[0].g);
            } else {
                prop_assert!(w[1].h == w[0].h && w[1].g == w[0].g);
            }
        }
        for r in &traj.records {
            prop_assert!(r.max1 <= traj.a_bound + 1e-12 && r.max2 <= traj.a_bound + 1e-12);
        }
    }

    #[test]
    fn larger_capacity_never_shrinks_habitat(mu in 0.1f64..3.0, extra in 0.0f64..3.0) {
        let small = model(1.0, mu, HarvestRule::Linear { c: 0.5 });
        let large = model(1.0, mu + extra, HarvestRule::Linear { c: 0.5 });
        let cfg = SimConfig { record_stride: 1, ..SimConfig::auto(&large, 0.05, 4) };
        let a = run_free(&small, &cfg).unwrap();
        let b = run_free(&large, &cfg).unwrap();
        for (x, y) in a.records.iter().zip(&b.records) {
            prop_assert!(y.h - y.g >= x.h - x.g);
        }
    }
}
