use dzrp::env::{build_iid_env, DisorderLaw, Environment};
use dzrp::experiments::{fan_out, mean_se};
use dzrp::io::{read_snapshot_rows, write_snapshots};
use dzrp::kinetics::{
    couple_run, from_tasep, make_source_config, run, tasep_view, Boundary, CurrentTracker, Dynamics,
    HarrisStream, JumpKernel, RunSpec,
};
use dzrp::measures::{sample_product_measure, RateFunction};
use dzrp::rng::{keyed_rng, unit_f64};
use dzrp::{Configuration, Occupancy, Window};
use rand::Rng;

#[test]
fn single_particle_walks_like_poisson() {
    let env = Environment::homogeneous(Window::new(0, 80).unwrap());
    let g = RateFunction::mm1();
    let kernel = JumpKernel::totally_asymmetric();
    let dynamics = Dynamics::new(&env, &kernel, &g, Boundary::AbsorbingRightBlockedLeft);
    let mut start = Configuration::empty(env.window());
    start.set(0, Occupancy::finite(1));
    let k = 10_000;
    let positions = fan_out(k, 0, 2, |_, s| {
        let out = run(start.clone(), dynamics, HarrisStream::new(s, &env), &RunSpec::until(10.0))?;
        Ok(out.displacement as f64)
    })
    .unwrap();
    let (mean, _) = mean_se(&positions);
    assert!((mean - 10.0).abs() < 3.0 * (10.0 / k as f64).sqrt(), "{mean}");
}

#[test]
fn stationary_ring_current() {
    let law = DisorderLaw::atoms_from(&[(0.3, 0.5), (1.0, 0.5)]);
    let env = build_iid_env(&law, Window::new(0, 63).unwrap(), 8).unwrap();
    let g = RateFunction::mm1();
    let kernel = JumpKernel::totally_asymmetric();
    let dynamics = Dynamics::new(&env, &kernel, &g, Boundary::Ring);
    let horizon = 2000.0;
    let currents = fan_out(40, 0, 3, |_, s| {
        let eta = sample_product_measure(&env, 0.15, &g, s)?;
        let spec = RunSpec::until(horizon).with_trackers(vec![CurrentTracker::fixed(10)]);
        let out = run(eta, dynamics, HarrisStream::new(s, &env), &spec)?;
        Ok(out.trackers[0].count() as f64 / horizon)
    })
    .unwrap();
    let (mean, se) = mean_se(&currents);
    assert!((mean - 0.15).abs() < 3.0 * se, "{mean} +- {se}");
}

#[test]
fn three_ordered_replicas_stay_ordered() {
    let law = DisorderLaw::atoms_from(&[(0.3, 0.5), (1.0, 0.5)]);
    let env = build_iid_env(&law, Window::new(0, 29).unwrap(), 2).unwrap();
    let g = RateFunction::new(&[0.0, 0.4, 0.9], 1.0).unwrap();
    let kernel = JumpKernel::new(&[(-1, 0.3), (1, 0.4), (2, 0.3)]).unwrap();
    let mut rng = keyed_rng(5, 0);
    let a: Vec<u64> = (0..30).map(|_| rng.random_range(0..3)).collect();
    let b: Vec<u64> = a.iter().map(|&n| n + rng.random_range(0..2)).collect();
    let c: Vec<u64> = b.iter().map(|&n| n + rng.random_range(0..2)).collect();
    let configs = [a, b, c].map(|v| Configuration::from_counts(env.window(), &v).unwrap());
    let spec = RunSpec::until(100.0).with_snapshots((1..=100).map(f64::from).collect());
    let dynamics = Dynamics::new(&env, &kernel, &g, Boundary::Ring);
    let outs = couple_run(configs.to_vec(), dynamics, HarrisStream::new(1, &env), &spec).unwrap();
    for i in 0..spec.snapshot_times.len() {
        assert!(outs[0].snapshots[i].config.le(&outs[1].snapshots[i].config));
        assert!(outs[1].snapshots[i].config.le(&outs[2].snapshots[i].config));
    }
}

#[test]
fn equal_replicas_have_identical_trajectories() {
    let env = Environment::homogeneous(Window::new(0, 19).unwrap());
    let g = RateFunction::mm1();
    let kernel = JumpKernel::nearest_neighbor(0.7).unwrap();
    let eta = Configuration::constant(env.window(), 2);
    let spec = RunSpec::until(50.0).with_snapshots(vec![10.0, 25.0]);
    let dynamics = Dynamics::new(&env, &kernel, &g, Boundary::Ring);
    let outs = couple_run(vec![eta.clone(), eta], dynamics, HarrisStream::new(4, &env), &spec).unwrap();
    assert_eq!(outs[0], outs[1]);
}

#[test]
fn tasep_round_trip_on_random_configs() {
    let mut rng = keyed_rng(11, 0);
    for _ in 0..1000 {
        let len = rng.random_range(1..30i64);
        let lo = rng.random_range(-50..50i64);
        let w = Window::new(lo, lo + len - 1).unwrap();
        let counts: Vec<u64> = (0..len).map(|_| rng.random_range(0..5)).collect();
        let conf = Configuration::from_counts(w, &counts).unwrap();
        let anchor = rng.random_range(-100..100i64);
        let view = tasep_view(&conf, anchor).unwrap();
        assert_eq!(from_tasep(&view, lo).unwrap(), conf);
    }
}

#[test]
fn source_feeds_the_right_half() {
    let env = Environment::homogeneous(Window::new(-60, 40).unwrap());
    let g = RateFunction::mm1();
    let kernel = JumpKernel::totally_asymmetric();
    let eta = make_source_config(-50, &Configuration::empty(env.window())).unwrap();
    let spec = RunSpec::until(30.0).with_snapshots(vec![30.0]);
    let dynamics = Dynamics::new(&env, &kernel, &g, Boundary::AbsorbingRightBlockedLeft);
    let out = run(eta, dynamics, HarrisStream::new(3, &env), &spec).unwrap();
    assert!((-60..=-50).all(|x| out.final_config.get(x) == Occupancy::INF));
    assert!(out.final_config.finite_mass() > 0);

    let mut csv = Vec::new();
    write_snapshots(&mut csv, &out.snapshots).unwrap();
    let text = String::from_utf8(csv.clone()).unwrap();
    assert!(text.lines().any(|l| l.ends_with(",INF")));
    let rows = read_snapshot_rows(csv.as_slice()).unwrap();
    assert_eq!(rows.len(), env.window().len());
    assert!(rows.iter().all(|&(t, x, o)| t == 30.0 && o == out.final_config.get(x)));
}

#[test]
fn replay_is_bit_exact() {
    let law = DisorderLaw::atoms_from(&[(0.5, 0.5), (1.0, 0.5)]);
    let env = build_iid_env(&law, Window::new(-40, 40).unwrap(), 1).unwrap();
    let g = RateFunction::mm1();
    let kernel = JumpKernel::new(&[(1, 0.6), (2, 0.2), (-1, 0.2)]).unwrap();
    let mut rng = keyed_rng(6, 1);
    let counts: Vec<u64> = (0..81).map(|_| (3.0 * unit_f64(&mut rng)) as u64).collect();
    let eta = Configuration::from_counts(env.window(), &counts).unwrap();
    let spec = RunSpec::until(40.0)
        .with_snapshots(vec![5.0, 20.0])
        .with_trackers(vec![CurrentTracker::fixed(0), CurrentTracker::new(-30, 0.5)]);
    let dynamics = Dynamics::new(&env, &kernel, &g, Boundary::Ring);
    let a = run(eta.clone(), dynamics, HarrisStream::new(99, &env), &spec).unwrap();
    let b = run(eta.clone(), dynamics, HarrisStream::new(99, &env), &spec).unwrap();
    let c = run(eta, dynamics, HarrisStream::new(100, &env), &spec).unwrap();
    assert_eq!(a, b);
    assert_ne!(a.final_config, c.final_config);
}
