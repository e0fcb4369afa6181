mod common;

use std::sync::Arc;

use common::*;
use sdecert::mc::{run_jacobian, run_mc, simulate_controlled, InitialSampler, SimConfig, TrajectoryClass};
use sdecert::ops::SdeSystem;
use sdecert::poly::QPoly;
use sdecert::synth::Controller;

fn box_config(lo: f64, hi: f64, exclude: f64, n: usize, paths: usize, seed: u64) -> SimConfig {
    SimConfig { paths, seed, init: InitialSampler::cube(n, lo, hi, exclude), ..SimConfig::default() }
}

#[test]
fn example1_converges() {
    let (sys, _) = example1();
    let cfg = box_config(-3.0, 3.0, 0.1, 2, 1000, 11);
    let rep = run_mc(&sys, &cfg).unwrap();
    assert_eq!(rep.converged.count + rep.escaped.count + rep.undecided.count, 1000);
    assert!(rep.converged.fraction >= 0.95);
}

#[test]
fn example3_escapes() {
    let (sys, _) = example3();
    let cfg = SimConfig { r_escape: 100.0, ..box_config(-5.0, 5.0, 1e-9, 1, 1000, 5) };
    let rep = run_mc(&sys, &cfg).unwrap();
    assert!(rep.escaped.fraction >= 0.95);
}

#[test]
fn equilibrium_path_stays_at_origin() {
    let (sys, _) = example1();
    let cfg =
        SimConfig { paths: 4, init: InitialSampler::Fixed(vec![vec![0.0, 0.0]]), horizon: 1.0, ..SimConfig::default() };
    let rep = run_mc(&sys, &cfg).unwrap();
    assert_eq!(rep.converged.count, 4);
    assert_eq!(rep.undecided_final_radius.count, 0);
    assert_eq!(rep.convergence_time.max, Some(0.0));
    let (sys2, _, _) = example2();
    let cfg =
        SimConfig { paths: 2, init: InitialSampler::Fixed(vec![vec![0.0; 3]]), horizon: 1.0, ..SimConfig::default() };
    assert_eq!(run_mc(&sys2, &cfg).unwrap().converged.count, 2);
}

#[test]
fn zero_system_is_undecided() {
    let sys = SdeSystem::from_polys(Arc::new(QPoly::one(2)), vec![QPoly::zero(2); 2], vec![]).unwrap();
    let cfg = SimConfig { paths: 50, horizon: 1.0, ..box_config(-1.0, 1.0, 0.1, 2, 50, 1) };
    assert_eq!(run_mc(&sys, &cfg).unwrap().undecided.count, 50);
    let cfg = SimConfig { init: InitialSampler::Fixed(vec![vec![0.001, 0.0]]), ..cfg };
    assert_eq!(run_mc(&sys, &cfg).unwrap().converged.count, 50);
}

#[test]
fn reports_are_deterministic() {
    let (sys, _) = example1();
    let cfg = SimConfig { horizon: 2.0, track_jacobian: true, ..box_config(-3.0, 3.0, 0.1, 2, 64, 99) };
    let a = serde_json::to_string(&run_mc(&sys, &cfg).unwrap()).unwrap();
    let b = serde_json::to_string(&run_mc(&sys, &cfg).unwrap()).unwrap();
    assert_eq!(a, b);
    let other = serde_json::to_string(&run_mc(&sys, &SimConfig { seed: 100, ..cfg }).unwrap()).unwrap();
    assert_ne!(a, other);
}

#[test]
fn example1_jacobian_stays_invertible() {
    let (sys, _) = example1();
    let cfg = SimConfig { horizon: 5.0, track_jacobian: true, ..box_config(-3.0, 3.0, 0.1, 2, 200, 3) };
    let rep = run_mc(&sys, &cfg).unwrap();
    let j = rep.jacobian.unwrap();
    assert!(j.positive_fraction >= 0.999);
    let series = run_jacobian(&sys, &cfg, 1000).unwrap();
    assert_eq!(series.len(), 200);
    assert_eq!(series.iter().map(|s| s.positive_steps).sum::<usize>(), j.positive_steps);
}

#[test]
fn zero_channel_matches_open_loop() {
    let (sys, _) = example1();
    let base = sys.base().clone();
    let plant = sdecert::synth::ControlledSdeSystem::new(
        sys.clone(),
        vec![sdecert::poly::BExpr::zero(&base), sdecert::poly::BExpr::zero(&base)],
    )
    .unwrap();
    let u = Controller { numerator: QPoly::var(2, 0), denominator: QPoly::one(2) };
    let cfg = SimConfig { horizon: 2.0, ..box_config(-3.0, 3.0, 0.1, 2, 32, 4) };
    assert_eq!(simulate_controlled(&plant, &u, &cfg).unwrap(), run_mc(&sys, &cfg).unwrap());
}

#[test]
fn reference_controller_closed_loop() {
    let plant = planar_plant();
    let cfg = box_config(-1.0, 1.0, 0.05, 2, 500, 8);
    let u = Controller { numerator: reference_controller(), denominator: QPoly::one(2) };
    let closed = simulate_controlled(&plant, &u, &cfg).unwrap();
    let open = simulate_controlled(&plant, &Controller { numerator: QPoly::zero(2), denominator: QPoly::one(2) }, &cfg)
        .unwrap();
    assert_eq!(closed.paths, 500);
    // Feedback removes most escapes; convergence itself is slow (see the acceptance suite).
    assert!(open.escaped.fraction > 0.5);
    assert!(closed.escaped.fraction < open.escaped.fraction / 4.0);
    assert_eq!(closed.converged.count + closed.escaped.count + closed.undecided.count, 500);
}

#[test]
fn single_path_classes() {
    let (sys, _) = example3();
    let cfg =
        SimConfig { r_escape: 100.0, paths: 1, init: InitialSampler::Fixed(vec![vec![1.0]]), ..SimConfig::default() };
    let out = sdecert::mc::run_paths(&sdecert::mc::CompiledSystem::new(&sys), &cfg).unwrap();
    assert_eq!(out[0].class, TrajectoryClass::Escaped);
    assert!(out[0].final_radius >= 100.0);
}
