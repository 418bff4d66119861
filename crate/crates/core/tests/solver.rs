//! Time-integration properties: the stability limit, divergence detection,
//! damping decay, exact constraints and bit-reproducibility.

mod common;

use common::roller_box;
use djtled::materials::Material;
use djtled::mesh::Axis;
use djtled::prelude::*;
use djtled::solver::{relaxation_damping, TimeSettings};
use djtled::Error;

fn nh() -> Material {
    Material::reference_set()[0]
}

fn simulation(kind: ElementKind, engine: Engine, safety: f64, damping: f64) -> Simulation {
    let (mesh, bcs) = roller_box([0.1; 3], [3; 3], kind, 0.01, 0.1);
    let model = Model::build(&mesh, &nh(), engine, 0.1).unwrap();
    let dt = safety * model.critical_dt();
    Simulation::new(model, bcs, TimeSettings { dt, damping, allow_unstable: safety > 1.0 }).unwrap()
}

#[test]
fn below_the_critical_step_stays_finite() {
    for kind in [ElementKind::T4, ElementKind::H8] {
        for engine in Engine::ALL {
            let mut sim = simulation(kind, engine, 0.9, 0.0);
            let summary = sim.run(0.2, |_| {}).unwrap();
            assert!(summary.max_displacement.is_finite() && summary.max_displacement < 0.05, "{kind} {engine}");
        }
    }
}

#[test]
fn step_estimate_is_close_to_the_linearised_limit() {
    for kind in [ElementKind::T4, ElementKind::H8] {
        let (mesh, bcs) = roller_box([0.1; 3], [3; 3], kind, 0.01, 0.1);
        let mut model = Model::build(&mesh, &nh(), Engine::Tled, 0.1).unwrap();
        let exact = common::linearised_critical_dt(&mut model, &bcs, 2000);
        let ratio = model.critical_dt() / exact;
        // the element-length estimate is not a strict bound
        assert!((0.8..1.1).contains(&ratio), "{kind}: {ratio}");
    }
}

#[test]
fn ten_times_the_critical_step_diverges() {
    for kind in [ElementKind::T4, ElementKind::H8] {
        let mut sim = simulation(kind, Engine::Djtled, 10.0, 0.0).with_inversion_policy(InversionPolicy::Report);
        assert!(matches!(sim.run(0.2, |_| {}), Err(Error::Divergence { .. })), "{kind}");
    }
}

#[test]
fn unstable_step_is_refused_without_opt_in() {
    let (mesh, bcs) = roller_box([0.1; 3], [2; 3], ElementKind::T4, 0.01, 0.05);
    let model = Model::build(&mesh, &nh(), Engine::Tled, 0.0).unwrap();
    let dt = 1.5 * model.critical_dt();
    let r = Simulation::new(model, bcs, TimeSettings { dt, damping: 0.0, allow_unstable: false });
    assert!(matches!(r, Err(Error::Stability { .. })));
}

#[test]
fn kinetic_energy_decays_under_damping() {
    let (mesh, bcs) = roller_box([0.1; 3], [3; 3], ElementKind::H8, 0.005, 0.02);
    let alpha = relaxation_damping(&mesh, &nh());
    let model = Model::build(&mesh, &nh(), Engine::Djtled, 0.1).unwrap();
    let dt = 0.8 * model.critical_dt();
    let mut sim = Simulation::new(model, bcs, TimeSettings { dt, damping: alpha, allow_unstable: false }).unwrap();
    let (mut peak, mut last) = (0.0f64, 0.0);
    while sim.time() < 1.5 {
        sim.step().unwrap();
        last = sim.kinetic_proxy();
        peak = peak.max(last);
    }
    assert!(peak > 0.0);
    assert!(last < 1e-12 * peak, "{last:e} vs peak {peak:e}");
}

#[test]
fn constraints_hold_at_every_step() {
    for kind in [ElementKind::T4, ElementKind::H8] {
        let mut sim = simulation(kind, Engine::Djtled, 0.8, 50.0);
        let bcs = sim.boundary_conditions().clone();
        for _ in 0..200 {
            sim.step().unwrap();
            let (t, u) = (sim.time(), sim.displacements());
            for &(n, a) in &bcs.fixed {
                assert_eq!(u[n][a.index()], 0.0);
            }
            for p in &bcs.prescribed {
                let want = p.target * (t / p.ramp).min(1.0);
                for &n in &p.nodes {
                    assert_eq!(u[n][p.axis.index()], want);
                    assert_eq!(p.axis, Axis::Z);
                }
            }
        }
    }
}

#[test]
fn histories_are_bit_identical_across_runs_and_threads() {
    let history = |threads: usize| {
        let mut sim = simulation(ElementKind::T4, Engine::Djtled, 0.8, 20.0)
            .with_parallelism(Parallelism::threads(threads).unwrap());
        let mut out = Vec::new();
        for _ in 0..100 {
            sim.step().unwrap();
            out.extend_from_slice(sim.displacements());
        }
        out
    };
    let a = history(1);
    assert_eq!(a, history(1));
    assert_eq!(a, history(3));
}
