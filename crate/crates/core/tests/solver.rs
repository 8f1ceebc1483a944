use std::f64::consts::PI;

use abstract_map::model::{motion_model, total_energy, PointMass, SpringKind, SpringOrigin, SpringSpec, SystemState};
use abstract_map::solver::{add_clauses, imagine, rk4_step, SolverConfig, SpringDraft};
use abstract_map::{Toponym, Vec2};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn t(name: &str) -> Toponym {
    Toponym::new(name).unwrap()
}

/// Up to 10 masses (the first one or two fixed) joined by up to 20 springs.
fn random_system(seed: u64) -> (SystemState, Vec<SpringSpec>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(3..=10);
    let fixed = rng.gen_range(0..=2);
    let mut state = SystemState::new();
    for i in 0..n {
        let p = Vec2::new(rng.gen_range(-10.0..10.0), rng.gen_range(-10.0..10.0));
        let mut m = if i < fixed {
            PointMass::fixed(t(&format!("m{i}")), p)
        } else {
            PointMass::free(t(&format!("m{i}")), p)
        };
        if i >= fixed {
            m.velocity = Vec2::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        }
        state.push(m).unwrap();
    }
    let count = rng.gen_range(1..=20);
    let mut springs = Vec::new();
    while springs.len() < count {
        let a = rng.gen_range(0..n);
        let b = rng.gen_range(0..n);
        let c = rng.gen_range(0..n);
        let (k, origin) = match rng.gen_range(0..5) {
            0 => (2.5, SpringOrigin::Observation),
            1 => (1.0, SpringOrigin::Template),
            2 => (0.5, SpringOrigin::Template),
            3 => (0.1, SpringOrigin::Template),
            _ => (0.01, SpringOrigin::Hierarchy),
        };
        let spec = match rng.gen_range(0..3) {
            0 => SpringSpec::distance(a, b, rng.gen_range(0.0..15.0), k, origin),
            1 => SpringSpec::absolute_angle(a, b, rng.gen_range(-PI..PI), k, origin),
            _ => SpringSpec::relative_angle(a, b, c, rng.gen_range(-PI..PI), k, origin),
        };
        if let Ok(s) = spec {
            springs.push(s);
        }
    }
    (state, springs)
}

fn total(state: &SystemState, springs: &[SpringSpec]) -> f64 {
    total_energy(state, springs).total()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn settled_state_is_near_equilibrium(seed in any::<u64>()) {
        let (state, springs) = random_system(seed);
        let cfg = SolverConfig::default();
        let out = imagine(&state, &springs, None, &cfg).unwrap();
        prop_assume!(out.settled);
        let acc = motion_model(out.sim_time, &out.state, &springs, None);
        for (m, a) in out.state.masses().iter().zip(acc) {
            if !m.fixed {
                prop_assert!(a.norm() * m.mass < cfg.accel_threshold);
            }
        }
    }

    #[test]
    fn translation_moves_layout_rigidly(seed in any::<u64>(), dx in -100.0..100.0f64, dy in -100.0..100.0f64) {
        let (state, springs) = random_system(seed);
        let shift = Vec2::new(dx, dy);
        let mut moved = state.clone();
        for i in 0..moved.len() {
            moved.set_position(i, state.mass(i).position + shift);
        }
        // a fixed horizon keeps both runs on the same step count
        let cfg = SolverConfig {
            accel_threshold: 1e-300,
            velocity_threshold: 1e-300,
            max_sim_time: 20.0,
            ..SolverConfig::default()
        };
        let a = imagine(&state, &springs, None, &cfg).unwrap();
        let b = imagine(&moved, &springs, None, &cfg).unwrap();
        prop_assert_eq!(a.steps, b.steps);
        for (p, q) in a.state.positions().iter().zip(b.state.positions()) {
            prop_assert!((*p + shift).distance(q) < 1e-9, "{p:?} + {shift:?} vs {q:?}");
        }
    }

    #[test]
    fn imagine_is_deterministic(seed in any::<u64>()) {
        let (state, springs) = random_system(seed);
        let cfg = SolverConfig::default();
        let a = imagine(&state, &springs, Some(abstract_map::model::Expansion::unbounded(Vec2::new(1.0, 2.0))), &cfg);
        let b = imagine(&state, &springs, Some(abstract_map::model::Expansion::unbounded(Vec2::new(1.0, 2.0))), &cfg);
        match (a, b) {
            (Ok(a), Ok(b)) => {
                prop_assert_eq!(a.state, b.state);
                prop_assert_eq!(a.steps, b.steps);
                prop_assert_eq!(a.energy, b.energy);
            }
            (a, b) => prop_assert_eq!(a.err(), b.err()),
        }
    }

    #[test]
    fn adding_clauses_leaves_existing_masses(seed in any::<u64>(), length in 0.5..20.0f64) {
        let (mut state, mut springs) = random_system(seed);
        let before: Vec<PointMass> = state.masses().to_vec();
        let drafts = vec![
            SpringDraft {
                kind: SpringKind::Distance { natural_length: length },
                endpoints: vec![t("new"), t("m0")],
                stiffness: 1.0,
                origin: SpringOrigin::Template,
            },
            SpringDraft {
                kind: SpringKind::AbsoluteAngle { natural_angle: 1.0 },
                endpoints: vec![t("newer"), t("new")],
                stiffness: 0.5,
                origin: SpringOrigin::Template,
            },
        ];
        let cfg = SolverConfig { rng_seed: seed, ..SolverConfig::default() };
        let added = add_clauses(&drafts, &[], &mut state, &mut springs, &cfg, &mut cfg.rng()).unwrap();
        prop_assert_eq!(added.len(), 2);
        prop_assert_eq!(&state.masses()[..before.len()], &before[..]);
    }
}

/// Damped unit oscillator x'' = −x − 0.1·x' from x = 1 at rest.
fn oscillator_error(steps: usize) -> f64 {
    let mut state = SystemState::new();
    state.push(PointMass::fixed(t("origin"), Vec2::ZERO)).unwrap();
    state.push(PointMass::free(t("bob"), Vec2::new(1.0, 0.0))).unwrap();
    let springs = vec![SpringSpec::distance(1, 0, 0.0, 1.0, SpringOrigin::Template).unwrap()];
    let h = 2.0 * PI / steps as f64;
    for k in 0..steps {
        state = rk4_step(k as f64 * h, &state, &springs, None, h).unwrap();
    }
    let gamma: f64 = 0.05;
    let omega = (1.0 - gamma * gamma).sqrt();
    let tt = 2.0 * PI;
    let exact = (-gamma * tt).exp() * ((omega * tt).cos() + gamma / omega * (omega * tt).sin());
    (state.mass(1).position.x - exact).abs()
}

#[test]
fn rk4_is_fourth_order() {
    let coarse = oscillator_error(64);
    let fine = oscillator_error(128);
    let ratio = coarse / fine;
    assert!((8.0..=32.0).contains(&ratio), "{coarse} / {fine} = {ratio}");
}


/// First step at which total energy rises by more than 1e-6 relative.
fn energy_rise(seed: u64) -> Option<(usize, f64, f64)> {
    let (mut state, springs) = random_system(seed);
    let anchors: Vec<Vec2> = state.masses().iter().filter(|m| m.fixed).map(|m| m.position).collect();
    let mut e = total(&state, &springs);
    for step in 0..500 {
        state = rk4_step(step as f64 * 0.02, &state, &springs, None, 0.02).unwrap();
        let still: Vec<Vec2> = state.masses().iter().filter(|m| m.fixed).map(|m| m.position).collect();
        assert_eq!(anchors, still);
        let next = total(&state, &springs);
        if next > e + 1e-6 * e.abs() + 1e-12 {
            return Some((step, e, next));
        }
        e = next;
    }
    None
}

#[test]
fn energy_never_increases() {
    let rises: Vec<_> = (0..100u64).filter_map(|seed| energy_rise(seed).map(|r| (seed, r))).collect();
    assert!(rises.is_empty(), "{} of 100 systems gained energy: {rises:?}", rises.len());
}
