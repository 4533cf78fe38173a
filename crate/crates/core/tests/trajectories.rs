//! Whole-trajectory behaviour of the engine: bookkeeping, determinism and
//! the invariants of currents and triggers.

use num_complex::Complex64;
use proptest::prelude::*;

use shelving::dynamics::{
    compute_currents, sample_trigger, trajectory_rng, Integrator, StepEvent, SystemState, Trajectory,
};
use shelving::graph::{Level, Status};
use shelving::mcwf::mcwf_baseline;
use shelving::models::{build_configuration, three_level_v_model, two_level_model};
use shelving::{run_trajectory, Channel, ConfigurationKind, LevelScheme, RabiOnset};

fn desk() -> LevelScheme {
    LevelScheme::desk_scale()
}

#[test]
fn two_level_converts_every_photon() {
    for (n, seed) in [(1, 1), (7, 2), (100, 3)] {
        let mut s = desk();
        s.n_strong_photons = n;
        let r = shelving::run_program(&two_level_model(&s), f64::INFINITY, seed, 0).unwrap();
        assert_eq!(r.count(Channel::Strong), n as usize);
        assert_eq!(r.count(Channel::Weak), 0);
        assert!(r.is_valid());
    }
}

#[test]
fn zero_horizon_gives_empty_record() {
    assert!(run_trajectory(&desk(), 0.0, 1).unwrap().is_empty());
}

#[test]
fn identical_seeds_give_identical_records() {
    for config in ConfigurationKind::ALL {
        let s = desk().with_config(config);
        let a = run_trajectory(&s, 3e4, 42).unwrap();
        let b = run_trajectory(&s, 3e4, 42).unwrap();
        assert_eq!(a, b, "{config}");
        assert_ne!(a, run_trajectory(&s, 3e4, 43).unwrap(), "{config}");
    }
}

#[test]
fn absorbed_photons_never_exceed_reservoirs() {
    let mut s = desk();
    s.n_strong_photons = 40;
    s.n_weak_photons = 3;
    s.omega_weak = 0.05;
    let p = build_configuration(&s);
    let mut tr = Trajectory::new(&p, 5, 0).unwrap();
    loop {
        for c in &tr.state().components {
            assert!(c.label.strong_absorbed <= 40 && c.label.weak_absorbed <= 3, "{}", c.label);
        }
        if tr.step_once(f64::INFINITY).unwrap() == StepEvent::Finished {
            break;
        }
    }
    assert!(tr.record().count(Channel::Strong) <= 40);
    assert!(tr.record().count(Channel::Weak) <= 3);
}

#[test]
fn each_launch_records_at_most_one_photon() {
    let p = three_level_v_model(&desk()).unwrap();
    let mut tr = Trajectory::new(&p, 6, 0).unwrap();
    let mut shelved = 0;
    let mut last_len = 0;
    while tr.launches() < 5000 {
        let from_shelf = tr.state().scope.nodes[0].label.level == Level::A2;
        match tr.step_once(f64::INFINITY).unwrap() {
            StepEvent::Collapsed { emission, .. } => {
                let len = tr.record().len();
                assert!(len - last_len <= 1);
                if from_shelf {
                    // The shelved branch always ends in exactly one photon.
                    shelved += 1;
                    assert!(emission.is_some());
                }
                last_len = len;
                assert_eq!(tr.state().square_modulus(), 1.0);
                let fresh_ready = tr.state().components.iter().filter(|c| c.status == Status::Ready);
                assert!(fresh_ready.clone().all(|c| c.amplitude == Complex64::new(0.0, 0.0)));
            }
            StepEvent::Finished => break,
            _ => {}
        }
    }
    assert!(shelved > 0, "no shelving in 5000 launches");
}

#[test]
fn quantum_jump_records_are_valid() {
    for config in ConfigurationKind::ALL {
        let r = mcwf_baseline(&desk().with_config(config), 2e4, 3);
        assert!(r.is_valid(), "{config}");
        assert!(r.count(Channel::Strong) > 0, "{config}");
    }
}

/// States partway through a trajectory, for property tests.
fn mid_trajectory_state(config: ConfigurationKind, onset: RabiOnset, seed: u64, steps: usize) -> SystemState {
    let p = build_configuration(&desk().with_config(config).with_onset(onset));
    let mut tr = Trajectory::new(&p, seed, 0).unwrap();
    for _ in 0..steps {
        if tr.step_once(f64::INFINITY).unwrap() == StepEvent::Finished {
            break;
        }
    }
    tr.state().clone()
}

fn arb_state() -> impl Strategy<Value = SystemState> {
    (
        prop::sample::select(ConfigurationKind::ALL.to_vec()),
        prop::bool::ANY,
        0u64..1000,
        0usize..400,
    )
        .prop_map(|(config, immediate, seed, steps)| {
            let onset = if immediate { RabiOnset::Immediate } else { RabiOnset::Delayed };
            mid_trajectory_state(config, onset, seed, steps)
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn currents_are_never_negative(state in arb_state()) {
        let report = compute_currents(&state);
        prop_assert!(report.currents.iter().all(|c| c.current >= 0.0));
        prop_assert!(report.total >= 0.0);
    }

    #[test]
    fn trigger_ignores_global_rescaling(state in arb_state(), scale in 0.05f64..20.0, seed in 0u64..1000) {
        prop_assume!(state.operator.has_sinks());
        let dt = 0.5 * state.operator.dt_max.min(1.0);
        let mut scaled = state.clone();
        for c in &mut scaled.components {
            c.amplitude *= Complex64::new(scale, 0.0);
        }
        let mut integ = Integrator::new();
        let (mut a, mut b) = (state.clone(), scaled);
        let ra = integ.advance(&mut a, dt);
        let rb = integ.advance(&mut b, dt);
        prop_assume!(ra.is_ok() && rb.is_ok());
        let (ra, rb) = (ra.unwrap(), rb.unwrap());
        let pa = ra.max_trigger_probability(dt);
        let pb = rb.max_trigger_probability(dt);
        prop_assert!((pa - pb).abs() <= 1e-12 * pa.max(1e-300), "{pa} vs {pb}");
        let mut ga = trajectory_rng(seed, 0);
        let mut gb = trajectory_rng(seed, 0);
        for _ in 0..50 {
            prop_assert_eq!(
                sample_trigger(&ra, ra.normalizer, dt, &mut ga).unwrap(),
                sample_trigger(&rb, rb.normalizer, dt, &mut gb).unwrap()
            );
        }
    }

    #[test]
    fn steps_conserve_square_modulus(state in arb_state(), dt in 1e-3f64..2.0) {
        let mut s = state.clone();
        if Integrator::new().advance(&mut s, dt).is_ok() {
            prop_assert!((s.square_modulus() - state.square_modulus()).abs() < 1e-12);
        }
    }
}
