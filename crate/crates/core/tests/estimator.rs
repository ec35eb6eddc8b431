use mav_nmpc::dynamics::GRAVITY;
use mav_nmpc::estimator::{
    direct_estimate, ekf_update, thrust_to_signal, EstimatorConfig, EstimatorState, ThrustEstimator,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// Feeds `updates` synthetic samples `a = C(k)·u² + noise` with `u ~ U[0.5, 0.9]`
/// and returns `(C(k), Ĉ_k)` after every step.
fn run_stream(seed: u64, updates: usize, sigma: f64, truth: impl Fn(usize) -> f64) -> Vec<(f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, sigma).unwrap();
    let mut est = ThrustEstimator::new(EstimatorConfig::default()).unwrap();
    (0..updates)
        .map(|k| {
            let c = truth(k);
            let u: f64 = rng.random_range(0.5..0.9);
            let a = c * u * u + noise.sample(&mut rng);
            (c, est.observe(a, u).state.estimate)
        })
        .collect()
}

#[test]
fn constant_constant_is_learned_within_two_percent() {
    for seed in 0..10 {
        let trace = run_stream(seed, 200, 0.5, |_| 20.0);
        let (c, est) = *trace.last().unwrap();
        assert!((est - c).abs() / c < 0.02, "seed {seed}: {est}");
    }
}

#[test]
fn drifting_constant_is_tracked() {
    let n = 2000;
    for seed in 0..5 {
        let trace = run_stream(seed, n, 0.5, |k| 22.0 - 4.0 * k as f64 / (n - 1) as f64);
        let worst = trace[200..].iter().map(|(c, e)| (c - e).abs()).fold(0.0, f64::max);
        assert!(worst < 0.5, "seed {seed}: lag {worst}");
    }
}

#[test]
fn signal_round_trip_recovers_commanded_thrust() {
    let c_true = 19.0;
    let demand = 10.5;
    let mut last = f64::INFINITY;
    for c_hat in [30.0, 25.0, 21.0, 19.5, 19.1, 19.0] {
        let u = thrust_to_signal(demand, c_hat);
        let delivered = c_true * u * u;
        let err = (delivered - demand).abs();
        assert!(err < last);
        last = err;
    }
    assert!(last < 1e-12);
}

proptest! {
    #[test]
    fn estimate_stays_within_bounds_and_variance_is_bounded(
        samples in prop::collection::vec((0.0f64..200.0, 0.0f64..1.0), 1..300),
    ) {
        let cfg = EstimatorConfig::default();
        let mut state = EstimatorState::initial(&cfg);
        let mut accepted = 0usize;
        for (a, u) in samples {
            if let Ok(m) = direct_estimate(a, u, &cfg) {
                state = ekf_update(&state, &m, &cfg);
                accepted += 1;
                prop_assert!(state.estimate >= GRAVITY && state.estimate <= 10.0 * GRAVITY);
                prop_assert!(state.variance > 0.0);
                prop_assert!(state.variance <= cfg.initial_variance + accepted as f64 * cfg.process_variance);
            }
        }
    }

    #[test]
    fn gate_accepts_exactly_plausible_direct_estimates(a in -50.0f64..1000.0, u in 0.0f64..1.0) {
        let cfg = EstimatorConfig::default();
        let ok = direct_estimate(a, u, &cfg).is_ok();
        let plausible = u >= cfg.min_signal && {
            let c = a / (u * u);
            (GRAVITY..=10.0 * GRAVITY).contains(&c)
        };
        prop_assert_eq!(ok, plausible);
    }

    #[test]
    fn signal_is_a_valid_throttle(thrust in -10.0f64..100.0, c in GRAVITY..10.0 * GRAVITY) {
        let u = thrust_to_signal(thrust, c);
        prop_assert!((0.0..=1.0).contains(&u));
        if thrust > 0.0 && thrust < c {
            prop_assert!((c * u * u - thrust).abs() < 1e-12 * c);
        }
    }
}
