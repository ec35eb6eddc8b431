use std::f64::consts::FRAC_PI_2;

use mav_nmpc::dynamics::{derivative, rotation_matrix, step, ControlInput, Integrator, MavState, ModelParams};
use mav_nmpc::ocp::{shoot, OcpConfig, ShootingProblem};
use mav_nmpc::scenario::{ReferenceSchedule, ScenarioConfig};
use mav_nmpc::sim::reference_scheduler;
use nalgebra::{Matrix3, Vector3};
use proptest::prelude::*;

fn position() -> impl Strategy<Value = Vector3<f64>> {
    (-3.0f64..3.0, -3.0f64..3.0, 0.0f64..3.0).prop_map(|(x, y, z)| Vector3::new(x, y, z))
}

fn state() -> impl Strategy<Value = MavState> {
    (
        position(),
        -1.0f64..1.0,
        -1.0f64..1.0,
        -1.0f64..1.0,
        -0.4f64..0.4,
        -0.4f64..0.4,
    )
        .prop_map(|(p, vx, vy, vz, roll, pitch)| MavState {
            p,
            v: Vector3::new(vx, vy, vz),
            roll,
            pitch,
        })
}

fn integrator() -> impl Strategy<Value = Integrator> {
    prop_oneof![Just(Integrator::Euler), Just(Integrator::Rk4)]
}

proptest! {
    #[test]
    fn rotation_is_orthonormal_and_preserves_thrust(roll in -FRAC_PI_2..FRAC_PI_2, pitch in -FRAC_PI_2..FRAC_PI_2, t in 0.0f64..30.0) {
        let r = rotation_matrix(roll, pitch);
        prop_assert!((r.transpose() * r - Matrix3::identity()).amax() < 1e-12);
        prop_assert!((r.determinant() - 1.0).abs() < 1e-12);
        prop_assert!(((r * Vector3::new(0.0, 0.0, t)).norm() - t).abs() < 1e-12 * t.max(1.0));
    }

    #[test]
    fn hover_input_is_an_equilibrium(p in position(), method in integrator()) {
        let params = ModelParams::default();
        let x = MavState::hover_at(p);
        let u = ControlInput::hover(params.gravity);
        prop_assert!(derivative(&x, &u, &params).amax() < 1e-12);
        let next = step(&x, &u, &params, 0.05, method);
        prop_assert!((next.p - p).amax() < 1e-12);
        prop_assert!(next.v.amax() < 1e-12);
    }

    #[test]
    fn attitude_moves_toward_its_reference(x in state(), roll_ref in -0.5f64..0.5, pitch_ref in -0.5f64..0.5, method in integrator()) {
        let params = ModelParams::default();
        let u = ControlInput::new(params.gravity, roll_ref, pitch_ref);
        let next = step(&x, &u, &params, 0.05, method);
        let target_roll = params.gain_roll * roll_ref;
        let target_pitch = params.gain_pitch * pitch_ref;
        prop_assert!((next.roll - target_roll).abs() <= (x.roll - target_roll).abs() + 1e-15);
        prop_assert!((next.pitch - target_pitch).abs() <= (x.pitch - target_pitch).abs() + 1e-15);
    }

    #[test]
    fn drag_slows_an_unforced_vehicle(x in state(), method in integrator()) {
        let params = ModelParams { drag: [0.3, 0.3, 0.3], ..ModelParams::default() };
        let level = MavState { roll: 0.0, pitch: 0.0, ..x };
        let u = ControlInput::new(params.gravity, 0.0, 0.0);
        let next = step(&level, &u, &params, 0.05, method);
        prop_assert!(next.v.norm() <= level.v.norm() + 1e-15);
    }

    #[test]
    fn shooting_cost_is_nonnegative_with_finite_gradient(
        x in state(),
        seq in prop::collection::vec((0.0f64..1.0, 0.0f64..1.0, 0.0f64..1.0), 10),
        t0 in 0.0f64..10.0,
    ) {
        let s = ScenarioConfig::obstacle_traversal();
        let cfg = OcpConfig { horizon: 10, ..s.ocp_config(0).unwrap() };
        let u: Vec<f64> = seq
            .iter()
            .flat_map(|&(a, b, c)| {
                let lo = cfg.input_lower;
                let hi = cfg.input_upper;
                [lo[0] + a * (hi[0] - lo[0]), lo[1] + b * (hi[1] - lo[1]), lo[2] + c * (hi[2] - lo[2])]
            })
            .collect();
        let problem = ShootingProblem::new(&cfg, &x).starting_at(t0);
        let cost = problem.total_cost(&u).unwrap();
        prop_assert!(cost >= 0.0 && cost.is_finite());
        let g = problem.gradient(&u).unwrap();
        prop_assert_eq!(g.len(), 30);
        prop_assert!(g.iter().all(|v| v.is_finite()));
        let states = shoot(&cfg, &u, &x).unwrap();
        prop_assert_eq!(states.len(), 11);
        prop_assert_eq!(states[0], x);
    }

    #[test]
    fn scheduler_advances_only_near_the_current_reference(
        refs in prop::collection::vec((-3.0f64..3.0, -3.0f64..3.0, 0.5f64..2.0), 1..5),
        p in position(),
        current in 0usize..5,
        radius in 0.0f64..1.0,
    ) {
        let schedule = ReferenceSchedule {
            references: refs.iter().map(|&(x, y, z)| [x, y, z]).collect(),
            switch_radius: radius,
        };
        let current = current % schedule.len();
        let next = reference_scheduler(&MavState::hover_at(p), &schedule, current);
        prop_assert!(next < schedule.len());
        let near = (p - schedule.position(current)).norm() < radius;
        if schedule.len() == 1 {
            prop_assert_eq!(next, 0);
        } else if near {
            prop_assert_eq!(next, (current + 1) % schedule.len());
        } else {
            prop_assert_eq!(next, current);
        }
    }
}
