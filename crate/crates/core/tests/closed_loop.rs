use mav_nmpc::dynamics::{self, ControlInput};
use mav_nmpc::export::{write_diagnostics, write_estimator_trace, write_trajectory, ExportOptions, TRAJECTORY_HEADER};
use mav_nmpc::scenario::ScenarioConfig;
use mav_nmpc::sim::{run_closed_loop, run_closed_loop_with, RunOptions, TrajectoryLog};

fn hover(duration: f64) -> ScenarioConfig {
    let mut s = ScenarioConfig::battery_drain_hover();
    s.duration = duration;
    s.plant.thrust_constant.end = s.plant.thrust_constant.start;
    s
}

fn traversal(duration: f64) -> ScenarioConfig {
    let mut s = ScenarioConfig::obstacle_traversal();
    s.duration = duration;
    s
}

fn csv_bytes(log: &TrajectoryLog) -> (Vec<u8>, Vec<u8>, Vec<u8>) {
    let opts = ExportOptions { include_timing: false };
    let (mut a, mut b, mut c) = (Vec::new(), Vec::new(), Vec::new());
    write_trajectory(log, &mut a).unwrap();
    write_diagnostics(log, &mut b, opts).unwrap();
    write_estimator_trace(log, &mut c).unwrap();
    (a, b, c)
}

#[test]
fn hover_holds_position() {
    let s = hover(20.0);
    let target = s.schedule.position(0);
    let log = run_closed_loop(&s).unwrap();
    let worst = log
        .rows
        .iter()
        .filter(|r| r.t > 5.0)
        .map(|r| (r.state.p - target).norm())
        .fold(0.0, f64::max);
    assert!(worst < 0.05, "worst {worst}");
    assert!(log.switch_ticks().is_empty());
}

#[test]
fn single_tick_export_has_header_and_one_row() {
    let s = hover(hover(1.0).controller.sampling_time);
    let log = run_closed_loop(&s).unwrap();
    let (traj, diag, est) = csv_bytes(&log);
    for bytes in [traj, diag, est] {
        let text = String::from_utf8(bytes).unwrap();
        assert_eq!(text.lines().count(), 2);
    }
}

#[test]
fn trajectory_csv_round_trips_to_nine_digits() {
    let log = run_closed_loop(&traversal(3.0)).unwrap();
    let (traj, _, _) = csv_bytes(&log);
    let text = String::from_utf8(traj).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some(TRAJECTORY_HEADER));
    let close = |parsed: f64, exact: f64| (parsed - exact).abs() <= 5e-9 * exact.abs().max(1e-300);
    let mut n = 0;
    for (line, row) in lines.zip(&log.rows) {
        let v: Vec<f64> = line.split(',').map(|f| f.parse().unwrap()).collect();
        assert_eq!(v.len(), 15);
        let exact = [
            row.t,
            row.state.p.x,
            row.state.p.y,
            row.state.p.z,
            row.state.v.x,
            row.state.v.y,
            row.state.v.z,
            row.state.roll,
            row.state.pitch,
            row.command.thrust,
            row.command.roll_ref,
            row.command.pitch_ref,
            row.signal,
            row.reference_index as f64,
            row.distance_to_axis,
        ];
        for (p, e) in v.iter().zip(exact) {
            assert!(close(*p, e), "{p} vs {e}");
        }
        n += 1;
    }
    assert_eq!(n, log.rows.len());
}

#[test]
fn runs_are_deterministic_without_timing() {
    let s = traversal(4.0);
    let a = csv_bytes(&run_closed_loop(&s).unwrap());
    let b = csv_bytes(&run_closed_loop(&s).unwrap());
    assert!(a == b);
    let mut other = s.clone();
    other.seed += 1;
    let c = csv_bytes(&run_closed_loop(&other).unwrap());
    assert!(a.2 != c.2);
}

#[test]
fn first_input_is_held_for_one_period() {
    let s = traversal(3.0);
    let log = run_closed_loop(&s).unwrap();
    let h = s.controller.sampling_time / s.plant.substeps as f64;
    for pair in log.rows.windows(2) {
        let (now, next) = (&pair[0], &pair[1]);
        assert_eq!(now.applied_thrust, now.true_thrust_constant * now.signal * now.signal);
        let held = ControlInput::new(now.applied_thrust, now.command.roll_ref, now.command.pitch_ref);
        let mut x = now.state;
        for _ in 0..s.plant.substeps {
            x = dynamics::step(&x, &held, &s.model, h, s.plant.integrator);
        }
        assert_eq!(x, next.state);
    }
}

#[test]
fn enlarged_margin_covers_physical_obstacle() {
    let s = traversal(20.0);
    let log = run_closed_loop(&s).unwrap();
    let ocp = s.ocp_config(0).unwrap();
    let physical = s.physical_obstacles().unwrap();
    for row in &log.rows {
        assert!(row.penetration >= row.physical_penetration);
        let inside_enlarged = ocp.obstacles.iter().any(|o| o.contains(&row.state.p, row.t));
        assert_eq!(row.penetration > 0.0, inside_enlarged);
        let inside_physical = physical.iter().any(|o| o.contains(&row.state.p, row.t));
        assert_eq!(row.physical_penetration > 0.0, inside_physical);
    }
    assert_eq!(log.max_physical_penetration(), 0.0);
}

#[test]
fn warm_start_beats_cold_start() {
    let log = run_closed_loop_with(&traversal(10.0), RunOptions { audit_cold_start: true }).unwrap();
    let mut compared = 0;
    for row in log.rows.iter().skip(1).filter(|r| !r.switched) {
        assert!(
            row.initial_residual < row.cold_initial_residual.unwrap(),
            "t = {}",
            row.t
        );
        compared += 1;
    }
    assert!(compared > 100);
}

#[test]
fn invalid_scenario_is_rejected() {
    let mut s = hover(1.0);
    s.plant.substeps = 0;
    assert_eq!(run_closed_loop(&s).unwrap_err().kind(), "invalid-config");
    let mut s = hover(1.0);
    s.duration = -1.0;
    assert_eq!(run_closed_loop(&s).unwrap_err().kind(), "invalid-config");
}
