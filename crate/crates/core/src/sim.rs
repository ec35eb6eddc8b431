//! Receding-horizon closed loop: solve, apply the first input through the
//! thrust estimator with a zero-order hold, integrate the plant, repeat.

use std::time::Duration;

use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::dynamics::{self, ControlInput, MavState, NU};
use crate::estimator::ThrustEstimator;
use crate::ocp::{OcpConfig, ShootingProblem};
use crate::panoc::{ExitStatus, PanocSolver, SolverConfig};
use crate::scenario::{ReferenceSchedule, ScenarioConfig};
use crate::{Error, Result};

/// Advances cyclically to the next reference once `state` is within the
/// switch radius of the current one.
pub fn reference_scheduler(state: &MavState, schedule: &ReferenceSchedule, current: usize) -> usize {
    if schedule.len() <= 1 {
        return 0;
    }
    if (state.p - schedule.position(current)).norm() < schedule.switch_radius {
        (current + 1) % schedule.len()
    } else {
        current
    }
}

/// Extra work done alongside the closed loop, for analysis only.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunOptions {
    /// Also solve every tick from the cold (hover) guess and record its
    /// initial residual and iteration count. The cold solution is discarded.
    pub audit_cold_start: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogRow {
    pub t: f64,
    /// Plant state at the start of the tick.
    pub state: MavState,
    /// First input block of the NMPC solution.
    pub command: ControlInput,
    /// Normalized thrust signal sent to the vehicle.
    pub signal: f64,
    /// Thrust acceleration actually produced by the plant, held for `T_s`.
    pub applied_thrust: f64,
    pub iterations: usize,
    pub status: ExitStatus,
    pub solve_time: Duration,
    pub avg_iteration_time: Duration,
    pub residual_inf: f64,
    pub residual_norm: f64,
    pub initial_residual: f64,
    pub accel_measurement: f64,
    pub accepted: bool,
    pub thrust_constant_estimate: f64,
    pub estimate_variance: f64,
    pub true_thrust_constant: f64,
    pub reference_index: usize,
    /// True on the tick where a new reference was sent.
    pub switched: bool,
    pub distance_to_axis: f64,
    /// Depth inside the deepest enlarged obstacle.
    pub penetration: f64,
    /// Depth inside the deepest physical obstacle.
    pub physical_penetration: f64,
    pub cold_initial_residual: Option<f64>,
    pub cold_iterations: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryLog {
    pub sampling_time: f64,
    pub rows: Vec<LogRow>,
}

impl TrajectoryLog {
    pub fn max_penetration(&self) -> f64 {
        self.rows.iter().map(|r| r.penetration).fold(0.0, f64::max)
    }

    pub fn max_physical_penetration(&self) -> f64 {
        self.rows.iter().map(|r| r.physical_penetration).fold(0.0, f64::max)
    }

    pub fn converged_fraction(&self) -> f64 {
        let n = self.rows.iter().filter(|r| r.status == ExitStatus::Converged).count();
        n as f64 / self.rows.len().max(1) as f64
    }

    pub fn mean_solve_time(&self) -> Duration {
        let total: Duration = self.rows.iter().map(|r| r.solve_time).sum();
        total / self.rows.len().max(1) as u32
    }

    /// Ticks on which a new reference was sent.
    pub fn switch_ticks(&self) -> Vec<usize> {
        self.rows
            .iter()
            .enumerate()
            .filter(|(_, r)| r.switched)
            .map(|(i, _)| i)
            .collect()
    }
}

fn shift_warm_start(previous: &[f64], guess: &mut Vec<f64>) {
    guess.clear();
    guess.extend_from_slice(&previous[NU..]);
    guess.extend_from_slice(&previous[previous.len() - NU..]);
}

struct Noise {
    rng: ChaCha8Rng,
    imu: Option<Normal<f64>>,
    position: Option<Normal<f64>>,
    velocity: Option<Normal<f64>>,
    attitude: Option<Normal<f64>>,
}

impl Noise {
    fn new(scenario: &ScenarioConfig) -> Self {
        let normal = |s: f64| (s > 0.0).then(|| Normal::new(0.0, s).expect("validated std"));
        let p = &scenario.plant;
        Noise {
            rng: ChaCha8Rng::seed_from_u64(scenario.seed),
            imu: normal(p.imu_noise),
            position: normal(p.position_noise),
            velocity: normal(p.velocity_noise),
            attitude: normal(p.attitude_noise),
        }
    }

    fn sample(&mut self, dist: Option<Normal<f64>>) -> f64 {
        dist.map_or(0.0, |d| d.sample(&mut self.rng))
    }

    fn measure(&mut self, x: &MavState) -> MavState {
        let mut m = *x;
        for i in 0..3 {
            m.p[i] += self.sample(self.position);
            m.v[i] += self.sample(self.velocity);
        }
        m.roll += self.sample(self.attitude);
        m.pitch += self.sample(self.attitude);
        m
    }
}

fn deepest(obstacles: &[crate::obstacle::ObstacleSpec], p: &Vector3<f64>, t: f64) -> f64 {
    obstacles.iter().map(|o| o.penetration(p, t)).fold(0.0, f64::max)
}

/// Runs the closed loop described by `scenario`.
pub fn run_closed_loop(scenario: &ScenarioConfig) -> Result<TrajectoryLog> {
    run_closed_loop_with(scenario, RunOptions::default())
}

pub fn run_closed_loop_with(scenario: &ScenarioConfig, options: RunOptions) -> Result<TrajectoryLog> {
    scenario.validate()?;
    let mut ocp: OcpConfig = scenario.ocp_config(0)?;
    let physical = scenario.physical_obstacles()?;
    let bounds = ocp.input_box();
    let ts = ocp.sampling_time;
    let ticks = scenario.ticks();
    let mut solver = PanocSolver::new(scenario.solver.clone())?;
    let mut cold_solver = if options.audit_cold_start {
        Some(PanocSolver::new(SolverConfig {
            record_trace: false,
            ..scenario.solver.clone()
        })?)
    } else {
        None
    };
    let mut estimator = ThrustEstimator::new(scenario.estimator.clone())?;
    let mut noise = Noise::new(scenario);

    let mut plant = scenario.initial.state();
    let mut reference_index = 0;
    let mut previous_solution: Option<Vec<f64>> = None;
    let mut previous_input: Option<ControlInput> = None;
    let mut guess = Vec::with_capacity(ocp.dim());
    let cold_guess = ocp.reference_sequence();
    let substeps = scenario.plant.substeps;
    let h = ts / substeps as f64;

    let mut rows = Vec::with_capacity(ticks);
    for k in 0..ticks {
        let t = k as f64 * ts;
        let measured = noise.measure(&plant);

        let next_index = reference_scheduler(&measured, &scenario.schedule, reference_index);
        let switched = next_index != reference_index;
        if switched {
            reference_index = next_index;
            ocp.reference = scenario.schedule.position(reference_index);
        }

        match &previous_solution {
            Some(prev) => shift_warm_start(prev, &mut guess),
            None => {
                guess.clear();
                guess.extend_from_slice(&cold_guess);
            }
        }
        let problem = ShootingProblem::new(&ocp, &measured)
            .starting_at(t)
            .with_previous_input(previous_input);
        let solution = solver.solve(&problem, &bounds, &guess)?;
        let diag = &solution.diagnostics;
        if diag.status == ExitStatus::LineSearchFailure {
            return Err(Error::LineSearchFailure {
                t,
                iterations: diag.iterations,
                residual: diag.residual_norm,
            });
        }

        let (cold_initial_residual, cold_iterations) = match cold_solver.as_mut() {
            Some(cold) => {
                let s = cold.solve(&problem, &bounds, &cold_guess)?;
                (Some(s.diagnostics.initial_residual), Some(s.diagnostics.iterations))
            }
            None => (None, None),
        };

        let command = ControlInput::from_slice(&solution.u[..NU]);
        let signal = estimator.signal_for(command.thrust);
        let true_c = scenario.plant.thrust_constant.at(t, scenario.duration);
        let applied_thrust = true_c * signal * signal;
        let accel_measurement = applied_thrust + noise.sample(noise.imu);
        let est = estimator.observe(accel_measurement, signal);

        let distance_to_axis = ocp
            .obstacles
            .iter()
            .find_map(|o| o.distance_to_axis(&plant.p, t))
            .unwrap_or(f64::NAN);

        rows.push(LogRow {
            t,
            state: plant,
            command,
            signal,
            applied_thrust,
            iterations: diag.iterations,
            status: diag.status,
            solve_time: diag.solve_time,
            avg_iteration_time: diag.average_iteration_time(),
            residual_inf: diag.residual_inf,
            residual_norm: diag.residual_norm,
            initial_residual: diag.initial_residual,
            accel_measurement,
            accepted: est.accepted,
            thrust_constant_estimate: est.state.estimate,
            estimate_variance: est.state.variance,
            true_thrust_constant: true_c,
            reference_index,
            switched,
            distance_to_axis,
            penetration: deepest(&ocp.obstacles, &plant.p, t),
            physical_penetration: deepest(&physical, &plant.p, t),
            cold_initial_residual,
            cold_iterations,
        });

        let plant_input = ControlInput::new(applied_thrust, command.roll_ref, command.pitch_ref);
        for _ in 0..substeps {
            plant = dynamics::step(&plant, &plant_input, &scenario.model, h, scenario.plant.integrator);
        }
        if !plant.is_finite() {
            return Err(Error::NonFinitePlant { t: t + ts });
        }
        debug_assert!(plant.attitude_is_nominal(), "attitude left (-π/2, π/2) at t = {t}");

        previous_input = Some(command);
        previous_solution = Some(solution.u);
    }

    Ok(TrajectoryLog {
        sampling_time: ts,
        rows,
    })
}
