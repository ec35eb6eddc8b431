//! Single-shooting NMPC cost with obstacle penalties and its adjoint gradient.
//!
//! The state sequence is eliminated by forward simulation, leaving the
//! stacked input sequence `ū = (ū₀, …, ū_{N−1}) ∈ ℝ^{3N}` as the only
//! decision variable. The gradient is a discrete adjoint sweep built from
//! vector-Jacobian products of the integration step, so no Jacobian matrix is
//! ever formed.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::dynamics::{self, ControlInput, InputVec, Integrator, MavState, ModelParams, StateVec, NU, NX};
use crate::obstacle::{CornerPointSet, ObstacleSpec};
use crate::panoc::{BoxSet, Problem};
use crate::{Error, Result};

/// Diagonal weights of the quadratic tracking cost.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostWeights {
    pub state: [f64; NX],
    pub input: [f64; NU],
    pub terminal: [f64; NX],
    #[serde(default)]
    pub input_rate: [f64; NU],
}

impl Default for CostWeights {
    fn default() -> Self {
        let state = [3.0, 3.0, 12.0, 1.0, 1.0, 1.0, 3.0, 3.0];
        CostWeights {
            state,
            input: [2.0, 10.0, 10.0],
            terminal: state.map(|q| 10.0 * q),
            input_rate: [0.0; NU],
        }
    }
}

impl CostWeights {
    fn validate(&self) -> Result<()> {
        let ok = |w: &[f64]| w.iter().all(|&v| v >= 0.0 && v.is_finite());
        if ok(&self.state) && ok(&self.input) && ok(&self.terminal) && ok(&self.input_rate) {
            Ok(())
        } else {
            Err(Error::config("cost weights must be finite and non-negative"))
        }
    }

    fn has_rate_term(&self) -> bool {
        self.input_rate.iter().any(|&w| w > 0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OcpConfig {
    /// Number of shooting intervals `N`.
    pub horizon: usize,
    /// Sampling period `T_s` (s).
    pub sampling_time: f64,
    pub input_lower: [f64; NU],
    pub input_upper: [f64; NU],
    /// Position part of the reference state; velocities and angles track zero.
    pub reference: Vector3<f64>,
    pub input_reference: ControlInput,
    pub obstacles: Vec<ObstacleSpec>,
    pub corners: CornerPointSet,
    pub weights: CostWeights,
    pub params: ModelParams,
    #[serde(default)]
    pub integrator: Integrator,
}

impl Default for OcpConfig {
    fn default() -> Self {
        let params = ModelParams::default();
        let g = params.gravity;
        OcpConfig {
            horizon: 40,
            sampling_time: 0.05,
            input_lower: [0.0, -0.5, -0.5],
            input_upper: [2.0 * g, 0.5, 0.5],
            reference: Vector3::zeros(),
            input_reference: ControlInput::hover(g),
            obstacles: Vec::new(),
            corners: CornerPointSet::default(),
            weights: CostWeights::default(),
            params,
            integrator: Integrator::Euler,
        }
    }
}

impl OcpConfig {
    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::config("horizon must be at least one step"));
        }
        if !(self.sampling_time > 0.0) {
            return Err(Error::config("sampling time must be positive"));
        }
        for i in 0..NU {
            if !(self.input_lower[i] <= self.input_upper[i]) {
                return Err(Error::config(format!("input bound {i}: lower > upper")));
            }
        }
        if !self.reference.iter().all(|c| c.is_finite()) {
            return Err(Error::config("reference position must be finite"));
        }
        self.params.validate()?;
        self.weights.validate()?;
        self.corners.validate()?;
        self.obstacles.iter().try_for_each(ObstacleSpec::validate)
    }

    /// Decision-vector length `3N`.
    pub fn dim(&self) -> usize {
        NU * self.horizon
    }

    /// `x_ref = (p_ref, 0, …, 0)`.
    pub fn reference_state(&self) -> StateVec {
        let mut x = StateVec::zeros();
        x[0] = self.reference.x;
        x[1] = self.reference.y;
        x[2] = self.reference.z;
        x
    }

    /// The input box `U₀ × … × U_{N−1}`.
    pub fn input_box(&self) -> BoxSet {
        let n = self.dim();
        let lower = (0..n).map(|i| self.input_lower[i % NU]).collect();
        let upper = (0..n).map(|i| self.input_upper[i % NU]).collect();
        BoxSet::new(lower, upper).expect("validated bounds")
    }

    /// `ū ≡ u_ref`.
    pub fn reference_sequence(&self) -> Vec<f64> {
        let u = self.input_reference.to_vector();
        (0..self.dim()).map(|i| u[i % NU]).collect()
    }

    fn obstacle_penalty(&self, p: &Vector3<f64>, t: f64, terminal: bool) -> f64 {
        let mut total = 0.0;
        for obs in &self.obstacles {
            let w = if terminal { obs.terminal_weight } else { obs.weight };
            for i in 0..self.corners.len() {
                total += w * obs.psi(&self.corners.point(i, p), t);
            }
        }
        total
    }

    fn obstacle_penalty_grad(&self, p: &Vector3<f64>, t: f64, terminal: bool) -> Vector3<f64> {
        let mut total = Vector3::zeros();
        for obs in &self.obstacles {
            let w = if terminal { obs.terminal_weight } else { obs.weight };
            for i in 0..self.corners.len() {
                total += w * obs.grad_psi(&self.corners.point(i, p), t);
            }
        }
        total
    }

    fn stage_cost_vec(&self, x: &StateVec, u: &InputVec, u_prev: Option<&InputVec>, t: f64) -> f64 {
        let w = &self.weights;
        let x_ref = self.reference_state();
        let u_ref = self.input_reference.to_vector();
        let mut cost = 0.0;
        for i in 0..NX {
            let e = x[i] - x_ref[i];
            cost += w.state[i] * e * e;
        }
        for j in 0..NU {
            let e = u[j] - u_ref[j];
            cost += w.input[j] * e * e;
        }
        if let Some(prev) = u_prev {
            for j in 0..NU {
                let e = u[j] - prev[j];
                cost += w.input_rate[j] * e * e;
            }
        }
        cost + self.obstacle_penalty(&Vector3::new(x[0], x[1], x[2]), t, false)
    }

    fn stage_state_grad(&self, x: &StateVec, t: f64) -> StateVec {
        let x_ref = self.reference_state();
        let mut g = StateVec::from_fn(|i, _| 2.0 * self.weights.state[i] * (x[i] - x_ref[i]));
        let gp = self.obstacle_penalty_grad(&Vector3::new(x[0], x[1], x[2]), t, false);
        g[0] += gp.x;
        g[1] += gp.y;
        g[2] += gp.z;
        g
    }

    fn terminal_cost_vec(&self, x: &StateVec, t: f64) -> f64 {
        let x_ref = self.reference_state();
        let mut cost = 0.0;
        for i in 0..NX {
            let e = x[i] - x_ref[i];
            cost += self.weights.terminal[i] * e * e;
        }
        cost + self.obstacle_penalty(&Vector3::new(x[0], x[1], x[2]), t, true)
    }

    fn terminal_grad(&self, x: &StateVec, t: f64) -> StateVec {
        let x_ref = self.reference_state();
        let mut g = StateVec::from_fn(|i, _| 2.0 * self.weights.terminal[i] * (x[i] - x_ref[i]));
        let gp = self.obstacle_penalty_grad(&Vector3::new(x[0], x[1], x[2]), t, true);
        g[0] += gp.x;
        g[1] += gp.y;
        g[2] += gp.z;
        g
    }
}

/// Stage cost `ℓ̃(x, u)` at time `t`, including obstacle penalties and, when
/// `u_prev` is given, the input-rate term.
pub fn stage_cost(cfg: &OcpConfig, x: &MavState, u: &ControlInput, u_prev: Option<&ControlInput>, t: f64) -> f64 {
    let prev = u_prev.map(ControlInput::to_vector);
    cfg.stage_cost_vec(&x.to_vector(), &u.to_vector(), prev.as_ref(), t)
}

/// Terminal cost `ℓ̃_N(x)` at time `t`.
pub fn terminal_cost(cfg: &OcpConfig, x: &MavState, t: f64) -> f64 {
    cfg.terminal_cost_vec(&x.to_vector(), t)
}

fn check_len(cfg: &OcpConfig, u_seq: &[f64]) -> Result<()> {
    if u_seq.len() != cfg.dim() {
        return Err(Error::DimensionMismatch {
            expected: cfg.dim(),
            got: u_seq.len(),
        });
    }
    Ok(())
}

fn block(u_seq: &[f64], k: usize) -> InputVec {
    InputVec::from_column_slice(&u_seq[NU * k..NU * (k + 1)])
}

fn shoot_into(cfg: &OcpConfig, u_seq: &[f64], x0: &StateVec, states: &mut Vec<StateVec>) -> Result<()> {
    states.clear();
    states.push(*x0);
    let mut x = *x0;
    for k in 0..cfg.horizon {
        x = dynamics::step_vec(&x, &block(u_seq, k), &cfg.params, cfg.sampling_time, cfg.integrator);
        if !x.iter().all(|c| c.is_finite()) {
            return Err(Error::DivergedTrajectory { step: k + 1 });
        }
        states.push(x);
    }
    Ok(())
}

/// Predicted states `F₀ … F_N` under `u_seq` starting from `x0`.
pub fn shoot(cfg: &OcpConfig, u_seq: &[f64], x0: &MavState) -> Result<Vec<MavState>> {
    check_len(cfg, u_seq)?;
    let mut states = Vec::with_capacity(cfg.horizon + 1);
    shoot_into(cfg, u_seq, &x0.to_vector(), &mut states)?;
    Ok(states.iter().map(MavState::from_vector).collect())
}

/// One instance of the finite-horizon problem: configuration plus the
/// measured state, start time and previously applied input.
#[derive(Debug, Clone)]
pub struct ShootingProblem<'a> {
    cfg: &'a OcpConfig,
    x0: StateVec,
    t0: f64,
    previous_input: Option<InputVec>,
}

impl<'a> ShootingProblem<'a> {
    pub fn new(cfg: &'a OcpConfig, x0: &MavState) -> Self {
        ShootingProblem {
            cfg,
            x0: x0.to_vector(),
            t0: 0.0,
            previous_input: None,
        }
    }

    /// Absolute time of the first prediction step (for moving obstacles).
    pub fn starting_at(mut self, t0: f64) -> Self {
        self.t0 = t0;
        self
    }

    /// Input applied during the previous sampling period; only used by the
    /// input-rate penalty on the first block.
    pub fn with_previous_input(mut self, u: Option<ControlInput>) -> Self {
        self.previous_input = u.map(|u| u.to_vector());
        self
    }

    pub fn config(&self) -> &OcpConfig {
        self.cfg
    }

    fn time(&self, k: usize) -> f64 {
        self.t0 + k as f64 * self.cfg.sampling_time
    }

    fn previous_for(&self, u_seq: &[f64], k: usize) -> Option<InputVec> {
        if !self.cfg.weights.has_rate_term() {
            None
        } else if k == 0 {
            self.previous_input
        } else {
            Some(block(u_seq, k - 1))
        }
    }

    fn cost_from_states(&self, u_seq: &[f64], states: &[StateVec]) -> f64 {
        let n = self.cfg.horizon;
        let mut total = 0.0;
        for (k, x) in states.iter().enumerate().take(n) {
            let prev = self.previous_for(u_seq, k);
            total += self
                .cfg
                .stage_cost_vec(x, &block(u_seq, k), prev.as_ref(), self.time(k));
        }
        total + self.cfg.terminal_cost_vec(&states[n], self.time(n))
    }

    /// `φ(ū)`.
    pub fn total_cost(&self, u_seq: &[f64]) -> Result<f64> {
        check_len(self.cfg, u_seq)?;
        let mut states = Vec::with_capacity(self.cfg.horizon + 1);
        shoot_into(self.cfg, u_seq, &self.x0, &mut states)?;
        Ok(self.cost_from_states(u_seq, &states))
    }

    /// `φ(ū)` and `∇φ(ū)` from one forward shot and one adjoint sweep.
    pub fn cost_and_gradient(&self, u_seq: &[f64], grad: &mut [f64]) -> Result<f64> {
        check_len(self.cfg, u_seq)?;
        check_len(self.cfg, grad)?;
        let cfg = self.cfg;
        let n = cfg.horizon;
        let mut states = Vec::with_capacity(n + 1);
        shoot_into(cfg, u_seq, &self.x0, &mut states)?;
        let cost = self.cost_from_states(u_seq, &states);

        let u_ref = cfg.input_reference.to_vector();
        let rate = cfg.weights.has_rate_term();
        let mut lambda = cfg.terminal_grad(&states[n], self.time(n));
        for k in (0..n).rev() {
            let u = block(u_seq, k);
            let (ax, bu) = dynamics::step_vjp(&states[k], &u, &cfg.params, cfg.sampling_time, cfg.integrator, &lambda);
            for j in 0..NU {
                grad[NU * k + j] = bu[j] + 2.0 * cfg.weights.input[j] * (u[j] - u_ref[j]);
            }
            lambda = ax + cfg.stage_state_grad(&states[k], self.time(k));
        }
        if rate {
            let w = &cfg.weights.input_rate;
            for k in 0..n {
                let u = block(u_seq, k);
                let prev = if k == 0 {
                    self.previous_input
                } else {
                    Some(block(u_seq, k - 1))
                };
                if let Some(prev) = prev {
                    for j in 0..NU {
                        let d = 2.0 * w[j] * (u[j] - prev[j]);
                        grad[NU * k + j] += d;
                        if k > 0 {
                            grad[NU * (k - 1) + j] -= d;
                        }
                    }
                }
            }
        }
        Ok(cost)
    }

    /// `∇φ(ū)` as a fresh vector.
    pub fn gradient(&self, u_seq: &[f64]) -> Result<Vec<f64>> {
        let mut g = vec![0.0; self.cfg.dim()];
        self.cost_and_gradient(u_seq, &mut g)?;
        Ok(g)
    }
}

impl Problem for ShootingProblem<'_> {
    fn dim(&self) -> usize {
        self.cfg.dim()
    }

    fn cost(&self, u: &[f64]) -> Result<f64> {
        self.total_cost(u)
    }

    fn cost_and_gradient(&self, u: &[f64], grad: &mut [f64]) -> Result<f64> {
        ShootingProblem::cost_and_gradient(self, u, grad)
    }
}
