//! Quadrotor kinematics in a yaw-compensated world frame.
//!
//! The state is `(p, v, roll, pitch)` and the input is the commanded thrust
//! acceleration together with roll and pitch references for the attitude
//! loop, which is modelled as a first-order lag.

use nalgebra::{Matrix3, SVector, Vector3};
use serde::{Deserialize, Serialize};

/// Number of state components.
pub const NX: usize = 8;
/// Number of input components.
pub const NU: usize = 3;

pub type StateVec = SVector<f64, NX>;
pub type InputVec = SVector<f64, NU>;

/// Standard gravity (m/s²).
pub const GRAVITY: f64 = 9.81;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MavState {
    /// Position (m).
    pub p: Vector3<f64>,
    /// Velocity (m/s).
    pub v: Vector3<f64>,
    /// Roll angle (rad).
    pub roll: f64,
    /// Pitch angle (rad).
    pub pitch: f64,
}

impl MavState {
    /// At rest, level, at position `p`.
    pub fn hover_at(p: Vector3<f64>) -> Self {
        MavState {
            p,
            v: Vector3::zeros(),
            roll: 0.0,
            pitch: 0.0,
        }
    }

    pub fn to_vector(&self) -> StateVec {
        StateVec::from_column_slice(&[
            self.p.x, self.p.y, self.p.z, self.v.x, self.v.y, self.v.z, self.roll, self.pitch,
        ])
    }

    pub fn from_vector(x: &StateVec) -> Self {
        MavState {
            p: Vector3::new(x[0], x[1], x[2]),
            v: Vector3::new(x[3], x[4], x[5]),
            roll: x[6],
            pitch: x[7],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.to_vector().iter().all(|c| c.is_finite())
    }

    /// Both tilt angles strictly inside (-π/2, π/2).
    pub fn attitude_is_nominal(&self) -> bool {
        self.roll.abs() < std::f64::consts::FRAC_PI_2 && self.pitch.abs() < std::f64::consts::FRAC_PI_2
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlInput {
    /// Thrust acceleration along the body z axis (m/s²).
    pub thrust: f64,
    /// Roll reference for the attitude loop (rad).
    pub roll_ref: f64,
    /// Pitch reference for the attitude loop (rad).
    pub pitch_ref: f64,
}

impl ControlInput {
    pub const fn new(thrust: f64, roll_ref: f64, pitch_ref: f64) -> Self {
        ControlInput {
            thrust,
            roll_ref,
            pitch_ref,
        }
    }

    /// Level hover input for gravity `g`.
    pub const fn hover(g: f64) -> Self {
        ControlInput::new(g, 0.0, 0.0)
    }

    pub fn to_vector(&self) -> InputVec {
        InputVec::new(self.thrust, self.roll_ref, self.pitch_ref)
    }

    pub fn from_slice(u: &[f64]) -> Self {
        ControlInput::new(u[0], u[1], u[2])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    /// Linear drag coefficients (1/s).
    pub drag: [f64; 3],
    pub tau_roll: f64,
    pub tau_pitch: f64,
    pub gain_roll: f64,
    pub gain_pitch: f64,
    pub gravity: f64,
}

impl Default for ModelParams {
    fn default() -> Self {
        ModelParams {
            drag: [0.1, 0.1, 0.2],
            tau_roll: 0.5,
            tau_pitch: 0.5,
            gain_roll: 1.0,
            gain_pitch: 1.0,
            gravity: GRAVITY,
        }
    }
}

impl ModelParams {
    pub fn validate(&self) -> crate::Result<()> {
        if !(self.tau_roll > 0.0 && self.tau_pitch > 0.0) {
            return Err(crate::Error::config("attitude time constants must be positive"));
        }
        if self.drag.iter().any(|&a| !(a >= 0.0)) {
            return Err(crate::Error::config("drag coefficients must be non-negative"));
        }
        if !(self.gravity > 0.0) {
            return Err(crate::Error::config("gravity must be positive"));
        }
        if !(self.gain_roll.is_finite() && self.gain_pitch.is_finite()) {
            return Err(crate::Error::config("attitude gains must be finite"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Integrator {
    #[default]
    Euler,
    Rk4,
}

/// `R_y(pitch) · R_x(roll)`.
pub fn rotation_matrix(roll: f64, pitch: f64) -> Matrix3<f64> {
    let (sr, cr) = roll.sin_cos();
    let (sp, cp) = pitch.sin_cos();
    let rx = Matrix3::new(1.0, 0.0, 0.0, 0.0, cr, -sr, 0.0, sr, cr);
    let ry = Matrix3::new(cp, 0.0, sp, 0.0, 1.0, 0.0, -sp, 0.0, cp);
    ry * rx
}

/// Third column of the attitude matrix, i.e. the body z axis in world frame.
#[inline]
fn thrust_axis(roll: f64, pitch: f64) -> Vector3<f64> {
    let (sr, cr) = roll.sin_cos();
    let (sp, cp) = pitch.sin_cos();
    Vector3::new(sp * cr, -sr, cp * cr)
}

pub(crate) fn derivative_vec(x: &StateVec, u: &InputVec, params: &ModelParams) -> StateVec {
    let axis = thrust_axis(x[6], x[7]);
    let thrust = u[0];
    let mut dx = StateVec::zeros();
    dx[0] = x[3];
    dx[1] = x[4];
    dx[2] = x[5];
    dx[3] = thrust * axis.x - params.drag[0] * x[3];
    dx[4] = thrust * axis.y - params.drag[1] * x[4];
    dx[5] = thrust * axis.z - params.gravity - params.drag[2] * x[5];
    dx[6] = (params.gain_roll * u[1] - x[6]) / params.tau_roll;
    dx[7] = (params.gain_pitch * u[2] - x[7]) / params.tau_pitch;
    dx
}

/// Vector-Jacobian product of the vector field: returns `(∂f/∂x)ᵀw, (∂f/∂u)ᵀw`.
pub(crate) fn derivative_vjp(x: &StateVec, u: &InputVec, params: &ModelParams, w: &StateVec) -> (StateVec, InputVec) {
    let (sr, cr) = x[6].sin_cos();
    let (sp, cp) = x[7].sin_cos();
    let thrust = u[0];
    let (wv0, wv1, wv2) = (w[3], w[4], w[5]);

    let mut gx = StateVec::zeros();
    gx[3] = w[0] - params.drag[0] * wv0;
    gx[4] = w[1] - params.drag[1] * wv1;
    gx[5] = w[2] - params.drag[2] * wv2;
    // d(axis)/d(roll) = (-sp*sr, -cr, -cp*sr); d(axis)/d(pitch) = (cp*cr, 0, -sp*cr)
    gx[6] = thrust * (-wv0 * sp * sr - wv1 * cr - wv2 * cp * sr) - w[6] / params.tau_roll;
    gx[7] = thrust * (wv0 * cp * cr - wv2 * sp * cr) - w[7] / params.tau_pitch;

    let gu = InputVec::new(
        wv0 * sp * cr - wv1 * sr + wv2 * cp * cr,
        w[6] * params.gain_roll / params.tau_roll,
        w[7] * params.gain_pitch / params.tau_pitch,
    );
    (gx, gu)
}

pub(crate) fn step_vec(x: &StateVec, u: &InputVec, params: &ModelParams, dt: f64, method: Integrator) -> StateVec {
    match method {
        Integrator::Euler => x + derivative_vec(x, u, params) * dt,
        Integrator::Rk4 => {
            let k1 = derivative_vec(x, u, params);
            let k2 = derivative_vec(&(x + k1 * (0.5 * dt)), u, params);
            let k3 = derivative_vec(&(x + k2 * (0.5 * dt)), u, params);
            let k4 = derivative_vec(&(x + k3 * dt), u, params);
            x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0)
        }
    }
}

/// Adjoint of one integration step: given `λ` on the successor state, returns
/// `(Aᵀλ, Bᵀλ)` where `A`, `B` are the step's state and input Jacobians.
pub(crate) fn step_vjp(
    x: &StateVec,
    u: &InputVec,
    params: &ModelParams,
    dt: f64,
    method: Integrator,
    lambda: &StateVec,
) -> (StateVec, InputVec) {
    match method {
        Integrator::Euler => {
            let (gx, gu) = derivative_vjp(x, u, params, lambda);
            (lambda + gx * dt, gu * dt)
        }
        Integrator::Rk4 => {
            let k1 = derivative_vec(x, u, params);
            let x2 = x + k1 * (0.5 * dt);
            let k2 = derivative_vec(&x2, u, params);
            let x3 = x + k2 * (0.5 * dt);
            let k3 = derivative_vec(&x3, u, params);
            let x4 = x + k3 * dt;

            let mut x_bar = *lambda;
            let mut u_bar = InputVec::zeros();
            let k4_bar = lambda * (dt / 6.0);
            let mut k3_bar = lambda * (dt / 3.0);
            let mut k2_bar = lambda * (dt / 3.0);
            let mut k1_bar = lambda * (dt / 6.0);

            let (gx, gu) = derivative_vjp(&x4, u, params, &k4_bar);
            x_bar += gx;
            k3_bar += gx * dt;
            u_bar += gu;

            let (gx, gu) = derivative_vjp(&x3, u, params, &k3_bar);
            x_bar += gx;
            k2_bar += gx * (0.5 * dt);
            u_bar += gu;

            let (gx, gu) = derivative_vjp(&x2, u, params, &k2_bar);
            x_bar += gx;
            k1_bar += gx * (0.5 * dt);
            u_bar += gu;

            let (gx, gu) = derivative_vjp(x, u, params, &k1_bar);
            x_bar += gx;
            u_bar += gu;
            (x_bar, u_bar)
        }
    }
}

/// Continuous-time vector field, returned as an 8-vector in state ordering.
pub fn derivative(x: &MavState, u: &ControlInput, params: &ModelParams) -> StateVec {
    derivative_vec(&x.to_vector(), &u.to_vector(), params)
}

/// One explicit integration step of length `dt` under a constant input.
pub fn step(x: &MavState, u: &ControlInput, params: &ModelParams, dt: f64, method: Integrator) -> MavState {
    debug_assert!(dt > 0.0);
    MavState::from_vector(&step_vec(&x.to_vector(), &u.to_vector(), params, dt, method))
}
