//! Scalar EKF for the special thrust constant `C` in `a = C·u_T²`.

use serde::{Deserialize, Serialize};

use crate::dynamics::GRAVITY;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EstimatorConfig {
    /// Initial variance of the estimate.
    pub initial_variance: f64,
    /// Random-walk variance added before every update.
    pub process_variance: f64,
    /// Accelerometer measurement variance.
    pub measurement_variance: f64,
    pub lower_bound: f64,
    pub upper_bound: f64,
    /// Smallest thrust signal accepted for an update.
    pub min_signal: f64,
    pub initial_estimate: f64,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        EstimatorConfig {
            initial_variance: 100.0,
            process_variance: 1e-3,
            measurement_variance: 1.0,
            lower_bound: GRAVITY,
            upper_bound: 10.0 * GRAVITY,
            min_signal: 0.1,
            initial_estimate: 2.0 * GRAVITY,
        }
    }
}

impl EstimatorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.initial_variance > 0.0 && self.process_variance > 0.0 && self.measurement_variance > 0.0) {
            return Err(Error::config("estimator variances must be positive"));
        }
        if !(self.lower_bound > 0.0 && self.lower_bound < self.upper_bound) {
            return Err(Error::config("estimator bounds need 0 < lower < upper"));
        }
        if !(self.initial_estimate >= self.lower_bound && self.initial_estimate <= self.upper_bound) {
            return Err(Error::config("initial thrust constant outside the bounds"));
        }
        if !(self.min_signal > 0.0 && self.min_signal <= 1.0) {
            return Err(Error::config("min_signal must lie in (0, 1]"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatorState {
    pub estimate: f64,
    pub variance: f64,
}

impl EstimatorState {
    pub fn initial(cfg: &EstimatorConfig) -> Self {
        EstimatorState {
            estimate: cfg.initial_estimate,
            variance: cfg.initial_variance,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rejection {
    LowSignal,
    OutOfBounds,
}

/// An accelerometer sample that passed the outlier gate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VettedMeasurement {
    accel: f64,
    signal: f64,
    direct: f64,
}

impl VettedMeasurement {
    /// The direct estimate `a_m / u_T²`.
    pub fn direct_estimate(&self) -> f64 {
        self.direct
    }
}

/// Outlier gate: `C̃ = a_m / u_T²` must lie within the configured bounds.
pub fn direct_estimate(
    accel: f64,
    signal: f64,
    cfg: &EstimatorConfig,
) -> std::result::Result<VettedMeasurement, Rejection> {
    if !(signal >= cfg.min_signal) {
        return Err(Rejection::LowSignal);
    }
    let direct = accel / (signal * signal);
    if direct >= cfg.lower_bound && direct <= cfg.upper_bound {
        Ok(VettedMeasurement { accel, signal, direct })
    } else {
        Err(Rejection::OutOfBounds)
    }
}

/// One predict/update cycle with measurement model `y = C·u_T²`.
pub fn ekf_update(state: &EstimatorState, m: &VettedMeasurement, cfg: &EstimatorConfig) -> EstimatorState {
    let predicted = state.variance + cfg.process_variance;
    let h = m.signal * m.signal;
    let gain = predicted * h / (h * h * predicted + cfg.measurement_variance);
    let innovation = m.accel - state.estimate * h;
    EstimatorState {
        estimate: (state.estimate + gain * innovation).clamp(cfg.lower_bound, cfg.upper_bound),
        variance: (1.0 - gain * h) * predicted,
    }
}

/// Normalized thrust signal `u_T = clamp(√(T_d / Ĉ), 0, 1)`.
pub fn thrust_to_signal(thrust: f64, estimate: f64) -> f64 {
    (thrust.max(0.0) / estimate).sqrt().clamp(0.0, 1.0)
}

/// Outcome of feeding one sample to [`ThrustEstimator`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimatorStep {
    pub accepted: bool,
    pub rejection: Option<Rejection>,
    pub state: EstimatorState,
}

/// The estimator as a small state machine owned by the control loop.
#[derive(Debug, Clone)]
pub struct ThrustEstimator {
    cfg: EstimatorConfig,
    state: EstimatorState,
}

impl ThrustEstimator {
    pub fn new(cfg: EstimatorConfig) -> Result<Self> {
        cfg.validate()?;
        let state = EstimatorState::initial(&cfg);
        Ok(ThrustEstimator { cfg, state })
    }

    pub fn state(&self) -> EstimatorState {
        self.state
    }

    pub fn config(&self) -> &EstimatorConfig {
        &self.cfg
    }

    pub fn signal_for(&self, thrust: f64) -> f64 {
        thrust_to_signal(thrust, self.state.estimate)
    }

    pub fn observe(&mut self, accel: f64, signal: f64) -> EstimatorStep {
        match direct_estimate(accel, signal, &self.cfg) {
            Ok(m) => {
                self.state = ekf_update(&self.state, &m, &self.cfg);
                EstimatorStep {
                    accepted: true,
                    rejection: None,
                    state: self.state,
                }
            }
            Err(why) => EstimatorStep {
                accepted: false,
                rejection: Some(why),
                state: self.state,
            },
        }
    }
}
