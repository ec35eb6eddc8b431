//! Scenario files: a versioned TOML schema describing one closed-loop run.
//!
//! Obstacles are declared with their physical geometry; the enlargement by
//! the corner-point ball radius and safety margin happens when the
//! controller configuration is built.

use std::path::Path;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::dynamics::{ControlInput, Integrator, MavState, ModelParams, GRAVITY};
use crate::estimator::EstimatorConfig;
use crate::obstacle::{ConstraintFn, CornerPointSet, ObstacleSpec};
use crate::ocp::{CostWeights, OcpConfig};
use crate::panoc::SolverConfig;
use crate::{Error, Result};

/// Schema version understood by this build.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub name: String,
    /// Simulated time (s).
    pub duration: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub model: ModelParams,
    #[serde(default)]
    pub controller: ControllerSection,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub estimator: EstimatorConfig,
    #[serde(default)]
    pub corners: CornerPointSet,
    #[serde(default)]
    pub obstacles: Vec<ObstacleDecl>,
    pub schedule: ReferenceSchedule,
    pub initial: InitialState,
    #[serde(default)]
    pub plant: PlantOptions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ControllerSection {
    pub horizon: usize,
    pub sampling_time: f64,
    pub input_lower: [f64; 3],
    pub input_upper: [f64; 3],
    /// Defaults to the hover input `(g, 0, 0)`.
    pub input_reference: Option<[f64; 3]>,
    pub weights: CostWeights,
    pub integrator: Integrator,
}

impl Default for ControllerSection {
    fn default() -> Self {
        let ocp = OcpConfig::default();
        ControllerSection {
            horizon: ocp.horizon,
            sampling_time: ocp.sampling_time,
            input_lower: ocp.input_lower,
            input_upper: ocp.input_upper,
            input_reference: None,
            weights: ocp.weights,
            integrator: ocp.integrator,
        }
    }
}

/// A physical obstacle before enlargement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObstacleDecl {
    pub constraints: Vec<ConstraintFn>,
    pub weight: f64,
    pub terminal_weight: f64,
    /// Keep the lower z face of z-slabs where it is (an obstacle standing on
    /// the ground is not inflated below it).
    #[serde(default)]
    pub grounded: bool,
}

impl ObstacleDecl {
    pub fn physical(&self) -> Result<ObstacleSpec> {
        ObstacleSpec::new(self.constraints.clone(), self.weight, self.terminal_weight)
    }

    /// Physical geometry inflated by `radius`, honoring `grounded`.
    pub fn enlarged(&self, radius: f64) -> Result<ObstacleSpec> {
        let mut spec = self.physical()?.enlarge(radius)?;
        if self.grounded {
            for (big, raw) in spec.constraints.iter_mut().zip(&self.constraints) {
                if let (
                    ConstraintFn::AxisSlab { axis: 2, lower, .. },
                    ConstraintFn::AxisSlab { lower: raw_lower, .. },
                ) = (big, raw)
                {
                    *lower = *raw_lower;
                }
            }
        }
        Ok(spec)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceSchedule {
    pub references: Vec<[f64; 3]>,
    /// The next reference is sent once the vehicle is this close (m).
    #[serde(default = "default_switch_radius")]
    pub switch_radius: f64,
}

fn default_switch_radius() -> f64 {
    0.3
}

impl ReferenceSchedule {
    pub fn position(&self, index: usize) -> Vector3<f64> {
        Vector3::from(self.references[index])
    }

    pub fn len(&self) -> usize {
        self.references.len()
    }

    pub fn is_empty(&self) -> bool {
        self.references.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialState {
    pub position: [f64; 3],
    #[serde(default)]
    pub velocity: [f64; 3],
    #[serde(default)]
    pub roll: f64,
    #[serde(default)]
    pub pitch: f64,
}

impl InitialState {
    pub fn state(&self) -> MavState {
        MavState {
            p: Vector3::from(self.position),
            v: Vector3::from(self.velocity),
            roll: self.roll,
            pitch: self.pitch,
        }
    }
}

/// Linear drift of the true thrust constant over the run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThrustConstantProfile {
    pub start: f64,
    pub end: f64,
}

impl ThrustConstantProfile {
    pub fn at(&self, t: f64, duration: f64) -> f64 {
        let s = (t / duration).clamp(0.0, 1.0);
        self.start + (self.end - self.start) * s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlantOptions {
    pub integrator: Integrator,
    /// Integration steps per sampling period.
    pub substeps: usize,
    /// Standard deviation of the accelerometer noise (m/s²).
    pub imu_noise: f64,
    /// Standard deviation of position feedback noise (m).
    pub position_noise: f64,
    /// Standard deviation of velocity feedback noise (m/s).
    pub velocity_noise: f64,
    /// Standard deviation of attitude feedback noise (rad).
    pub attitude_noise: f64,
    pub thrust_constant: ThrustConstantProfile,
}

impl Default for PlantOptions {
    fn default() -> Self {
        PlantOptions {
            integrator: Integrator::Euler,
            substeps: 1,
            imu_noise: 0.4,
            position_noise: 0.0,
            velocity_noise: 0.0,
            attitude_noise: 0.0,
            thrust_constant: ThrustConstantProfile {
                start: 2.2 * GRAVITY,
                end: 2.2 * GRAVITY,
            },
        }
    }
}

impl ScenarioConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ScenarioConfig = toml::from_str(text).map_err(|e| Error::Scenario {
            path: "<string>".into(),
            message: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let cfg: ScenarioConfig = toml::from_str(&text).map_err(|e| Error::Scenario {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        cfg.validate().map_err(|e| Error::Scenario {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::config(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if !(self.duration > 0.0) {
            return Err(Error::config("duration must be positive"));
        }
        if self.schedule.is_empty() {
            return Err(Error::config("reference schedule is empty"));
        }
        if !(self.schedule.switch_radius >= 0.0) {
            return Err(Error::config("switch radius must be non-negative"));
        }
        if self.plant.substeps == 0 {
            return Err(Error::config("plant substeps must be at least 1"));
        }
        let p = &self.plant;
        if [p.imu_noise, p.position_noise, p.velocity_noise, p.attitude_noise]
            .iter()
            .any(|s| !(*s >= 0.0))
        {
            return Err(Error::config("noise levels must be non-negative"));
        }
        if !(p.thrust_constant.start > 0.0 && p.thrust_constant.end > 0.0) {
            return Err(Error::config("true thrust constant must be positive"));
        }
        if !self.initial.state().is_finite() {
            return Err(Error::config("initial state must be finite"));
        }
        self.solver.validate()?;
        self.estimator.validate()?;
        self.ocp_config(0)?.validate()
    }

    /// Controller configuration tracking reference `index`, with every
    /// obstacle enlarged by the corner-point ball radius plus margin.
    pub fn ocp_config(&self, index: usize) -> Result<OcpConfig> {
        let radius = self.corners.enlargement();
        let obstacles = self
            .obstacles
            .iter()
            .map(|o| o.enlarged(radius))
            .collect::<Result<Vec<_>>>()?;
        let c = &self.controller;
        let input_reference = match c.input_reference {
            Some(u) => ControlInput::new(u[0], u[1], u[2]),
            None => ControlInput::hover(self.model.gravity),
        };
        Ok(OcpConfig {
            horizon: c.horizon,
            sampling_time: c.sampling_time,
            input_lower: c.input_lower,
            input_upper: c.input_upper,
            reference: self.schedule.position(index),
            input_reference,
            obstacles,
            corners: self.corners.clone(),
            weights: c.weights.clone(),
            params: self.model,
            integrator: c.integrator,
        })
    }

    /// Physical (not enlarged) obstacles.
    pub fn physical_obstacles(&self) -> Result<Vec<ObstacleSpec>> {
        self.obstacles.iter().map(ObstacleDecl::physical).collect()
    }

    /// Number of control ticks in the run.
    pub fn ticks(&self) -> usize {
        ((self.duration / self.controller.sampling_time).round() as usize).max(1)
    }

    /// Obstacle traversal: an upright 0.45 m cylinder of height 2 m at the
    /// origin, references alternating on either side of it.
    pub fn obstacle_traversal() -> Self {
        ScenarioConfig {
            schema_version: SCHEMA_VERSION,
            name: "obstacle-traversal".into(),
            duration: 60.0,
            seed: 1,
            model: ModelParams::default(),
            controller: ControllerSection::default(),
            solver: SolverConfig::default(),
            estimator: EstimatorConfig::default(),
            corners: CornerPointSet::default(),
            obstacles: vec![ObstacleDecl {
                constraints: vec![
                    ConstraintFn::Cylinder {
                        axis: 2,
                        center: Vector3::zeros(),
                        velocity: Vector3::zeros(),
                        radius: 0.45,
                    },
                    ConstraintFn::AxisSlab {
                        axis: 2,
                        lower: 0.0,
                        upper: 2.0,
                    },
                ],
                weight: 1e4,
                terminal_weight: 1e4,
                grounded: true,
            }],
            schedule: ReferenceSchedule {
                references: vec![[-2.0, 0.0, 1.0], [2.0, 0.0, 1.5]],
                switch_radius: 0.3,
            },
            initial: InitialState {
                position: [-2.0, 0.0, 1.0],
                velocity: [0.0; 3],
                roll: 0.0,
                pitch: 0.0,
            },
            plant: PlantOptions {
                position_noise: 5e-4,
                ..PlantOptions::default()
            },
        }
    }

    /// Hover at 1 m while the true thrust constant decays from 22 to 18 m/s².
    pub fn battery_drain_hover() -> Self {
        ScenarioConfig {
            name: "battery-drain-hover".into(),
            duration: 100.0,
            obstacles: Vec::new(),
            schedule: ReferenceSchedule {
                references: vec![[0.0, 0.0, 1.0]],
                switch_radius: 0.3,
            },
            initial: InitialState {
                position: [0.0, 0.0, 1.0],
                velocity: [0.0; 3],
                roll: 0.0,
                pitch: 0.0,
            },
            plant: PlantOptions {
                thrust_constant: ThrustConstantProfile { start: 22.0, end: 18.0 },
                ..PlantOptions::default()
            },
            ..ScenarioConfig::obstacle_traversal()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_scenario_enlarges_to_expected_geometry() {
        let s = ScenarioConfig::obstacle_traversal();
        s.validate().unwrap();
        let ocp = s.ocp_config(0).unwrap();
        let obs = &ocp.obstacles[0];
        match (&obs.constraints[0], &obs.constraints[1]) {
            (ConstraintFn::Cylinder { radius, .. }, ConstraintFn::AxisSlab { lower, upper, .. }) => {
                assert!((radius - 0.75).abs() < 1e-12);
                assert_eq!(*lower, 0.0);
                assert!((upper - 2.3).abs() < 1e-12);
            }
            other => panic!("unexpected {other:?}"),
        }
        let psi = obs.psi(&Vector3::new(0.0, 0.0, 1.0), 0.0);
        assert!((psi - 0.267363).abs() < 1e-6);
        assert_eq!(ocp.reference, Vector3::new(-2.0, 0.0, 1.0));
        assert_eq!(s.ocp_config(1).unwrap().reference, Vector3::new(2.0, 0.0, 1.5));
    }

    #[test]
    fn toml_round_trip() {
        let s = ScenarioConfig::obstacle_traversal();
        let text = s.to_toml_string();
        let back = ScenarioConfig::from_toml_str(&text).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn minimal_file_uses_defaults() {
        let text = r#"
            schema_version = 1
            duration = 2.0
            [schedule]
            references = [[0.0, 0.0, 1.0]]
            [initial]
            position = [0.0, 0.0, 1.0]
        "#;
        let s = ScenarioConfig::from_toml_str(text).unwrap();
        assert_eq!(s.controller.horizon, 40);
        assert_eq!(s.schedule.switch_radius, 0.3);
        assert_eq!(s.ticks(), 40);
        assert!(s.obstacles.is_empty());
    }

    #[test]
    fn rejects_bad_files() {
        let base = ScenarioConfig::obstacle_traversal();
        let mut s = base.clone();
        s.schema_version = 7;
        assert!(s.validate().is_err());
        let mut s = base.clone();
        s.schedule.references.clear();
        assert!(s.validate().is_err());
        let mut s = base.clone();
        s.duration = 0.0;
        assert!(s.validate().is_err());
        assert!(ScenarioConfig::from_toml_str("schema_version = 1\nduration = 1.0\nbogus = 3").is_err());
    }
}
