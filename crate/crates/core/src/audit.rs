//! Finite-difference audit of the adjoint gradient.

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dynamics::MavState;
use crate::ocp::{OcpConfig, ShootingProblem};
use crate::Result;

#[derive(Debug, Clone, PartialEq)]
pub struct GradientAuditConfig {
    pub horizons: Vec<usize>,
    /// Random probes per horizon.
    pub probes: usize,
    pub seed: u64,
}

impl Default for GradientAuditConfig {
    fn default() -> Self {
        GradientAuditConfig {
            horizons: vec![1, 5, 40],
            probes: 100,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HorizonAudit {
    pub horizon: usize,
    pub probes: usize,
    pub max_relative_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientAuditReport {
    pub per_horizon: Vec<HorizonAudit>,
}

impl GradientAuditReport {
    pub fn max_relative_error(&self) -> f64 {
        self.per_horizon
            .iter()
            .map(|h| h.max_relative_error)
            .fold(0.0, f64::max)
    }
}

/// Central finite-difference gradient with a fourth-order stencil.
pub fn finite_difference_gradient(problem: &ShootingProblem<'_>, u: &[f64]) -> Result<Vec<f64>> {
    let mut g = vec![0.0; u.len()];
    let mut w = u.to_vec();
    for i in 0..u.len() {
        let h = 1e-4 * u[i].abs().max(1.0);
        let mut at = |offset: f64| -> Result<f64> {
            w[i] = u[i] + offset;
            problem.total_cost(&w)
        };
        let (p1, m1, p2, m2) = (at(h)?, at(-h)?, at(2.0 * h)?, at(-2.0 * h)?);
        w[i] = u[i];
        g[i] = (8.0 * (p1 - m1) - (p2 - m2)) / (12.0 * h);
    }
    Ok(g)
}

/// `‖a − b‖∞ / max(‖a‖∞, ‖b‖∞, 1)`.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let inf = |v: &[f64]| v.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    let diff = a.iter().zip(b).fold(0.0_f64, |m, (x, y)| m.max((x - y).abs()));
    diff / inf(a).max(inf(b)).max(1.0)
}

fn random_state(rng: &mut ChaCha8Rng) -> MavState {
    let mut x = MavState::hover_at(Vector3::new(
        rng.random_range(-2.5..2.5),
        rng.random_range(-1.0..1.0),
        rng.random_range(0.3..2.0),
    ));
    for i in 0..3 {
        x.v[i] = rng.random_range(-1.0..1.0);
    }
    x.roll = rng.random_range(-0.3..0.3);
    x.pitch = rng.random_range(-0.3..0.3);
    x
}

/// Compares the adjoint gradient with finite differences at random states and
/// input sequences drawn from the input box, for each requested horizon.
pub fn gradient_audit(base: &OcpConfig, audit: &GradientAuditConfig) -> Result<GradientAuditReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(audit.seed);
    let mut per_horizon = Vec::with_capacity(audit.horizons.len());
    for &horizon in &audit.horizons {
        let cfg = OcpConfig {
            horizon,
            ..base.clone()
        };
        cfg.validate()?;
        let mut worst = 0.0_f64;
        for _ in 0..audit.probes {
            let x0 = random_state(&mut rng);
            let t0 = rng.random_range(0.0..10.0);
            let u: Vec<f64> = (0..cfg.dim())
                .map(|i| rng.random_range(cfg.input_lower[i % 3]..=cfg.input_upper[i % 3]))
                .collect();
            let problem = ShootingProblem::new(&cfg, &x0).starting_at(t0);
            let g = problem.gradient(&u)?;
            let fd = finite_difference_gradient(&problem, &u)?;
            worst = worst.max(relative_error(&g, &fd));
        }
        per_horizon.push(HorizonAudit {
            horizon,
            probes: audit.probes,
            max_relative_error: worst,
        });
    }
    Ok(GradientAuditReport { per_horizon })
}
