//! PANOC: projected-gradient steps blended with L-BFGS directions, globalized
//! by a line search on the forward-backward envelope.
//!
//! The method needs only the cost, its gradient and the projection onto the
//! feasible box; every operation on the decision vector is an `O(n)` vector
//! update or inner product.

use std::collections::VecDeque;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Relative slack on the quadratic upper-bound test, so that cost round-off
/// near a solution is not mistaken for curvature.
const UPPER_BOUND_SLACK: f64 = 1e-12;

/// Cost/gradient oracle for `minimize φ(u)` over a box.
pub trait Problem {
    fn dim(&self) -> usize;

    fn cost(&self, u: &[f64]) -> Result<f64>;

    /// Writes `∇φ(u)` into `grad` and returns `φ(u)`.
    fn cost_and_gradient(&self, u: &[f64], grad: &mut [f64]) -> Result<f64>;
}

/// Componentwise bounds `lower ≤ u ≤ upper`; infinite bounds are allowed.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxSet {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl BoxSet {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::DimensionMismatch {
                expected: lower.len(),
                got: upper.len(),
            });
        }
        if lower.iter().zip(&upper).any(|(l, u)| !(l <= u)) {
            return Err(Error::config("box bounds need lower <= upper"));
        }
        Ok(BoxSet { lower, upper })
    }

    /// The whole space `ℝⁿ`.
    pub fn unbounded(n: usize) -> Self {
        BoxSet {
            lower: vec![f64::NEG_INFINITY; n],
            upper: vec![f64::INFINITY; n],
        }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn contains(&self, u: &[f64]) -> bool {
        u.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(v, (l, h))| l <= v && v <= h)
    }

    /// Euclidean projection: a componentwise clamp.
    pub fn project(&self, v: &[f64]) -> Vec<f64> {
        let mut out = v.to_vec();
        self.project_in_place(&mut out);
        out
    }

    pub fn project_in_place(&self, v: &mut [f64]) {
        for (x, (l, h)) in v.iter_mut().zip(self.lower.iter().zip(&self.upper)) {
            *x = x.max(*l).min(*h);
        }
    }

    /// Squared distance from `v` to the box.
    pub fn dist_sq(&self, v: &[f64]) -> f64 {
        v.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(x, (l, h))| {
                let d = x - x.max(*l).min(*h);
                d * d
            })
            .sum()
    }
}

/// Free-function form of [`BoxSet::project`].
pub fn project(v: &[f64], bounds: &BoxSet) -> Vec<f64> {
    bounds.project(v)
}

/// Projected gradient step `T_γ(u) = Π(u − γ∇φ(u))` and the fixed-point
/// residual `r = (u − T_γ(u)) / γ`.
pub fn prox_grad_step(u: &[f64], grad: &[f64], gamma: f64, bounds: &BoxSet) -> (Vec<f64>, Vec<f64>) {
    let mut half = vec![0.0; u.len()];
    let mut r = vec![0.0; u.len()];
    prox_grad_into(u, grad, gamma, bounds, &mut half, &mut r);
    (half, r)
}

fn prox_grad_into(u: &[f64], grad: &[f64], gamma: f64, bounds: &BoxSet, half: &mut [f64], r: &mut [f64]) {
    for i in 0..u.len() {
        let h = (u[i] - gamma * grad[i]).max(bounds.lower[i]).min(bounds.upper[i]);
        half[i] = h;
        r[i] = (u[i] - h) / gamma;
    }
}

/// Next iterate `u − (1−τ)γr + τd`. For `τ = 0` this is exactly the
/// projected-gradient point `half`.
pub fn panoc_update(u: &[f64], half: &[f64], r: &[f64], d: &[f64], gamma: f64, tau: f64) -> Vec<f64> {
    let mut out = vec![0.0; u.len()];
    panoc_update_into(u, half, r, d, gamma, tau, &mut out);
    out
}

fn panoc_update_into(u: &[f64], half: &[f64], r: &[f64], d: &[f64], gamma: f64, tau: f64, out: &mut [f64]) {
    if tau == 0.0 {
        out.copy_from_slice(half);
    } else {
        for i in 0..u.len() {
            out[i] = u[i] - (1.0 - tau) * gamma * r[i] + tau * d[i];
        }
    }
}

/// Forward-backward envelope
/// `φ_γ(u) = φ(u) − (γ/2)‖∇φ(u)‖² + (1/2γ)·dist²(u − γ∇φ(u), U)`.
pub fn fbe(u: &[f64], cost: f64, grad: &[f64], gamma: f64, bounds: &BoxSet) -> f64 {
    let step: Vec<f64> = u.iter().zip(grad).map(|(x, g)| x - gamma * g).collect();
    cost - 0.5 * gamma * dot(grad, grad) + bounds.dist_sq(&step) / (2.0 * gamma)
}

/// Same value as [`fbe`] written in terms of the residual:
/// `φ − γ∇φᵀr + (γ/2)‖r‖²`.
fn fbe_from_residual(cost: f64, grad: &[f64], r: &[f64], gamma: f64) -> f64 {
    cost - gamma * dot(grad, r) + 0.5 * gamma * dot(r, r)
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

struct CurvaturePair {
    s: Vec<f64>,
    y: Vec<f64>,
    rho: f64,
}

/// Limited-memory inverse-Hessian approximation with the cautious update rule.
pub struct LbfgsBuffer {
    memory: usize,
    /// Oldest pair at the front.
    pairs: VecDeque<CurvaturePair>,
    alpha: Vec<f64>,
}

impl LbfgsBuffer {
    pub fn new(memory: usize) -> Self {
        LbfgsBuffer {
            memory,
            pairs: VecDeque::with_capacity(memory),
            alpha: vec![0.0; memory],
        }
    }

    pub fn memory(&self) -> usize {
        self.memory
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn reset(&mut self) {
        self.pairs.clear();
    }

    /// Appends `(s, y)` if `sᵀy/‖s‖² > ε_d·‖r‖`, evicting the oldest pair when
    /// full. Returns whether the pair was stored.
    pub fn update(&mut self, s: &[f64], y: &[f64], r_norm: f64, epsilon_d: f64) -> bool {
        if self.memory == 0 {
            return false;
        }
        let sy = dot(s, y);
        let ss = dot(s, s);
        if !(sy > 0.0) || !(ss > 0.0) || !(sy / ss > epsilon_d * r_norm) {
            return false;
        }
        let mut pair = if self.pairs.len() == self.memory {
            self.pairs.pop_front().expect("non-empty")
        } else {
            CurvaturePair {
                s: Vec::with_capacity(s.len()),
                y: Vec::with_capacity(y.len()),
                rho: 0.0,
            }
        };
        pair.s.clear();
        pair.s.extend_from_slice(s);
        pair.y.clear();
        pair.y.extend_from_slice(y);
        pair.rho = 1.0 / sy;
        self.pairs.push_back(pair);
        true
    }

    /// Two-loop recursion: writes `d = −H r` and returns the number of scalar
    /// multiplications spent on the vector operations.
    pub fn direction_into(&mut self, r: &[f64], d: &mut [f64]) -> usize {
        let n = r.len();
        d.copy_from_slice(r);
        let mut mults = 0;
        let m = self.pairs.len();
        if m > 0 {
            for (i, pair) in self.pairs.iter().enumerate().rev() {
                let a = pair.rho * dot(&pair.s, d);
                self.alpha[i] = a;
                for (dj, yj) in d.iter_mut().zip(&pair.y) {
                    *dj -= a * yj;
                }
                mults += 2 * n;
            }
            let newest = self.pairs.back().expect("non-empty");
            let scale = 1.0 / (newest.rho * dot(&newest.y, &newest.y));
            for dj in d.iter_mut() {
                *dj *= scale;
            }
            mults += 2 * n;
            for (i, pair) in self.pairs.iter().enumerate() {
                let b = pair.rho * dot(&pair.y, d);
                let c = self.alpha[i] - b;
                for (dj, sj) in d.iter_mut().zip(&pair.s) {
                    *dj += c * sj;
                }
                mults += 2 * n;
            }
        }
        for dj in d.iter_mut() {
            *dj = -*dj;
        }
        mults
    }

    /// `d = −H r`.
    pub fn direction(&mut self, r: &[f64]) -> Vec<f64> {
        let mut d = vec![0.0; r.len()];
        self.direction_into(r, &mut d);
        d
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    /// Termination threshold on the Euclidean norm of the fixed-point residual.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// L-BFGS memory; 0 turns the method into projected gradient with
    /// backtracking.
    pub memory: usize,
    /// Cautious-update threshold `ε_d`.
    pub cautious_epsilon: f64,
    /// Initial Lipschitz estimate; probed by finite differences when absent.
    pub lipschitz: Option<f64>,
    /// `γ = gamma_factor / L`.
    pub gamma_factor: f64,
    /// `σ = sigma_factor · γ · (1 − γL)`.
    pub sigma_factor: f64,
    pub max_line_search_halvings: usize,
    pub max_lipschitz_backtracks: usize,
    /// Seed for the random probe direction of the Lipschitz estimate.
    pub seed: u64,
    /// Keep a per-iteration record of the line-search quantities.
    pub record_trace: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            tolerance: 1e-3,
            max_iterations: 200,
            memory: 10,
            cautious_epsilon: 1e-10,
            lipschitz: None,
            gamma_factor: 0.95,
            sigma_factor: 0.45,
            max_line_search_halvings: 32,
            max_lipschitz_backtracks: 64,
            seed: 0,
            record_trace: false,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0) {
            return Err(Error::config("solver tolerance must be positive"));
        }
        if self.max_iterations == 0 {
            return Err(Error::config("max_iterations must be at least 1"));
        }
        if !(self.gamma_factor > 0.0 && self.gamma_factor < 1.0) {
            return Err(Error::config("gamma_factor must lie in (0, 1)"));
        }
        if !(self.sigma_factor > 0.0 && self.sigma_factor < 0.5) {
            return Err(Error::config("sigma_factor must lie in (0, 1/2)"));
        }
        if let Some(l) = self.lipschitz {
            if !(l > 0.0) {
                return Err(Error::config("Lipschitz estimate must be positive"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExitStatus {
    Converged,
    MaxIterations,
    LineSearchFailure,
}

impl ExitStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            ExitStatus::Converged => "converged",
            ExitStatus::MaxIterations => "max-iterations",
            ExitStatus::LineSearchFailure => "line-search-failure",
        }
    }
}

/// Line-search quantities of one accepted iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    pub fbe_before: f64,
    pub fbe_after: f64,
    pub sigma: f64,
    pub residual_sq: f64,
    pub tau: f64,
    pub gamma: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverDiagnostics {
    pub iterations: usize,
    pub status: ExitStatus,
    /// `‖r‖₂` at the returned point.
    pub residual_norm: f64,
    /// `‖r‖_∞` at the returned point.
    pub residual_inf: f64,
    /// `‖r‖₂` at the initial guess.
    pub initial_residual: f64,
    pub cost: f64,
    pub cost_evals: usize,
    pub gradient_evals: usize,
    pub lipschitz_backtracks: usize,
    pub line_search_halvings: usize,
    pub fallback_steps: usize,
    pub lipschitz: f64,
    pub gamma: f64,
    /// Scalar multiplications spent on vector algebra (excludes the oracle).
    pub linalg_mults: usize,
    pub solve_time: Duration,
    pub trace: Vec<IterationRecord>,
}

impl SolverDiagnostics {
    pub fn converged(&self) -> bool {
        self.status == ExitStatus::Converged
    }

    /// Wall time per iteration (whole solve when no iteration was needed).
    pub fn average_iteration_time(&self) -> Duration {
        self.solve_time / self.iterations.max(1) as u32
    }
}

/// Result of [`PanocSolver::solve`].
#[derive(Debug, Clone)]
pub struct Solution {
    /// Projected-gradient point `T_γ(u)` of the final iterate, always feasible.
    pub u: Vec<f64>,
    pub diagnostics: SolverDiagnostics,
}

/// Reusable PANOC instance; owns the L-BFGS buffer and work vectors.
pub struct PanocSolver {
    cfg: SolverConfig,
    buffer: LbfgsBuffer,
}

struct Evaluation {
    u: Vec<f64>,
    cost: f64,
    grad: Vec<f64>,
    half: Vec<f64>,
    r: Vec<f64>,
}

impl Evaluation {
    fn new(n: usize) -> Self {
        Evaluation {
            u: vec![0.0; n],
            cost: 0.0,
            grad: vec![0.0; n],
            half: vec![0.0; n],
            r: vec![0.0; n],
        }
    }
}

impl PanocSolver {
    pub fn new(cfg: SolverConfig) -> Result<Self> {
        cfg.validate()?;
        let buffer = LbfgsBuffer::new(cfg.memory);
        Ok(PanocSolver { cfg, buffer })
    }

    pub fn config(&self) -> &SolverConfig {
        &self.cfg
    }

    /// Finite-difference estimate `‖∇φ(u+δ) − ∇φ(u)‖ / ‖δ‖` along a random
    /// direction, floored at `1e-3`.
    fn probe_lipschitz<P: Problem + ?Sized>(
        &self,
        problem: &P,
        u: &[f64],
        grad: &[f64],
        evals: &mut usize,
    ) -> Result<f64> {
        let n = u.len();
        let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.seed);
        let mut dir: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let norm = dot(&dir, &dir).sqrt().max(f64::MIN_POSITIVE);
        let step = 1e-6_f64.max(1e-6 * dot(u, u).sqrt());
        dir.iter_mut().for_each(|d| *d *= step / norm);
        let shifted: Vec<f64> = u.iter().zip(&dir).map(|(a, b)| a + b).collect();
        let mut g2 = vec![0.0; n];
        problem.cost_and_gradient(&shifted, &mut g2)?;
        *evals += 1;
        let diff: f64 = g2.iter().zip(grad).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        let l = diff / step;
        Ok(if l.is_finite() { l.max(1e-3) } else { 1e-3 })
    }

    pub fn solve<P: Problem + ?Sized>(&mut self, problem: &P, bounds: &BoxSet, u0: &[f64]) -> Result<Solution> {
        let started = Instant::now();
        let n = problem.dim();
        if u0.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: u0.len(),
            });
        }
        if bounds.dim() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: bounds.dim(),
            });
        }
        let cfg = self.cfg.clone();
        self.buffer.reset();

        let mut cur = Evaluation::new(n);
        let mut trial = Evaluation::new(n);
        let mut d = vec![0.0; n];
        let mut s = vec![0.0; n];
        let mut y = vec![0.0; n];

        let mut cost_evals = 0;
        let mut gradient_evals = 0;
        let mut mults = 0usize;

        cur.u.copy_from_slice(u0);
        cur.cost = problem.cost_and_gradient(&cur.u, &mut cur.grad)?;
        gradient_evals += 1;
        if !cur.cost.is_finite() {
            return Err(Error::config("cost is not finite at the initial guess"));
        }

        let mut lipschitz = match cfg.lipschitz {
            Some(l) => l,
            None => self.probe_lipschitz(problem, &cur.u, &cur.grad, &mut gradient_evals)?,
        };
        let mut gamma = cfg.gamma_factor / lipschitz;
        let mut sigma = cfg.sigma_factor * gamma * (1.0 - gamma * lipschitz);

        prox_grad_into(&cur.u, &cur.grad, gamma, bounds, &mut cur.half, &mut cur.r);
        mults += 2 * n;
        let initial_residual = dot(&cur.r, &cur.r).sqrt();

        let mut status = ExitStatus::MaxIterations;
        let mut iterations = 0;
        let mut lipschitz_backtracks = 0;
        let mut halvings = 0;
        let mut fallbacks = 0;
        let mut trace = Vec::new();

        'outer: for nu in 0..=cfg.max_iterations {
            iterations = nu;
            let r_sq = dot(&cur.r, &cur.r);
            mults += n;
            if r_sq.sqrt() < cfg.tolerance {
                status = ExitStatus::Converged;
                break;
            }
            if nu == cfg.max_iterations {
                break;
            }

            // Backtrack on L until the projected-gradient point satisfies the
            // quadratic upper bound.
            let mut half_cost = eval_cost(problem, &cur.half, &mut cost_evals);
            loop {
                let r_sq = dot(&cur.r, &cur.r);
                let bound = cur.cost - gamma * dot(&cur.grad, &cur.r) + 0.5 * lipschitz * gamma * gamma * r_sq;
                mults += 2 * n;
                if half_cost <= bound + UPPER_BOUND_SLACK * cur.cost.abs().max(1.0) {
                    break;
                }
                if lipschitz_backtracks >= cfg.max_lipschitz_backtracks {
                    status = ExitStatus::LineSearchFailure;
                    break 'outer;
                }
                lipschitz_backtracks += 1;
                lipschitz *= 2.0;
                gamma *= 0.5;
                sigma *= 0.5;
                self.buffer.reset();
                prox_grad_into(&cur.u, &cur.grad, gamma, bounds, &mut cur.half, &mut cur.r);
                mults += 2 * n;
                half_cost = eval_cost(problem, &cur.half, &mut cost_evals);
            }

            let r_sq = dot(&cur.r, &cur.r);
            let fbe_cur = fbe_from_residual(cur.cost, &cur.grad, &cur.r, gamma);
            let target = fbe_cur - sigma * r_sq;
            mults += 3 * n;

            if self.buffer.is_empty() {
                // no curvature information yet: the projected-gradient step
                for (di, ri) in d.iter_mut().zip(&cur.r) {
                    *di = -gamma * ri;
                }
                mults += n;
            } else {
                mults += self.buffer.direction_into(&cur.r, &mut d);
            }

            let mut tau = 1.0;
            let mut tries = 0;
            let accepted_fbe = loop {
                panoc_update_into(&cur.u, &cur.half, &cur.r, &d, gamma, tau, &mut trial.u);
                if tau != 0.0 {
                    mults += 3 * n;
                }
                gradient_evals += 1;
                let value = match problem.cost_and_gradient(&trial.u, &mut trial.grad) {
                    Ok(c) if c.is_finite() => {
                        trial.cost = c;
                        prox_grad_into(&trial.u, &trial.grad, gamma, bounds, &mut trial.half, &mut trial.r);
                        mults += 4 * n;
                        fbe_from_residual(c, &trial.grad, &trial.r, gamma)
                    }
                    _ => f64::INFINITY,
                };
                if value <= target {
                    break value;
                }
                if tau == 0.0 {
                    // The projected-gradient step decreases the envelope by
                    // construction once the upper-bound test holds; a miss here
                    // is round-off.
                    if value.is_finite() {
                        break value;
                    }
                    status = ExitStatus::LineSearchFailure;
                    break 'outer;
                }
                tries += 1;
                halvings += 1;
                if tries > cfg.max_line_search_halvings {
                    tau = 0.0;
                    fallbacks += 1;
                    self.buffer.reset();
                } else {
                    tau *= 0.5;
                }
            };

            if cfg.record_trace {
                trace.push(IterationRecord {
                    fbe_before: fbe_cur,
                    fbe_after: accepted_fbe,
                    sigma,
                    residual_sq: r_sq,
                    tau,
                    gamma,
                });
            }

            for i in 0..n {
                s[i] = trial.u[i] - cur.u[i];
                y[i] = trial.r[i] - cur.r[i];
            }
            let r_new = dot(&trial.r, &trial.r).sqrt();
            mults += 3 * n;
            self.buffer.update(&s, &y, r_new, cfg.cautious_epsilon);
            std::mem::swap(&mut cur, &mut trial);
        }

        let residual_norm = dot(&cur.r, &cur.r).sqrt();
        let diagnostics = SolverDiagnostics {
            iterations,
            status,
            residual_norm,
            residual_inf: norm_inf(&cur.r),
            initial_residual,
            cost: cur.cost,
            cost_evals,
            gradient_evals,
            lipschitz_backtracks,
            line_search_halvings: halvings,
            fallback_steps: fallbacks,
            lipschitz,
            gamma,
            linalg_mults: mults,
            solve_time: started.elapsed(),
            trace,
        };
        Ok(Solution {
            u: cur.half,
            diagnostics,
        })
    }
}

fn eval_cost<P: Problem + ?Sized>(problem: &P, u: &[f64], evals: &mut usize) -> f64 {
    *evals += 1;
    match problem.cost(u) {
        Ok(c) if c.is_finite() => c,
        _ => f64::INFINITY,
    }
}

/// One-shot convenience wrapper around [`PanocSolver`].
pub fn solve<P: Problem + ?Sized>(problem: &P, bounds: &BoxSet, u0: &[f64], cfg: &SolverConfig) -> Result<Solution> {
    PanocSolver::new(cfg.clone())?.solve(problem, bounds, u0)
}
