#![allow(dead_code)]

pub mod shapes;

use mav_nmpc::panoc::{BoxSet, Problem};
use mav_nmpc::Result;

/// `½(u−z)ᵀH(u−z) + cᵀ(u−z)` with a dense symmetric `H`.
///
/// Zoo problems are expanded about their analytic solution `z` so that the
/// optimal value is exactly zero and cost differences near the solution are
/// not lost to round-off in a large constant.
pub struct Quadratic {
    pub h: Vec<Vec<f64>>,
    pub c: Vec<f64>,
    pub center: Vec<f64>,
}

impl Quadratic {
    fn shifted(&self, u: &[f64]) -> Vec<f64> {
        u.iter().zip(&self.center).map(|(a, b)| a - b).collect()
    }
}

impl Problem for Quadratic {
    fn dim(&self) -> usize {
        self.c.len()
    }

    fn cost(&self, u: &[f64]) -> Result<f64> {
        let w = self.shifted(u);
        let mut v = 0.0;
        for i in 0..w.len() {
            let hw: f64 = (0..w.len()).map(|j| self.h[i][j] * w[j]).sum();
            v += 0.5 * w[i] * hw + self.c[i] * w[i];
        }
        Ok(v)
    }

    fn cost_and_gradient(&self, u: &[f64], grad: &mut [f64]) -> Result<f64> {
        let w = self.shifted(u);
        for (i, gi) in grad.iter_mut().enumerate() {
            *gi = (0..w.len()).map(|j| self.h[i][j] * w[j]).sum::<f64>() + self.c[i];
        }
        self.cost(u)
    }
}

pub struct Rosenbrock;

impl Problem for Rosenbrock {
    fn dim(&self) -> usize {
        2
    }

    fn cost(&self, u: &[f64]) -> Result<f64> {
        Ok((1.0 - u[0]).powi(2) + 100.0 * (u[1] - u[0] * u[0]).powi(2))
    }

    fn cost_and_gradient(&self, u: &[f64], grad: &mut [f64]) -> Result<f64> {
        let w = u[1] - u[0] * u[0];
        grad[0] = -2.0 * (1.0 - u[0]) - 400.0 * u[0] * w;
        grad[1] = 200.0 * w;
        self.cost(u)
    }
}

pub struct ZooCase {
    pub name: &'static str,
    pub problem: Box<dyn Problem>,
    pub bounds: BoxSet,
    pub start: Vec<f64>,
    pub solution: Vec<f64>,
}

/// Two-dimensional coupled quadratic `½uᵀHu + (−2, −4)ᵀu` over `[−1, 1]²`.
/// Active-set enumeration: with `u₁ = 1` fixed, `4u₀ + 1 − 2 = 0` gives
/// `u₀ = 1/4`, and the gradient on `u₁` is `u₀ + 2u₁ − 4 = −1.75`, pointing
/// out of the box. Written about that solution.
pub fn qp2() -> ZooCase {
    let h = vec![vec![4.0, 1.0], vec![1.0, 2.0]];
    let solution = vec![0.25, 1.0];
    let c = vec![
        h[0][0] * solution[0] + h[0][1] * solution[1] - 2.0,
        h[1][0] * solution[0] + h[1][1] * solution[1] - 4.0,
    ];
    assert_eq!(c, vec![0.0, -1.75]);
    ZooCase {
        name: "box-qp-2",
        problem: Box::new(Quadratic {
            h,
            c,
            center: solution.clone(),
        }),
        bounds: BoxSet::new(vec![-1.0, -1.0], vec![1.0, 1.0]).unwrap(),
        start: vec![-1.0, 0.5],
        solution,
    }
}

/// Separable quadratic `½Σ dᵢ(uᵢ − tᵢ)²` in 50 dimensions with curvatures
/// spread over two decades; the minimizer is the clamp of `t`.
pub fn qp50() -> ZooCase {
    let n = 50;
    let diag: Vec<f64> = (0..n).map(|i| 10f64.powf(2.0 * i as f64 / (n - 1) as f64)).collect();
    let target: Vec<f64> = (0..n).map(|i| 2.0 * ((i as f64) * 0.7).sin()).collect();
    let lower = vec![-1.0; n];
    let upper: Vec<f64> = (0..n).map(|i| if i % 3 == 0 { 0.5 } else { 1.5 }).collect();
    let solution: Vec<f64> = (0..n).map(|i| target[i].clamp(lower[i], upper[i])).collect();
    let mut h = vec![vec![0.0; n]; n];
    for i in 0..n {
        h[i][i] = diag[i];
    }
    let c: Vec<f64> = (0..n).map(|i| diag[i] * (solution[i] - target[i])).collect();
    ZooCase {
        name: "box-qp-50",
        problem: Box::new(Quadratic {
            h,
            c,
            center: solution.clone(),
        }),
        bounds: BoxSet::new(lower, upper).unwrap(),
        start: vec![0.0; n],
        solution,
    }
}

pub fn rosenbrock() -> ZooCase {
    ZooCase {
        name: "rosenbrock",
        problem: Box::new(Rosenbrock),
        bounds: BoxSet::new(vec![-2.0, -2.0], vec![2.0, 3.0]).unwrap(),
        start: vec![-1.2, 1.0],
        solution: vec![1.0, 1.0],
    }
}

pub fn zoo() -> Vec<ZooCase> {
    vec![qp2(), qp50(), rosenbrock()]
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}
