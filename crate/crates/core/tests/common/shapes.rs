use mav_nmpc::obstacle::{ConstraintFn, ObstacleSpec};
use nalgebra::{Matrix3, Vector3};

pub const RADIUS: f64 = 0.75;
pub const TOP: f64 = 2.3;

/// The enlarged obstacle of the traversal experiment.
pub fn cylinder() -> ObstacleSpec {
    ObstacleSpec::upright_cylinder((0.0, 0.0), RADIUS, 0.0, TOP, 1e4, 1e4).unwrap()
}

/// Closed form of the penalty for the upright cylinder, written out directly.
pub fn cylinder_oracle(p: &Vector3<f64>) -> f64 {
    let h1 = RADIUS * RADIUS - p.x * p.x - p.y * p.y;
    let h2 = p.z;
    let h3 = TOP - p.z;
    if h1 > 0.0 && h2 > 0.0 && h3 > 0.0 {
        0.5 * (h1 * h2 * h3).powi(2)
    } else {
        0.0
    }
}

pub fn tilted_ellipsoid() -> ObstacleSpec {
    let (c, s) = (0.6_f64.cos(), 0.6_f64.sin());
    let rot = Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0);
    let m = rot * Matrix3::from_diagonal(&Vector3::new(1.0 / 0.64, 1.0 / 0.09, 1.0 / 0.25)) * rot.transpose();
    ObstacleSpec::new(
        vec![ConstraintFn::Ellipsoid {
            center: Vector3::new(0.2, -0.1, 1.0),
            velocity: Vector3::new(0.1, 0.05, 0.0),
            matrix: m,
        }],
        1.0,
        1.0,
    )
    .unwrap()
}

/// Axis-aligned box `[-0.5, 0.5] × [-0.3, 0.7] × [0.2, 1.4]` built from six halfspaces.
pub fn halfspace_box() -> ObstacleSpec {
    let hs = |n: [f64; 3], o: f64| ConstraintFn::Halfspace {
        normal: Vector3::from(n),
        offset: o,
    };
    ObstacleSpec::new(
        vec![
            hs([1.0, 0.0, 0.0], 0.5),
            hs([-1.0, 0.0, 0.0], 0.5),
            hs([0.0, 1.0, 0.0], 0.7),
            hs([0.0, -1.0, 0.0], 0.3),
            hs([0.0, 0.0, 1.0], 1.4),
            hs([0.0, 0.0, -1.0], -0.2),
        ],
        1.0,
        1.0,
    )
    .unwrap()
}

pub fn shapes() -> Vec<(&'static str, ObstacleSpec)> {
    vec![
        ("cylinder", cylinder()),
        ("ellipsoid", tilted_ellipsoid()),
        ("halfspace-box", halfspace_box()),
    ]
}

pub fn grid(n: usize, lo: [f64; 3], hi: [f64; 3]) -> impl Iterator<Item = Vector3<f64>> {
    (0..n * n * n).map(move |idx| {
        let (i, j, k) = (idx / (n * n), (idx / n) % n, idx % n);
        let f = |a: usize, d: usize| lo[d] + (hi[d] - lo[d]) * a as f64 / (n - 1) as f64;
        Vector3::new(f(i, 0), f(j, 1), f(k, 2))
    })
}

/// Smallest `|hⁱ|/‖∇hⁱ‖` over the constraint functions: an estimate of the
/// distance to the nearest boundary surface.
pub fn distance_to_kink(shape: &ObstacleSpec, p: &Vector3<f64>, t: f64) -> f64 {
    let mut d = f64::INFINITY;
    for c in &shape.constraints {
        c.for_each(p, t, |h, g| d = d.min(h.abs() / g.norm().max(1e-300)));
    }
    d
}

pub fn finite_difference(shape: &ObstacleSpec, p: &Vector3<f64>, t: f64, h: f64) -> Vector3<f64> {
    let mut g = Vector3::zeros();
    for i in 0..3 {
        let at = |s: f64| {
            let mut q = *p;
            q[i] += s;
            shape.psi(&q, t)
        };
        g[i] = (8.0 * (at(h) - at(-h)) - (at(2.0 * h) - at(-2.0 * h))) / (12.0 * h);
    }
    g
}
