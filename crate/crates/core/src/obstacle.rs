//! Obstacles as open sets `{p : hⁱ(p, t) > 0 for all i}` and the smooth
//! penalty `ψ(p) = ½ ∏ max(hⁱ, 0)²` that vanishes outside them.

use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// A shape primitive contributing one or two constraint functions `h`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case", deny_unknown_fields)]
pub enum ConstraintFn {
    /// `h(p) = offset − normal·p`.
    Halfspace { normal: Vector3<f64>, offset: f64 },
    /// `h(p, t) = 1 − (p − c(t))ᵀ M (p − c(t))` with `c(t) = center + velocity·t`.
    Ellipsoid {
        center: Vector3<f64>,
        #[serde(default = "Vector3::zeros")]
        velocity: Vector3<f64>,
        matrix: Matrix3<f64>,
    },
    /// Infinite circular cylinder about a coordinate axis through `center(t)`:
    /// `h(p, t) = r² − ‖(p − c(t))⊥‖²`.
    Cylinder {
        axis: usize,
        center: Vector3<f64>,
        #[serde(default = "Vector3::zeros")]
        velocity: Vector3<f64>,
        radius: f64,
    },
    /// `lower < p[axis] < upper`, as the two affine functions
    /// `p[axis] − lower` and `upper − p[axis]`.
    AxisSlab { axis: usize, lower: f64, upper: f64 },
}

impl ConstraintFn {
    fn validate(&self) -> Result<()> {
        let finite = |v: &Vector3<f64>| v.iter().all(|c| c.is_finite());
        match self {
            ConstraintFn::Halfspace { normal, offset } => {
                if !finite(normal) || !offset.is_finite() || normal.norm() == 0.0 {
                    return Err(Error::config("halfspace needs a finite, nonzero normal"));
                }
            }
            ConstraintFn::Ellipsoid {
                center,
                velocity,
                matrix,
            } => {
                if !finite(center) || !finite(velocity) {
                    return Err(Error::config("ellipsoid center/velocity must be finite"));
                }
                if (matrix - matrix.transpose()).amax() > 1e-12 * (1.0 + matrix.amax()) {
                    return Err(Error::config("ellipsoid matrix must be symmetric"));
                }
                let eig = SymmetricEigen::new(*matrix);
                if eig.eigenvalues.iter().any(|&l| l < -1e-12) {
                    return Err(Error::config("ellipsoid matrix must be positive semidefinite"));
                }
            }
            ConstraintFn::Cylinder {
                axis,
                center,
                velocity,
                radius,
            } => {
                if *axis > 2 {
                    return Err(Error::config("cylinder axis must be 0, 1 or 2"));
                }
                if !finite(center) || !finite(velocity) || !(*radius > 0.0) {
                    return Err(Error::config("cylinder needs a finite center and positive radius"));
                }
            }
            ConstraintFn::AxisSlab { axis, lower, upper } => {
                if *axis > 2 {
                    return Err(Error::config("slab axis must be 0, 1 or 2"));
                }
                if !(lower < upper) {
                    return Err(Error::config("slab needs lower < upper"));
                }
            }
        }
        Ok(())
    }

    /// Calls `f(h, ∇h)` for every constraint function of this primitive.
    #[inline]
    pub fn for_each(&self, p: &Vector3<f64>, t: f64, mut f: impl FnMut(f64, Vector3<f64>)) {
        match self {
            ConstraintFn::Halfspace { normal, offset } => f(offset - normal.dot(p), -normal),
            ConstraintFn::Ellipsoid {
                center,
                velocity,
                matrix,
            } => {
                let d = p - (center + velocity * t);
                let md = matrix * d;
                f(1.0 - d.dot(&md), -2.0 * md)
            }
            ConstraintFn::Cylinder {
                axis,
                center,
                velocity,
                radius,
            } => {
                let mut d = p - (center + velocity * t);
                d[*axis] = 0.0;
                f(radius * radius - d.norm_squared(), -2.0 * d)
            }
            ConstraintFn::AxisSlab { axis, lower, upper } => {
                let mut e = Vector3::zeros();
                e[*axis] = 1.0;
                f(p[*axis] - lower, e);
                f(upper - p[*axis], -e);
            }
        }
    }

    /// Number of scalar constraint functions contributed.
    pub fn count(&self) -> usize {
        match self {
            ConstraintFn::AxisSlab { .. } => 2,
            _ => 1,
        }
    }

    /// Minkowski sum with a ball of `radius`. Exact for every primitive except
    /// non-spherical ellipsoids, which get the tight outer bound obtained by
    /// growing each semi-axis by `radius`.
    fn enlarged(&self, radius: f64) -> ConstraintFn {
        match self {
            ConstraintFn::Halfspace { normal, offset } => ConstraintFn::Halfspace {
                normal: *normal,
                offset: offset + radius * normal.norm(),
            },
            ConstraintFn::Ellipsoid {
                center,
                velocity,
                matrix,
            } => {
                let eig = SymmetricEigen::new(*matrix);
                let grown = eig.eigenvalues.map(|l| {
                    if l > 0.0 {
                        let semi_axis = 1.0 / l.sqrt() + radius;
                        1.0 / (semi_axis * semi_axis)
                    } else {
                        0.0
                    }
                });
                let q = eig.eigenvectors;
                let m = q * Matrix3::from_diagonal(&grown) * q.transpose();
                ConstraintFn::Ellipsoid {
                    center: *center,
                    velocity: *velocity,
                    matrix: 0.5 * (m + m.transpose()),
                }
            }
            ConstraintFn::Cylinder {
                axis,
                center,
                velocity,
                radius: r,
            } => ConstraintFn::Cylinder {
                axis: *axis,
                center: *center,
                velocity: *velocity,
                radius: r + radius,
            },
            ConstraintFn::AxisSlab { axis, lower, upper } => ConstraintFn::AxisSlab {
                axis: *axis,
                lower: lower - radius,
                upper: upper + radius,
            },
        }
    }

    /// Distance from an interior point to this primitive's boundary (a lower
    /// bound for non-spherical ellipsoids). Negative outside.
    fn depth(&self, p: &Vector3<f64>, t: f64) -> f64 {
        match self {
            ConstraintFn::Halfspace { normal, offset } => (offset - normal.dot(p)) / normal.norm(),
            ConstraintFn::Ellipsoid {
                center,
                velocity,
                matrix,
            } => {
                let d = p - (center + velocity * t);
                let q = d.dot(&(matrix * d)).max(0.0);
                let lmax = SymmetricEigen::new(*matrix).eigenvalues.max();
                if lmax <= 0.0 {
                    f64::INFINITY
                } else {
                    (1.0 - q.sqrt()) / lmax.sqrt()
                }
            }
            ConstraintFn::Cylinder {
                axis,
                center,
                velocity,
                radius,
            } => {
                let mut d = p - (center + velocity * t);
                d[*axis] = 0.0;
                radius - d.norm()
            }
            ConstraintFn::AxisSlab { axis, lower, upper } => (p[*axis] - lower).min(upper - p[*axis]),
        }
    }
}

/// One obstacle `Θ(t)` with its stage and terminal penalty weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObstacleSpec {
    pub constraints: Vec<ConstraintFn>,
    pub weight: f64,
    pub terminal_weight: f64,
}

impl ObstacleSpec {
    pub fn new(constraints: Vec<ConstraintFn>, weight: f64, terminal_weight: f64) -> Result<Self> {
        let spec = ObstacleSpec {
            constraints,
            weight,
            terminal_weight,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.constraints.is_empty() {
            return Err(Error::config("an obstacle needs at least one constraint function"));
        }
        if !(self.weight > 0.0 && self.terminal_weight > 0.0) {
            return Err(Error::config("obstacle weights must be positive"));
        }
        self.constraints.iter().try_for_each(ConstraintFn::validate)
    }

    /// Upright cylinder about the z axis standing on `z = base`, matching the
    /// three-function description `r² − px² − py²`, `pz − base`, `top − pz`.
    pub fn upright_cylinder(
        center_xy: (f64, f64),
        radius: f64,
        base: f64,
        top: f64,
        weight: f64,
        terminal_weight: f64,
    ) -> Result<Self> {
        ObstacleSpec::new(
            vec![
                ConstraintFn::Cylinder {
                    axis: 2,
                    center: Vector3::new(center_xy.0, center_xy.1, 0.0),
                    velocity: Vector3::zeros(),
                    radius,
                },
                ConstraintFn::AxisSlab {
                    axis: 2,
                    lower: base,
                    upper: top,
                },
            ],
            weight,
            terminal_weight,
        )
    }

    /// Number of scalar constraint functions `m`.
    pub fn constraint_count(&self) -> usize {
        self.constraints.iter().map(ConstraintFn::count).sum()
    }

    /// Strict membership: every `hⁱ(p, t) > 0`.
    pub fn contains(&self, p: &Vector3<f64>, t: f64) -> bool {
        let mut inside = true;
        for c in &self.constraints {
            c.for_each(p, t, |h, _| inside &= h > 0.0);
        }
        inside
    }

    /// Penalty value `ψ(p) = ½ ∏ max(hⁱ, 0)²`.
    pub fn psi(&self, p: &Vector3<f64>, t: f64) -> f64 {
        let mut prod = 1.0;
        for c in &self.constraints {
            c.for_each(p, t, |h, _| {
                let hp = h.max(0.0);
                prod *= hp * hp;
            });
        }
        0.5 * prod
    }

    /// Gradient of [`psi`](Self::psi). Zero outside the open set.
    pub fn grad_psi(&self, p: &Vector3<f64>, t: f64) -> Vector3<f64> {
        self.psi_and_grad(p, t).1
    }

    /// `ψ` and `∇ψ` in one pass over the constraint functions. Inside the set
    /// every factor is positive and `∇ψ = 2ψ Σᵢ ∇hⁱ / hⁱ`.
    pub fn psi_and_grad(&self, p: &Vector3<f64>, t: f64) -> (f64, Vector3<f64>) {
        let mut prod = 1.0;
        let mut sum = Vector3::zeros();
        let mut inside = true;
        for c in &self.constraints {
            c.for_each(p, t, |h, grad| {
                if h > 0.0 {
                    prod *= h * h;
                    sum += grad / h;
                } else {
                    inside = false;
                }
            });
        }
        if inside {
            (0.5 * prod, sum * prod)
        } else {
            (0.0, Vector3::zeros())
        }
    }

    /// Returns a copy with every primitive inflated by `radius`.
    pub fn enlarge(&self, radius: f64) -> Result<ObstacleSpec> {
        if !(radius >= 0.0) || !radius.is_finite() {
            return Err(Error::config(format!("enlargement radius must be >= 0, got {radius}")));
        }
        if radius == 0.0 {
            return Ok(self.clone());
        }
        Ok(ObstacleSpec {
            constraints: self.constraints.iter().map(|c| c.enlarged(radius)).collect(),
            weight: self.weight,
            terminal_weight: self.terminal_weight,
        })
    }

    /// How far `p` lies inside the set (0 when outside). Exact for halfspaces,
    /// cylinders, slabs and spheres.
    pub fn penetration(&self, p: &Vector3<f64>, t: f64) -> f64 {
        if !self.contains(p, t) {
            return 0.0;
        }
        self.constraints
            .iter()
            .map(|c| c.depth(p, t))
            .fold(f64::INFINITY, f64::min)
            .max(0.0)
    }

    /// Distance from `p` to the axis of the first cylinder primitive, if any.
    pub fn distance_to_axis(&self, p: &Vector3<f64>, t: f64) -> Option<f64> {
        self.constraints.iter().find_map(|c| match c {
            ConstraintFn::Cylinder {
                axis, center, velocity, ..
            } => {
                let mut d = p - (center + velocity * t);
                d[*axis] = 0.0;
                Some(d.norm())
            }
            _ => None,
        })
    }
}

/// Points on the vehicle that must stay out of every enlarged obstacle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CornerPointSet {
    /// Offsets from the vehicle center, applied in the world frame.
    pub offsets: Vec<Vector3<f64>>,
    /// Radius of the ball enclosing the body around each point (m).
    pub ball_radius: f64,
    /// Extra enlargement absorbing soft-constraint violations (m).
    pub margin: f64,
}

impl Default for CornerPointSet {
    fn default() -> Self {
        CornerPointSet {
            offsets: vec![Vector3::zeros()],
            ball_radius: 0.24,
            margin: 0.06,
        }
    }
}

impl CornerPointSet {
    pub fn validate(&self) -> Result<()> {
        if self.offsets.is_empty() {
            return Err(Error::config("at least one corner point is required"));
        }
        if !(self.ball_radius > 0.0) || !(self.margin >= 0.0) {
            return Err(Error::config("ball radius must be positive and margin non-negative"));
        }
        Ok(())
    }

    /// Total inflation applied to physical obstacles.
    pub fn enlargement(&self) -> f64 {
        self.ball_radius + self.margin
    }

    #[inline]
    pub fn point(&self, index: usize, p: &Vector3<f64>) -> Vector3<f64> {
        p + self.offsets[index]
    }

    pub fn len(&self) -> usize {
        self.offsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.offsets.is_empty()
    }
}
