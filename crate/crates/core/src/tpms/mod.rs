//! Sheet-network gyroid unit cell geometry.
//!
//! The base surface is the zero set of the gyroid level function evaluated at
//! `2πx/a`, so one period spans the cell size `a`. A sheet of wall thickness
//! `τ` is the set of points within `τ/2` of the base surface; the signed
//! distance `φ = τ/2 − D` is positive inside the wall.

mod distance;
mod field;
mod interp;
pub mod isosurface;
mod pore;

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

pub use distance::{distance_to_base, ClosestPoint, DistanceSolver};
pub use field::UnitCellField;
pub use interp::PeriodicCubic;
pub use pore::{PoreSearch, PoreSearchOptions};

use crate::Point3;

/// Implicit TPMS level function in scaled coordinates (period 2π).
pub trait LevelFunction: Sync {
    fn value(&self, p: &Point3) -> f64;
    fn gradient(&self, p: &Point3) -> Point3;
    fn hessian(&self, p: &Point3) -> [[f64; 3]; 3];
}

/// `sin x cos y + sin y cos z + sin z cos x`.
#[derive(Debug, Clone, Copy, Default)]
pub struct Gyroid;

impl LevelFunction for Gyroid {
    fn value(&self, p: &Point3) -> f64 {
        let [x, y, z] = *p;
        x.sin() * y.cos() + y.sin() * z.cos() + z.sin() * x.cos()
    }

    fn gradient(&self, p: &Point3) -> Point3 {
        let (sx, cx) = p[0].sin_cos();
        let (sy, cy) = p[1].sin_cos();
        let (sz, cz) = p[2].sin_cos();
        [cx * cy - sz * sx, -sx * sy + cy * cz, -sy * sz + cz * cx]
    }

    fn hessian(&self, p: &Point3) -> [[f64; 3]; 3] {
        let (sx, cx) = p[0].sin_cos();
        let (sy, cy) = p[1].sin_cos();
        let (sz, cz) = p[2].sin_cos();
        let xx = -sx * cy - sz * cx;
        let yy = -sx * cy - sy * cz;
        let zz = -sy * cz - sz * cx;
        let xy = -cx * sy;
        let yz = -cy * sz;
        let xz = -sx * cz;
        [[xx, xy, xz], [xy, yy, yz], [xz, yz, zz]]
    }
}

/// Gyroid level function at a point in millimetres for cell size `a`.
pub fn gyroid_level(x: &Point3, cell_size: f64) -> f64 {
    Gyroid.value(&to_scaled(x, cell_size))
}

pub(crate) fn to_scaled(x: &Point3, cell_size: f64) -> Point3 {
    let s = 2.0 * PI / cell_size;
    [x[0] * s, x[1] * s, x[2] * s]
}

/// `φ = τ/2 − D`: positive strictly inside a wall of total thickness `τ`.
pub fn signed_distance(distance: f64, thickness: f64) -> f64 {
    0.5 * thickness - distance
}

/// Signed distance of the point `x` for a sheet of thickness `tau`.
pub fn signed_distance_at(x: &Point3, thickness: f64, cell_size: f64) -> crate::Result<f64> {
    Ok(signed_distance(distance_to_base(x, cell_size)?, thickness))
}

/// Geometry projection parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProjectionParams {
    /// Sampling-window radius r (mm).
    pub radius: f64,
    /// Heaviside transition width η, in (0, 1].
    pub eta: f64,
    /// Stiffness penalization exponent p ≥ 1.
    pub penalty: f64,
}

impl ProjectionParams {
    /// Window radius of one voxel diagonal, η = 1, p = 3.
    pub fn for_grid(resolution: usize, cell_size: f64) -> Self {
        ProjectionParams {
            radius: cell_size / resolution as f64 * 3f64.sqrt(),
            eta: 1.0,
            penalty: 3.0,
        }
    }

    pub fn validate(&self) -> crate::Result<()> {
        if !(self.radius > 0.0) || !(self.eta > 0.0 && self.eta <= 1.0) || !(self.penalty >= 1.0) {
            return Err(crate::Error::Config(format!(
                "invalid projection parameters {self:?}: need r > 0, 0 < η ≤ 1, p ≥ 1"
            )));
        }
        Ok(())
    }
}

/// Smooth Heaviside `½ + y/2η + sin(πy/η)/2π`, clamped to 0 and 1 outside
/// `|y| ≤ η`.
pub fn smooth_heaviside(y: f64, eta: f64) -> f64 {
    if y <= -eta {
        0.0
    } else if y >= eta {
        1.0
    } else {
        0.5 + y / (2.0 * eta) + (PI * y / eta).sin() / (2.0 * PI)
    }
}

pub fn smooth_heaviside_derivative(y: f64, eta: f64) -> f64 {
    if y.abs() >= eta {
        0.0
    } else {
        (1.0 + (PI * y / eta).cos()) / (2.0 * eta)
    }
}

/// Pseudo-density of an element whose centroid has signed distance `phi`.
pub fn project_density(phi: f64, params: &ProjectionParams) -> f64 {
    let y = phi / params.radius;
    if y < -1.0 {
        0.0
    } else if y > 1.0 {
        1.0
    } else {
        smooth_heaviside(y, params.eta)
    }
}

/// d(pseudo-density)/dφ.
pub fn project_density_derivative(phi: f64, params: &ProjectionParams) -> f64 {
    let y = phi / params.radius;
    if y.abs() > 1.0 {
        0.0
    } else {
        smooth_heaviside_derivative(y, params.eta) / params.radius
    }
}

/// Specific surface area with a flag raised when the void has closed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfaceArea {
    /// mm²/mm³.
    pub value: f64,
    pub void_closed: bool,
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn level_function_closed_forms() {
        let a = 2.5;
        assert_eq!(gyroid_level(&[0.0, 0.0, 0.0], a), 0.0);
        assert_relative_eq!(gyroid_level(&[a / 4.0, 0.0, 0.0], a), 1.0, epsilon = 1e-15);
        assert_relative_eq!(gyroid_level(&[a / 4.0, a / 2.0, 0.0], a), -1.0, epsilon = 1e-15);
    }

    #[test]
    fn signed_distance_arithmetic() {
        // on the base surface the whole half-thickness is inside the wall
        assert_relative_eq!(signed_distance(0.0, 0.3), 0.15);
        assert_relative_eq!(signed_distance(0.5, 0.3), -0.35);
        assert_relative_eq!(signed_distance(0.5, 0.6), -0.2, epsilon = 1e-15);
    }

    #[test]
    fn projection_window() {
        let p = ProjectionParams {
            radius: 0.1,
            eta: 1.0,
            penalty: 3.0,
        };
        assert_eq!(project_density(-0.2, &p), 0.0);
        assert_eq!(project_density(0.0, &p), 0.5);
        assert_eq!(project_density(0.2, &p), 1.0);
        // continuous at the window edges
        assert_relative_eq!(project_density(0.1 - 1e-12, &p), 1.0, epsilon = 1e-9);
        assert_relative_eq!(project_density(-0.1 + 1e-12, &p), 0.0, epsilon = 1e-9);
    }

    #[test]
    fn narrow_transition_is_clamped() {
        let p = ProjectionParams {
            radius: 1.0,
            eta: 0.25,
            penalty: 3.0,
        };
        assert_eq!(project_density(0.3, &p), 1.0);
        assert_eq!(project_density(-0.3, &p), 0.0);
        assert_relative_eq!(project_density(0.25, &p), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn invalid_params_rejected() {
        let bad = ProjectionParams {
            radius: 0.1,
            eta: 1.5,
            penalty: 3.0,
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn gradient_and_hessian_match_finite_differences() {
        let p = [0.3, 1.1, -2.0];
        let g = Gyroid.gradient(&p);
        let h = Gyroid.hessian(&p);
        let e = 1e-6;
        for k in 0..3 {
            let mut pp = p;
            let mut pm = p;
            pp[k] += e;
            pm[k] -= e;
            let fd = (Gyroid.value(&pp) - Gyroid.value(&pm)) / (2.0 * e);
            assert_relative_eq!(g[k], fd, epsilon = 1e-9);
            let gp = Gyroid.gradient(&pp);
            let gm = Gyroid.gradient(&pm);
            for l in 0..3 {
                assert_relative_eq!(h[l][k], (gp[l] - gm[l]) / (2.0 * e), epsilon = 1e-8);
            }
        }
    }

    proptest! {
        #[test]
        fn level_function_is_periodic(x in -10.0f64..10.0, y in -10.0f64..10.0, z in -10.0f64..10.0, axis in 0usize..3) {
            let a = 2.5;
            let mut shifted = [x, y, z];
            shifted[axis] += a;
            prop_assert!((gyroid_level(&[x, y, z], a) - gyroid_level(&shifted, a)).abs() < 1e-12);
        }

        #[test]
        fn projection_monotone_and_differentiable(phi in -0.3f64..0.3, dphi in 0.0f64..0.1) {
            let p = ProjectionParams { radius: 0.1, eta: 1.0, penalty: 3.0 };
            prop_assert!(project_density(phi + dphi, &p) >= project_density(phi, &p));
            let y = phi / p.radius;
            if y.abs() < 0.99 {
                let h = 1e-6;
                let fd = (project_density(phi + h, &p) - project_density(phi - h, &p)) / (2.0 * h);
                let an = project_density_derivative(phi, &p);
                prop_assert!((fd - an).abs() <= 1e-6 * an.abs().max(1e-3));
            }
        }
    }
}
