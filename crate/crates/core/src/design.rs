//! Wall thickness field on a regular grid of control points.

use serde::{Deserialize, Serialize};

use crate::mech::{Domain, HexMesh};
use crate::surrogate::{PropertySurrogate, Scalar};
use crate::{Error, Point3, Result};

/// Axis-aligned grid of thickness control points (mm).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlGrid {
    pub origin: Point3,
    pub spacing: [f64; 3],
    pub dims: [usize; 3],
    pub tau_min: f64,
    pub tau_max: f64,
}

/// Nonzero interpolation weights of at most eight control points.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Weights {
    len: usize,
    index: [usize; 8],
    weight: [f64; 8],
}

impl Weights {
    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.index[..self.len].iter().copied().zip(self.weight[..self.len].iter().copied())
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn apply(&self, z: &[f64]) -> f64 {
        self.iter().map(|(i, w)| w * z[i]).sum()
    }
}

impl ControlGrid {
    /// Smallest grid with the given spacing covering `region`.
    pub fn covering(min: Point3, max: Point3, target_spacing: f64, tau_min: f64, tau_max: f64) -> Result<Self> {
        let mut dims = [0; 3];
        let mut spacing = [0.0; 3];
        for d in 0..3 {
            let len = max[d] - min[d];
            if !(len > 0.0) {
                return Err(Error::Config("control grid region must have positive extent".into()));
            }
            let cells = (len / target_spacing).round().max(1.0) as usize;
            dims[d] = cells + 1;
            spacing[d] = len / cells as f64;
        }
        let g = ControlGrid {
            origin: min,
            spacing,
            dims,
            tau_min,
            tau_max,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dims.iter().any(|&n| n < 2) {
            return Err(Error::Config("control grid needs at least 2 points per axis".into()));
        }
        if self.spacing.iter().any(|&h| !(h > 0.0)) {
            return Err(Error::Config("control grid spacing must be positive".into()));
        }
        if !(self.tau_min > 0.0 && self.tau_max > self.tau_min) {
            return Err(Error::Config(format!(
                "thickness bounds [{}, {}] mm are invalid",
                self.tau_min, self.tau_max
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    pub fn point(&self, index: usize) -> Point3 {
        let i = index % self.dims[0];
        let j = (index / self.dims[0]) % self.dims[1];
        let k = index / (self.dims[0] * self.dims[1]);
        [
            self.origin[0] + i as f64 * self.spacing[0],
            self.origin[1] + j as f64 * self.spacing[1],
            self.origin[2] + k as f64 * self.spacing[2],
        ]
    }

    /// Trilinear weights at `x`; these are also dτ/dz.
    pub fn weights(&self, x: &Point3) -> Result<Weights> {
        let mut cell = [0usize; 3];
        let mut frac = [0.0; 3];
        for d in 0..3 {
            let s = (x[d] - self.origin[d]) / self.spacing[d];
            let n = (self.dims[d] - 1) as f64;
            let tol = 1e-9 * n.max(1.0);
            if !(s >= -tol && s <= n + tol) {
                return Err(Error::Config(format!(
                    "point {x:?} lies outside the control grid box along axis {d}"
                )));
            }
            let s = s.clamp(0.0, n);
            let c = (s.floor() as usize).min(self.dims[d] - 2);
            cell[d] = c;
            frac[d] = s - c as f64;
        }
        let mut w = Weights {
            len: 0,
            index: [0; 8],
            weight: [0.0; 8],
        };
        for corner in 0..8 {
            let o = [corner & 1, (corner >> 1) & 1, (corner >> 2) & 1];
            let mut weight = 1.0;
            for d in 0..3 {
                weight *= if o[d] == 1 { frac[d] } else { 1.0 - frac[d] };
            }
            if weight != 0.0 {
                w.index[w.len] = self.index(cell[0] + o[0], cell[1] + o[1], cell[2] + o[2]);
                w.weight[w.len] = weight;
                w.len += 1;
            }
        }
        Ok(w)
    }

    pub fn thickness_at(&self, x: &Point3, z: &[f64]) -> Result<f64> {
        Ok(self.weights(x)?.apply(z))
    }

    pub fn uniform(&self, tau: f64) -> Vec<f64> {
        vec![tau; self.len()]
    }

    /// Whether every entry lies within the thickness bounds.
    pub fn check_bounds(&self, z: &[f64]) -> Result<()> {
        if z.len() != self.len() {
            return Err(Error::Config(format!("{} design values for {} control points", z.len(), self.len())));
        }
        if let Some(&v) = z.iter().find(|&&v| !(v >= self.tau_min && v <= self.tau_max)) {
            return Err(Error::OutOfDomain {
                quantity: "control point thickness",
                value: v,
                lo: self.tau_min,
                hi: self.tau_max,
            });
        }
        Ok(())
    }
}

/// Interpolation from control points to design element centroids.
#[derive(Debug, Clone)]
pub struct DesignMap {
    grid: ControlGrid,
    element_count: usize,
    elements: Vec<usize>,
    weights: Vec<Weights>,
    volumes: Vec<f64>,
    active: Vec<bool>,
}

impl DesignMap {
    pub fn new(grid: ControlGrid, mesh: &HexMesh) -> Result<Self> {
        grid.validate()?;
        let elements = mesh.elements_in(Domain::Design);
        if elements.is_empty() {
            return Err(Error::Config("mesh has no design elements".into()));
        }
        let weights = elements
            .iter()
            .map(|&e| grid.weights(&mesh.centroid(e)))
            .collect::<Result<Vec<_>>>()?;
        let mut active = vec![false; grid.len()];
        for w in &weights {
            for (i, _) in w.iter() {
                active[i] = true;
            }
        }
        Ok(DesignMap {
            volumes: elements.iter().map(|&e| mesh.volume(e)).collect(),
            element_count: mesh.element_count(),
            grid,
            elements,
            weights,
            active,
        })
    }

    pub fn grid(&self) -> &ControlGrid {
        &self.grid
    }

    pub fn elements(&self) -> &[usize] {
        &self.elements
    }

    pub fn weights(&self) -> &[Weights] {
        &self.weights
    }

    /// Control points influencing at least one design element.
    pub fn active(&self) -> &[bool] {
        &self.active
    }

    pub fn active_indices(&self) -> Vec<usize> {
        (0..self.active.len()).filter(|&i| self.active[i]).collect()
    }

    pub fn design_volume(&self) -> f64 {
        self.volumes.iter().sum()
    }

    /// Inactive points are pinned to τ_min.
    pub fn normalize(&self, z: &mut [f64]) {
        for (v, &a) in z.iter_mut().zip(&self.active) {
            if !a {
                *v = self.grid.tau_min;
            }
        }
    }

    /// Thickness per mesh element; zero outside the design region.
    pub fn element_thickness(&self, z: &[f64]) -> Vec<f64> {
        let mut tau = vec![0.0; self.element_count];
        for (&e, w) in self.elements.iter().zip(&self.weights) {
            tau[e] = w.apply(z);
        }
        tau
    }

    /// `V_f = Σ (1 − ξ(τ_e)) V_e / V_Ωd` and its gradient with respect to `z`.
    pub fn volume_fraction(&self, z: &[f64], surrogate: &PropertySurrogate) -> Result<(f64, Vec<f64>)> {
        let total = self.design_volume();
        let mut vf = 0.0;
        let mut grad = vec![0.0; z.len()];
        for (k, w) in self.weights.iter().enumerate() {
            let tau = w.apply(z);
            let (xi, dxi) = surrogate.eval_scalar(Scalar::Porosity, tau)?;
            let v = self.volumes[k] / total;
            vf += (1.0 - xi) * v;
            for (i, wi) in w.iter() {
                grad[i] -= dxi * wi * v;
            }
        }
        Ok((vf, grad))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn grid() -> ControlGrid {
        ControlGrid {
            origin: [1.0, -2.0, 0.5],
            spacing: [2.0, 1.5, 3.0],
            dims: [3, 4, 2],
            tau_min: 0.3,
            tau_max: 0.975,
        }
    }

    fn field(g: &ControlGrid) -> Vec<f64> {
        (0..g.len()).map(|i| 0.3 + 0.6 * ((i * 7919) % 13) as f64 / 13.0).collect()
    }

    #[test]
    fn exact_at_control_points() {
        let g = grid();
        let z = field(&g);
        for i in 0..g.len() {
            let w = g.weights(&g.point(i)).unwrap();
            assert_eq!(w.len(), 1);
            assert_eq!(g.thickness_at(&g.point(i), &z).unwrap(), z[i]);
        }
    }

    #[test]
    fn edge_midpoint_and_cell_centre() {
        let g = grid();
        let z = field(&g);
        let (a, b) = (g.point(g.index(1, 2, 0)), g.point(g.index(2, 2, 0)));
        let mid = [0.5 * (a[0] + b[0]), a[1], a[2]];
        assert_relative_eq!(
            g.thickness_at(&mid, &z).unwrap(),
            0.5 * (z[g.index(1, 2, 0)] + z[g.index(2, 2, 0)]),
            epsilon = 1e-14
        );
        let c = g.point(g.index(0, 0, 0));
        let centre = [c[0] + 1.0, c[1] + 0.75, c[2] + 1.5];
        let w = g.weights(&centre).unwrap();
        assert_eq!(w.len(), 8);
        assert!(w.iter().all(|(_, v)| (v - 0.125).abs() < 1e-15));
    }

    #[test]
    fn outside_points_are_rejected() {
        assert!(grid().weights(&[0.0, 0.0, 1.0]).is_err());
    }

    proptest! {
        #[test]
        fn weights_are_a_positive_partition_of_unity(u in 0.0f64..1.0, v in 0.0f64..1.0, w in 0.0f64..1.0) {
            let g = grid();
            let x = [1.0 + 4.0 * u, -2.0 + 4.5 * v, 0.5 + 3.0 * w];
            let wt = g.weights(&x).unwrap();
            prop_assert!(wt.len() <= 8);
            prop_assert!(wt.iter().all(|(_, w)| w > 0.0));
            prop_assert!((wt.iter().map(|(_, w)| w).sum::<f64>() - 1.0).abs() < 1e-14);
            let z = field(&g);
            let lo = wt.iter().map(|(i, _)| z[i]).fold(f64::INFINITY, f64::min);
            let hi = wt.iter().map(|(i, _)| z[i]).fold(f64::NEG_INFINITY, f64::max);
            let t = g.thickness_at(&x, &z).unwrap();
            prop_assert!(t >= lo - 1e-14 && t <= hi + 1e-14);
        }

        #[test]
        fn constant_field_is_reproduced(u in 0.0f64..1.0, v in 0.0f64..1.0, w in 0.0f64..1.0) {
            let g = grid();
            let x = [1.0 + 4.0 * u, -2.0 + 4.5 * v, 0.5 + 3.0 * w];
            prop_assert!((g.thickness_at(&x, &g.uniform(0.42)).unwrap() - 0.42).abs() < 1e-14);
        }

        #[test]
        fn weights_match_finite_differences(u in 0.05f64..0.95, v in 0.05f64..0.95, w in 0.05f64..0.95, j in 0usize..24) {
            let g = grid();
            let x = [1.0 + 4.0 * u, -2.0 + 4.5 * v, 0.5 + 3.0 * w];
            let z = field(&g);
            let h = 1e-3;
            let (mut zp, mut zm) = (z.clone(), z.clone());
            zp[j] += h;
            zm[j] -= h;
            let fd = (g.thickness_at(&x, &zp).unwrap() - g.thickness_at(&x, &zm).unwrap()) / (2.0 * h);
            let analytic = g.weights(&x).unwrap().iter().find(|(i, _)| *i == j).map_or(0.0, |(_, w)| w);
            prop_assert!((fd - analytic).abs() <= 1e-10 * analytic.abs().max(1.0));
        }
    }
}
