use std::io::{Read, Write};
use std::path::Path;
use std::sync::OnceLock;

use log::warn;
use rayon::prelude::*;

use super::distance::gyroid_solver;
use super::isosurface::{self, PeriodicGrid, Triangle};
use super::pore::{PoreSearch, PoreSearchOptions};
use super::{gyroid_level, project_density, signed_distance, ProjectionParams, SurfaceArea};
use crate::{Error, Point3, Result};

const MAGIC: &[u8; 8] = b"GYRDIST\0";
const VERSION: u32 = 1;

/// Distance to the base surface sampled at the centroids of an `n³` voxel
/// grid over one cell `[0, a)³`.
#[derive(Debug)]
pub struct UnitCellField {
    resolution: usize,
    cell_size: f64,
    distances: Vec<f64>,
    p0: OnceLock<f64>,
}

impl Clone for UnitCellField {
    fn clone(&self) -> Self {
        let p0 = OnceLock::new();
        if let Some(&v) = self.p0.get() {
            let _ = p0.set(v);
        }
        UnitCellField {
            resolution: self.resolution,
            cell_size: self.cell_size,
            distances: self.distances.clone(),
            p0,
        }
    }
}

impl UnitCellField {
    /// Gyroid distance field; one closest-point solve per voxel.
    pub fn gyroid(resolution: usize, cell_size: f64) -> Result<Self> {
        if resolution < 2 || !(cell_size > 0.0) {
            return Err(Error::Config(format!(
                "unit cell needs resolution ≥ 2 and a > 0, got {resolution} and {cell_size}"
            )));
        }
        let solver = gyroid_solver();
        let n = resolution;
        let h = cell_size / n as f64;
        let distances = (0..n * n * n)
            .into_par_iter()
            .map(|idx| {
                let (i, j, k) = (idx % n, (idx / n) % n, idx / (n * n));
                let x = [(i as f64 + 0.5) * h, (j as f64 + 0.5) * h, (k as f64 + 0.5) * h];
                solver.closest(&x, cell_size).map(|c| c.distance)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(UnitCellField {
            resolution,
            cell_size,
            distances,
            p0: OnceLock::new(),
        })
    }

    pub fn from_parts(resolution: usize, cell_size: f64, distances: Vec<f64>) -> Result<Self> {
        if distances.len() != resolution.pow(3) {
            return Err(Error::Config(format!(
                "distance array has {} entries, expected {}",
                distances.len(),
                resolution.pow(3)
            )));
        }
        Ok(UnitCellField {
            resolution,
            cell_size,
            distances,
            p0: OnceLock::new(),
        })
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn cell_size(&self) -> f64 {
        self.cell_size
    }

    pub fn spacing(&self) -> f64 {
        self.cell_size / self.resolution as f64
    }

    pub fn distances(&self) -> &[f64] {
        &self.distances
    }

    pub fn distance(&self, i: usize, j: usize, k: usize) -> f64 {
        let n = self.resolution;
        self.distances[i + n * (j + n * k)]
    }

    pub fn centroid(&self, i: usize, j: usize, k: usize) -> Point3 {
        let h = self.spacing();
        [(i as f64 + 0.5) * h, (j as f64 + 0.5) * h, (k as f64 + 0.5) * h]
    }

    /// Per-voxel pseudo-density of a sheet of thickness `tau`.
    pub fn pseudo_densities(&self, tau: f64, params: &ProjectionParams) -> Vec<f64> {
        self.distances
            .iter()
            .map(|&d| project_density(signed_distance(d, tau), params))
            .collect()
    }

    /// `ξ = 1 − mean(ρ_e)`.
    pub fn porosity(&self, tau: f64, params: &ProjectionParams) -> f64 {
        let solid: f64 = self
            .distances
            .iter()
            .map(|&d| project_density(signed_distance(d, tau), params))
            .sum();
        1.0 - solid / self.distances.len() as f64
    }

    // Signed distance from the base surface, positive where f > 0.
    fn signed_field(&self) -> Vec<f64> {
        let n = self.resolution;
        (0..n * n * n)
            .map(|idx| {
                let (i, j, k) = (idx % n, (idx / n) % n, idx / (n * n));
                let x = self.centroid(i, j, k);
                gyroid_level(&x, self.cell_size).signum() * self.distances[idx]
            })
            .collect()
    }

    /// Triangulated wall surfaces `D = τ/2` on both sides of the base surface.
    pub fn wall_surfaces(&self, tau: f64) -> Vec<Triangle> {
        let signed = self.signed_field();
        let h = self.spacing();
        let grid = PeriodicGrid {
            resolution: self.resolution,
            spacing: h,
            origin: [0.5 * h; 3],
            values: &signed,
        };
        let mut tris = grid.triangulate(0.5 * tau);
        tris.extend(grid.triangulate(-0.5 * tau));
        tris
    }

    /// Internal surface area of the void per unit cell volume (mm⁻¹).
    pub fn specific_surface_area(&self, tau: f64) -> SurfaceArea {
        let area: f64 = self.wall_surfaces(tau).iter().map(isosurface::triangle_area).sum();
        if area == 0.0 {
            warn!("void closed at τ = {tau} mm; specific surface area is zero");
            return SurfaceArea {
                value: 0.0,
                void_closed: true,
            };
        }
        SurfaceArea {
            value: area / self.cell_size.powi(3),
            void_closed: false,
        }
    }

    pub fn write_wall_stl(&self, tau: f64, path: &Path) -> Result<()> {
        isosurface::write_stl(path, &self.wall_surfaces(tau))
    }

    /// Zero-thickness pore diameter, computed on first use.
    pub fn p0(&self) -> Result<f64> {
        if let Some(&p) = self.p0.get() {
            return Ok(p);
        }
        let p = PoreSearch::new(self, PoreSearchOptions::default()).p0()?;
        Ok(*self.p0.get_or_init(|| p))
    }

    pub fn p0_if_known(&self) -> Option<f64> {
        self.p0.get().copied()
    }

    pub fn set_p0(&self, p0: f64) {
        let _ = self.p0.set(p0);
    }

    /// `p_s = p₀ − τ`.
    pub fn min_pore_size(&self, tau: f64) -> Result<f64> {
        let p0 = self.p0()?;
        if !(0.0..=p0).contains(&tau) {
            return Err(Error::OutOfDomain {
                quantity: "wall thickness",
                value: tau,
                lo: 0.0,
                hi: p0,
            });
        }
        Ok(p0 - tau)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::with_capacity(40 + 8 * self.distances.len());
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&VERSION.to_le_bytes());
        buf.extend_from_slice(&(self.resolution as u32).to_le_bytes());
        buf.extend_from_slice(&self.cell_size.to_le_bytes());
        buf.extend_from_slice(&self.p0_if_known().unwrap_or(f64::NAN).to_le_bytes());
        for d in &self.distances {
            buf.extend_from_slice(&d.to_le_bytes());
        }
        let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        file.write_all(&buf).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut buf = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut buf))
            .map_err(|e| Error::io(path, e))?;
        if buf.len() < 32 || &buf[..8] != MAGIC {
            return Err(Error::format(path, "not a unit-cell distance file"));
        }
        let u32_at = |o: usize| u32::from_le_bytes(buf[o..o + 4].try_into().unwrap());
        let f64_at = |o: usize| f64::from_le_bytes(buf[o..o + 8].try_into().unwrap());
        let version = u32_at(8);
        if version != VERSION {
            return Err(Error::format(path, format!("unsupported version {version}")));
        }
        let n = u32_at(12) as usize;
        let a = f64_at(16);
        let p0 = f64_at(24);
        if buf.len() != 32 + 8 * n * n * n {
            return Err(Error::format(path, "truncated distance array"));
        }
        let distances = (0..n * n * n).map(|i| f64_at(32 + 8 * i)).collect();
        let field = UnitCellField::from_parts(n, a, distances)?;
        if p0.is_finite() {
            field.set_p0(p0);
        }
        Ok(field)
    }
}
