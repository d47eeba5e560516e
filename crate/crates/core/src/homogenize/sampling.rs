use std::path::Path;

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{CellMaterials, Homogenizer, LinearSolver};
use crate::material::{to_upper, UPPER_ENTRIES};
use crate::tpms::{ProjectionParams, UnitCellField};
use crate::{Error, Result};

/// One homogenized point of the (τ, ρ_b) design space.
#[derive(Debug, Clone, PartialEq)]
pub struct CellSample {
    /// Wall thickness (mm).
    pub tau: f64,
    /// Interstitial bone density (g/cc).
    pub rho_b: f64,
    /// Upper triangle of the effective tensor (MPa), row-major.
    pub tensor: [f64; 21],
    pub porosity: f64,
    /// Specific surface area (mm⁻¹).
    pub ssa: f64,
}

/// Full-factorial grid of thickness and bone density levels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplingPlan {
    pub levels: usize,
    pub tau_range: (f64, f64),
    pub rho_range: (f64, f64),
}

impl SamplingPlan {
    pub fn tau_levels(&self) -> Vec<f64> {
        linspace(self.tau_range, self.levels)
    }

    pub fn rho_levels(&self) -> Vec<f64> {
        linspace(self.rho_range, self.levels)
    }

    fn validate(&self) -> Result<()> {
        if self.levels < 2 {
            return Err(Error::Config(format!("need at least 2 levels, got {}", self.levels)));
        }
        let (t0, t1) = self.tau_range;
        let (r0, r1) = self.rho_range;
        if !(t0 >= 0.0 && t1 > t0 && r0 > 0.0 && r1 > r0) {
            return Err(Error::Config(format!("invalid sampling ranges τ {:?}, ρ {:?}", self.tau_range, self.rho_range)));
        }
        Ok(())
    }
}

fn linspace((lo, hi): (f64, f64), n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| if i + 1 == n { hi } else { lo + (hi - lo) * i as f64 / (n - 1) as f64 })
        .collect()
}

/// Provenance written next to the sample table.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SampleMetadata {
    pub format_version: u32,
    pub plan: SamplingPlan,
    pub cell_size_mm: f64,
    pub homogenization_resolution: usize,
    pub property_resolution: usize,
    pub property_projection: ProjectionParams,
    pub materials: CellMaterials,
    pub solver: LinearSolver,
    pub code_version: String,
    pub units: Units,
    /// SHA-256 of the CSV table.
    pub table_sha256: String,
}

impl SampleMetadata {
    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::format(path, e.to_string()))?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Units {
    pub tau: String,
    pub rho_b: String,
    pub tensor: String,
    pub ssa: String,
}

impl Default for Units {
    fn default() -> Self {
        Units {
            tau: "mm".into(),
            rho_b: "g/cc".into(),
            tensor: "MPa (Voigt 11,22,33,23,13,12; engineering shear)".into(),
            ssa: "1/mm".into(),
        }
    }
}

/// Homogenizes every (τ, ρ_b) pair of the plan. Porosity and surface area
/// come from `property_field`, which may be finer than the homogenization grid.
pub fn sample_design_space(
    homogenizer: &Homogenizer,
    cell_field: &UnitCellField,
    property_field: &UnitCellField,
    plan: &SamplingPlan,
) -> Result<Vec<CellSample>> {
    plan.validate()?;
    let taus = plan.tau_levels();
    let rhos = plan.rho_levels();
    let projection = ProjectionParams {
        radius: property_field.spacing() * 3f64.sqrt(),
        ..homogenizer.materials().projection
    };
    let scalars: Vec<(f64, f64)> = taus
        .iter()
        .map(|&t| {
            let s = property_field.specific_surface_area(t);
            (property_field.porosity(t, &projection), s.value)
        })
        .collect();
    let pairs: Vec<(usize, usize)> = (0..taus.len()).flat_map(|i| (0..rhos.len()).map(move |j| (i, j))).collect();
    let total = pairs.len();
    let done = std::sync::atomic::AtomicUsize::new(0);
    pairs
        .par_iter()
        .map(|&(i, j)| {
            let (tau, rho) = (taus[i], rhos[j]);
            let densities = cell_field.pseudo_densities(tau, &homogenizer.materials().projection);
            let cell = match homogenizer.homogenize_densities(&densities, rho, 4) {
                Ok(c) => c,
                Err(e) => {
                    warn!("sample τ = {tau}, ρ = {rho} failed ({e}); retrying with more refinement");
                    homogenizer.homogenize_densities(&densities, rho, 20)?
                }
            };
            let k = done.fetch_add(1, std::sync::atomic::Ordering::Relaxed) + 1;
            info!("homogenized {k}/{total}: τ = {tau:.4} mm, ρ_b = {rho:.4} g/cc");
            Ok(CellSample {
                tau,
                rho_b: rho,
                tensor: to_upper(&cell.tensor),
                porosity: scalars[i].0,
                ssa: scalars[i].1,
            })
        })
        .collect()
}

fn column_names() -> Vec<String> {
    let mut names = vec!["tau_mm".into(), "rho_b_gcc".into(), "porosity".into(), "ssa_per_mm".into()];
    names.extend(UPPER_ENTRIES.iter().map(|(i, j)| format!("c{}{}_mpa", i + 1, j + 1)));
    names
}

/// Writes the sample table; returns its SHA-256.
pub fn write_samples(path: &Path, samples: &[CellSample]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| Error::format(path, e.to_string());
    w.write_record(column_names()).map_err(io)?;
    for s in samples {
        let mut row = vec![s.tau, s.rho_b, s.porosity, s.ssa];
        row.extend_from_slice(&s.tensor);
        w.write_record(row.iter().map(|v| format!("{v:e}"))).map_err(io)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::format(path, e.to_string()))?;
    std::fs::write(path, &bytes).map_err(|e| Error::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

pub fn read_samples(path: &Path) -> Result<(Vec<CellSample>, String)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut r = csv::Reader::from_reader(bytes.as_slice());
    let header = r.headers().map_err(|e| Error::format(path, e.to_string()))?.clone();
    let expected = column_names();
    if header.iter().collect::<Vec<_>>() != expected.iter().map(String::as_str).collect::<Vec<_>>() {
        return Err(Error::format(path, "unexpected sample table columns"));
    }
    let mut samples = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| Error::format(path, e.to_string()))?;
        let v: Vec<f64> = rec
            .iter()
            .map(|s| s.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::format(path, format!("row {}: {e}", line + 2)))?;
        let mut tensor = [0.0; 21];
        tensor.copy_from_slice(&v[4..25]);
        samples.push(CellSample {
            tau: v[0],
            rho_b: v[1],
            porosity: v[2],
            ssa: v[3],
            tensor,
        });
    }
    Ok((samples, sha256_hex(&bytes)))
}

pub(crate) fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}
