//! Periodic homogenization of the bone-filled gyroid unit cell.
//!
//! The cell is discretised by the voxels of a [`UnitCellField`]. Each voxel
//! mixes implant and bone stiffness by its projected pseudo-density, the
//! fluctuation field is periodic with one node pinned, and the effective
//! tensor's columns are the volume-averaged stresses under six unit
//! macroscopic strains.

mod pcg;
mod sampling;

use serde::{Deserialize, Serialize};

pub use sampling::{
    read_samples, sample_design_space, write_samples, CellSample, SampleMetadata, SamplingPlan, Units,
};

use crate::material::{BoneLaw, ImplantMaterial, Tensor6};
use crate::mech::hex8::{BMatrix, ElementGeometry, ElementMatrix, ElementVector, NATURAL};
use crate::sparse::{Assembly, FIXED};
use crate::tpms::{ProjectionParams, UnitCellField};
use crate::{Error, Result};

/// `ρ_e^p C_implant + (1 − ρ_e^p) C_bone`.
pub fn interpolate_elasticity(rho_e: f64, penalty: f64, implant: &Tensor6, bone: &Tensor6) -> Tensor6 {
    let w = rho_e.powf(penalty);
    implant * w + bone * (1.0 - w)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LinearSolver {
    /// Sparse Cholesky; practical up to about 32³ voxels.
    #[default]
    Direct,
    /// Matrix-free conjugate gradients with a Jacobi preconditioner.
    Pcg { tolerance: f64, max_iterations: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellMaterials {
    pub implant: ImplantMaterial,
    pub bone: BoneLaw,
    pub projection: ProjectionParams,
}

/// Effective tensor with the bounds formed from the same voxel mixture.
#[derive(Debug, Clone)]
pub struct Homogenized {
    pub tensor: Tensor6,
    pub voigt: Tensor6,
    pub reuss: Tensor6,
    /// Mean pseudo-density (solid volume fraction).
    pub solid_fraction: f64,
}

pub struct Homogenizer {
    n: usize,
    cell_size: f64,
    materials: CellMaterials,
    solver: LinearSolver,
    assembly: Option<Assembly>,
    geometry: ElementGeometry,
    k_implant: ElementMatrix,
    k_bone_unit: ElementMatrix,
    integrated_b: BMatrix,
}

impl Homogenizer {
    pub fn new(resolution: usize, cell_size: f64, materials: CellMaterials, solver: LinearSolver) -> Result<Self> {
        materials.projection.validate()?;
        if resolution < 2 {
            return Err(Error::Config("homogenization needs at least 2 voxels per edge".into()));
        }
        let h = cell_size / resolution as f64;
        let voxel = NATURAL.map(|p| p.map(|v| 0.5 * (v + 1.0) * h));
        let geometry = ElementGeometry::new(&voxel)?;
        let unit = BoneLaw {
            coefficient_mpa: 1.0,
            exponent: 0.0,
            poisson: materials.bone.poisson,
        };
        let assembly = match solver {
            LinearSolver::Direct => Some(Assembly::new(
                3 * (resolution.pow(3) - 1),
                24,
                element_dofs(resolution),
            )),
            LinearSolver::Pcg { .. } => None,
        };
        Ok(Homogenizer {
            n: resolution,
            cell_size,
            materials,
            solver,
            assembly,
            k_implant: geometry.stiffness(&materials.implant.tensor()),
            k_bone_unit: geometry.stiffness(&unit.tensor(1.0)),
            integrated_b: geometry.integrated_b(),
            geometry,
        })
    }

    pub fn resolution(&self) -> usize {
        self.n
    }

    pub fn materials(&self) -> &CellMaterials {
        &self.materials
    }

    /// Homogenizes the sheet of thickness `tau` filled with bone of density `rho_b`.
    pub fn homogenize(&self, field: &UnitCellField, tau: f64, rho_b: f64) -> Result<Homogenized> {
        if field.resolution() != self.n || (field.cell_size() - self.cell_size).abs() > 1e-12 * self.cell_size {
            return Err(Error::Config(format!(
                "field is {}³ over {} mm but the homogenizer expects {}³ over {} mm",
                field.resolution(),
                field.cell_size(),
                self.n,
                self.cell_size
            )));
        }
        let densities = field.pseudo_densities(tau, &self.materials.projection);
        self.homogenize_densities(&densities, rho_b, 4)
    }

    /// Homogenizes an arbitrary voxel pseudo-density field.
    pub fn homogenize_densities(&self, densities: &[f64], rho_b: f64, sweeps: usize) -> Result<Homogenized> {
        let n = self.n;
        let ne = n * n * n;
        if densities.len() != ne {
            return Err(Error::Config(format!("expected {ne} voxel densities, got {}", densities.len())));
        }
        let p = self.materials.projection.penalty;
        let e_bone = self.materials.bone.modulus(rho_b);
        let c_implant = self.materials.implant.tensor();
        let c_bone = self.materials.bone.tensor(rho_b);
        let weights: Vec<f64> = densities.iter().map(|r| r.powf(p)).collect();
        let element_tensor = |e: usize| c_implant * weights[e] + c_bone * (1.0 - weights[e]);
        let element_matrix = |e: usize| self.k_implant * weights[e] + self.k_bone_unit * ((1.0 - weights[e]) * e_bone);

        // f_e = −(∫B)ᵀ C_e ε̄ for each unit strain
        let dofs = element_dofs(n);
        let ndof = 3 * (ne - 1);
        let mut rhs = vec![vec![0.0; ndof]; 6];
        for e in 0..ne {
            let c = element_tensor(e);
            let edofs = &dofs[24 * e..24 * e + 24];
            for (k, col) in rhs.iter_mut().enumerate() {
                let fe = -(self.integrated_b.transpose() * c.column(k));
                for (i, &d) in edofs.iter().enumerate() {
                    if d != FIXED {
                        col[d as usize] += fe[i];
                    }
                }
            }
        }

        let solutions = match (&self.solver, &self.assembly) {
            (LinearSolver::Direct, Some(asm)) => {
                let values = asm.assemble(|e, ke| ke.copy_from_slice(element_matrix(e).as_slice()));
                asm.factor(values)?.solve_columns_refined(&rhs, 1e-10, sweeps)?
            }
            (LinearSolver::Pcg { tolerance, max_iterations }, _) => {
                let op = pcg::VoxelOperator {
                    dofs: &dofs,
                    ndof,
                    element_matrix: &element_matrix,
                };
                rhs.iter()
                    .map(|b| pcg::solve(&op, b, *tolerance, *max_iterations))
                    .collect::<Result<Vec<_>>>()?
            }
            _ => unreachable!("direct solver always has an assembly"),
        };

        let volume = self.cell_size.powi(3);
        let ve = self.geometry.volume;
        let mut tensor = Tensor6::zeros();
        let mut voigt = Tensor6::zeros();
        let mut compliance = Tensor6::zeros();
        for e in 0..ne {
            let c = element_tensor(e);
            voigt += c * (ve / volume);
            compliance += c.try_inverse().ok_or_else(|| Error::Numerical("singular voxel tensor".into()))? * (ve / volume);
            let edofs = &dofs[24 * e..24 * e + 24];
            for (k, u) in solutions.iter().enumerate() {
                let ue = ElementVector::from_fn(|i, _| if edofs[i] == FIXED { 0.0 } else { u[edofs[i] as usize] });
                let mut strain = self.integrated_b * ue;
                strain[k] += ve;
                let stress = c * strain / volume;
                for r in 0..6 {
                    tensor[(r, k)] += stress[r];
                }
            }
        }
        let reuss = compliance
            .try_inverse()
            .ok_or_else(|| Error::Numerical("singular Reuss compliance".into()))?;
        Ok(Homogenized {
            tensor,
            voigt,
            reuss,
            solid_fraction: densities.iter().sum::<f64>() / ne as f64,
        })
    }
}

// Periodic node numbering with node 0 pinned.
fn element_dofs(n: usize) -> Vec<u32> {
    let node = |i: usize, j: usize, k: usize| (i % n) + n * ((j % n) + n * (k % n));
    let mut dofs = Vec::with_capacity(24 * n * n * n);
    for k in 0..n {
        for j in 0..n {
            for i in 0..n {
                for c in NATURAL {
                    let s = |v: f64| usize::from(v > 0.0);
                    let id = node(i + s(c[0]), j + s(c[1]), k + s(c[2]));
                    for d in 0..3 {
                        dofs.push(if id == 0 { FIXED } else { (3 * (id - 1) + d) as u32 });
                    }
                }
            }
        }
    }
    dofs
}

/// Largest eigenvalue of the symmetric part of `a − b`, negated: positive
/// when `a ⪰ b` strictly.
pub fn min_eigen_difference(a: &Tensor6, b: &Tensor6) -> f64 {
    let d = a - b;
    let sym = (d + d.transpose()) * 0.5;
    sym.symmetric_eigenvalues().min()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn materials() -> CellMaterials {
        CellMaterials {
            implant: ImplantMaterial::default(),
            bone: BoneLaw::default(),
            projection: ProjectionParams::for_grid(6, 2.5),
        }
    }

    #[test]
    fn interpolation_endpoints() {
        let ti = ImplantMaterial::default().tensor();
        let bone = BoneLaw::default().tensor(0.7);
        assert_eq!(interpolate_elasticity(1.0, 3.0, &ti, &bone), ti);
        assert_eq!(interpolate_elasticity(0.0, 3.0, &ti, &bone), bone);
        let mid = interpolate_elasticity(0.5, 3.0, &ti, &bone);
        assert!((mid - (ti * 0.125 + bone * 0.875)).norm() < 1e-9 * ti.norm());
    }

    #[test]
    fn uniform_cells_reproduce_constituents() {
        for solver in [
            LinearSolver::Direct,
            LinearSolver::Pcg {
                tolerance: 1e-12,
                max_iterations: 2000,
            },
        ] {
            let h = Homogenizer::new(6, 2.5, materials(), solver).unwrap();
            let solid = h.homogenize_densities(&vec![1.0; 216], 1.0, 4).unwrap();
            let ti = ImplantMaterial::default().tensor();
            assert!((solid.tensor - ti).norm() < 1e-8 * ti.norm());
            let void = h.homogenize_densities(&vec![0.0; 216], 1.0, 4).unwrap();
            let bone = BoneLaw::default().tensor(1.0);
            assert!((void.tensor - bone).norm() < 1e-8 * bone.norm());
        }
    }

    #[test]
    fn layered_cell_matches_laminate_bounds() {
        // layers normal to z: C33 follows the Reuss average, C11 in-plane is
        // between the bounds and the shear C44 is the harmonic mean
        let n = 4;
        let h = Homogenizer::new(n, 1.0, materials(), LinearSolver::Direct).unwrap();
        let densities: Vec<f64> = (0..n * n * n).map(|i| if i / (n * n) < 2 { 1.0 } else { 0.0 }).collect();
        let out = h.homogenize_densities(&densities, 1.0, 4).unwrap();
        let g_ti = ImplantMaterial::default().tensor()[(3, 3)];
        let g_b = BoneLaw::default().tensor(1.0)[(3, 3)];
        assert_relative_eq!(out.tensor[(3, 3)], 2.0 / (1.0 / g_ti + 1.0 / g_b), max_relative = 1e-8);
        assert!(min_eigen_difference(&out.voigt, &out.tensor) > -1e-6);
        assert!(min_eigen_difference(&out.tensor, &out.reuss) > -1e-6);
    }
}
