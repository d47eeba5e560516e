//! Linear static analysis on trilinear hexahedra.

pub mod hex8;
mod mesh;

use std::sync::Arc;

use nalgebra::{SymmetricEigen, Matrix6};
use serde::{Deserialize, Serialize};

pub use hex8::{ElementGeometry, ElementVector};
pub use mesh::{Aabb, Domain, HexMesh};

use crate::material::Tensor6;
use crate::sparse::{self, Assembly, Factor, FIXED};
use crate::{Error, Result};

/// Residual tolerance for every static solve.
pub const SOLVE_TOLERANCE: f64 = 1e-8;

/// Zero displacement on selected components of a node group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Support {
    pub nodes: Vec<u32>,
    pub fixed: [bool; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadCase {
    pub name: String,
    /// Total force (N), spread over `nodes` by tributary boundary area.
    pub force: [f64; 3],
    pub nodes: Vec<u32>,
    pub cycles_per_day: f64,
    pub supports: Vec<Support>,
}

impl LoadCase {
    fn validate(&self, mesh: &HexMesh) -> Result<()> {
        let bad = |m: String| Err(Error::Config(format!("load case '{}': {m}", self.name)));
        if !(self.cycles_per_day > 0.0) {
            return bad(format!("cycles per day must be positive, got {}", self.cycles_per_day));
        }
        if !self.force.iter().all(|f| f.is_finite()) {
            return bad("force must be finite".into());
        }
        if self.supports.iter().all(|s| s.nodes.is_empty() || !s.fixed.iter().any(|&f| f)) {
            return bad("needs at least one support".into());
        }
        if self.nodes.is_empty() && self.force.iter().any(|&f| f != 0.0) {
            return bad("force applied to an empty node group".into());
        }
        let n = mesh.node_count() as u32;
        if self.nodes.iter().chain(self.supports.iter().flat_map(|s| &s.nodes)).any(|&v| v >= n) {
            return bad("node index out of range".into());
        }
        Ok(())
    }

    fn fixed_dofs(&self, node_count: usize) -> Vec<bool> {
        let mut fixed = vec![false; 3 * node_count];
        for s in &self.supports {
            for &n in &s.nodes {
                for d in 0..3 {
                    if s.fixed[d] {
                        fixed[3 * n as usize + d] = true;
                    }
                }
            }
        }
        fixed
    }
}

struct System {
    fixed: Vec<bool>,
    reduced: Vec<u32>,
    assembly: Assembly,
}

/// Assembled structure for a fixed mesh and set of load cases. Load cases
/// sharing a support set share one factorization.
pub struct StaticModel {
    mesh: Arc<HexMesh>,
    cases: Vec<LoadCase>,
    systems: Vec<System>,
    case_system: Vec<usize>,
    loads: Vec<Vec<f64>>,
}

const MODE_NAMES: [&str; 6] = ["Tx", "Ty", "Tz", "Rx", "Ry", "Rz"];

impl StaticModel {
    pub fn new(mesh: Arc<HexMesh>, cases: Vec<LoadCase>) -> Result<Self> {
        let nn = mesh.node_count();
        let mut systems: Vec<System> = Vec::new();
        let mut case_system = Vec::with_capacity(cases.len());
        let mut loads = Vec::with_capacity(cases.len());
        for case in &cases {
            case.validate(&mesh)?;
            let fixed = case.fixed_dofs(nn);
            let idx = match systems.iter().position(|s| s.fixed == fixed) {
                Some(i) => i,
                None => {
                    unconstrained_modes(&mesh, &fixed)?;
                    systems.push(build_system(&mesh, fixed));
                    systems.len() - 1
                }
            };
            case_system.push(idx);
            let mut f = vec![0.0; 3 * nn];
            let w = mesh.tributary_weights(&case.nodes);
            for (&n, w) in case.nodes.iter().zip(w) {
                for d in 0..3 {
                    f[3 * n as usize + d] += w * case.force[d];
                }
            }
            loads.push(f);
        }
        Ok(StaticModel {
            mesh,
            cases,
            systems,
            case_system,
            loads,
        })
    }

    pub fn mesh(&self) -> &HexMesh {
        &self.mesh
    }

    pub fn mesh_arc(&self) -> &Arc<HexMesh> {
        &self.mesh
    }

    pub fn cases(&self) -> &[LoadCase] {
        &self.cases
    }

    pub fn load(&self, case: usize) -> &[f64] {
        &self.loads[case]
    }

    /// One Cholesky factor per distinct support set.
    pub fn factorize(&self, tensors: &[Tensor6]) -> Result<Vec<Factor<'_>>> {
        if tensors.len() != self.mesh.element_count() {
            return Err(Error::Numerical(format!(
                "{} element tensors for {} elements",
                tensors.len(),
                self.mesh.element_count()
            )));
        }
        self.systems
            .iter()
            .map(|s| {
                let values = s.assembly.assemble(|e, ke| {
                    let k = self.mesh.geometry(e).stiffness(&tensors[e]);
                    ke.copy_from_slice(k.as_slice());
                });
                s.assembly.factor(values)
            })
            .collect()
    }

    /// Displacements (full DOF vector, zero on supports) for the right-hand
    /// sides `rhs` of load case `case`; entries on supported DOFs are ignored.
    pub fn solve_with(&self, factors: &[Factor<'_>], case: usize, rhs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        let sys = &self.systems[self.case_system[case]];
        let n = sys.assembly.size();
        let reduced: Vec<Vec<f64>> = rhs
            .iter()
            .map(|f| {
                let mut r = vec![0.0; n];
                for (dof, &i) in sys.reduced.iter().enumerate() {
                    if i != FIXED {
                        r[i as usize] = f[dof];
                    }
                }
                r
            })
            .collect();
        let sol = factors[self.case_system[case]].solve_columns(&reduced, SOLVE_TOLERANCE)?;
        Ok(sol
            .into_iter()
            .map(|x| {
                sys.reduced
                    .iter()
                    .map(|&i| if i == FIXED { 0.0 } else { x[i as usize] })
                    .collect()
            })
            .collect())
    }

    pub fn solve(&self, factors: &[Factor<'_>], case: usize) -> Result<Vec<f64>> {
        Ok(self.solve_with(factors, case, std::slice::from_ref(&self.loads[case]))?.remove(0))
    }

    /// Assembles, factorizes and solves every load case.
    pub fn solve_all(&self, tensors: &[Tensor6]) -> Result<Vec<Vec<f64>>> {
        let factors = self.factorize(tensors)?;
        (0..self.cases.len()).map(|c| self.solve(&factors, c)).collect()
    }

    pub fn fixed(&self, case: usize) -> &[bool] {
        &self.systems[self.case_system[case]].fixed
    }

    pub fn element_displacement(&self, e: usize, u: &[f64]) -> ElementVector {
        let conn = self.mesh.elements()[e];
        ElementVector::from_fn(|i, _| u[3 * conn[i / 3] as usize + i % 3])
    }

    /// Adds the element vector into a full DOF vector.
    pub fn scatter_add(&self, e: usize, fe: &ElementVector, out: &mut [f64]) {
        let conn = self.mesh.elements()[e];
        for i in 0..24 {
            out[3 * conn[i / 3] as usize + i % 3] += fe[i];
        }
    }

    /// `K u` over all DOFs, supports included.
    pub fn internal_force(&self, tensors: &[Tensor6], u: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; u.len()];
        for e in 0..self.mesh.element_count() {
            let fe = self.mesh.geometry(e).apply(&tensors[e], &self.element_displacement(e, u));
            self.scatter_add(e, &fe, &mut out);
        }
        out
    }

    /// `½ f·u`.
    pub fn compliance(&self, case: usize, u: &[f64]) -> f64 {
        0.5 * sparse::dot(&self.loads[case], u)
    }

    /// `U_e = ½ εᵀ C ε` at each element centroid (MPa).
    pub fn strain_energy_density(&self, tensors: &[Tensor6], u: &[f64]) -> Vec<f64> {
        (0..self.mesh.element_count())
            .map(|e| {
                let eps = self.mesh.geometry(e).centroid_strain(&self.element_displacement(e, u));
                0.5 * eps.dot(&(tensors[e] * eps))
            })
            .collect()
    }
}

fn build_system(mesh: &HexMesh, fixed: Vec<bool>) -> System {
    let mut reduced = vec![FIXED; fixed.len()];
    let mut n = 0u32;
    for (dof, &f) in fixed.iter().enumerate() {
        if !f {
            reduced[dof] = n;
            n += 1;
        }
    }
    let mut element_dofs = Vec::with_capacity(24 * mesh.element_count());
    for conn in mesh.elements() {
        for &node in conn {
            for d in 0..3 {
                element_dofs.push(reduced[3 * node as usize + d]);
            }
        }
    }
    System {
        assembly: Assembly::new(n as usize, 24, element_dofs),
        fixed,
        reduced,
    }
}

// Rigid-body modes left free by the supports.
fn unconstrained_modes(mesh: &HexMesh, fixed: &[bool]) -> Result<()> {
    let bb = mesh.bounding_box();
    let centre = [0, 1, 2].map(|d| 0.5 * (bb.min[d] + bb.max[d]));
    let scale = (0..3).map(|d| bb.max[d] - bb.min[d]).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let mut gram = Matrix6::<f64>::zeros();
    for (dof, _) in fixed.iter().enumerate().filter(|(_, &f)| f) {
        let p = mesh.nodes()[dof / 3];
        let [x, y, z] = [0, 1, 2].map(|d| (p[d] - centre[d]) / scale);
        let row = match dof % 3 {
            0 => [1.0, 0.0, 0.0, 0.0, z, -y],
            1 => [0.0, 1.0, 0.0, -z, 0.0, x],
            _ => [0.0, 0.0, 1.0, y, -x, 0.0],
        };
        for i in 0..6 {
            for j in 0..6 {
                gram[(i, j)] += row[i] * row[j];
            }
        }
    }
    let eig = SymmetricEigen::new(gram);
    let top = eig.eigenvalues.max().max(1.0);
    let mut modes = Vec::new();
    for k in 0..6 {
        if eig.eigenvalues[k] <= 1e-10 * top {
            let v = eig.eigenvectors.column(k);
            let names: Vec<&str> = (0..6).filter(|&i| v[i].abs() > 0.3).map(|i| MODE_NAMES[i]).collect();
            modes.push(names.join("+"));
        }
    }
    if modes.is_empty() {
        Ok(())
    } else {
        modes.sort();
        Err(Error::Unconstrained { modes })
    }
}

/// `σ̄ = √(2 E U)`.
pub fn effective_stress(energy_density: f64, modulus: f64) -> f64 {
    (2.0 * modulus * energy_density.max(0.0)).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::material::isotropic_tensor;
    use approx::assert_relative_eq;

    fn bar(n: usize) -> Arc<HexMesh> {
        Arc::new(HexMesh::block([0.0; 3], [1.0, 1.0, n as f64], [1, 1, n], |_| Domain::Bone).unwrap())
    }

    // Roller supports on the bottom face that admit free lateral contraction.
    fn uniaxial(mesh: &HexMesh, force: f64) -> LoadCase {
        let bottom = mesh.nodes_in(&Aabb {
            min: [0.0, 0.0, 0.0],
            max: [1.0, 1.0, 0.0],
        });
        let top_z = mesh.bounding_box().max[2];
        let top = mesh.nodes_in(&Aabb {
            min: [0.0, 0.0, top_z],
            max: [1.0, 1.0, top_z],
        });
        let origin = bottom.iter().copied().find(|&n| mesh.nodes()[n as usize] == [0.0, 0.0, 0.0]).unwrap();
        let x_axis = bottom.iter().copied().find(|&n| mesh.nodes()[n as usize] == [1.0, 0.0, 0.0]).unwrap();
        LoadCase {
            name: "axial".into(),
            force: [0.0, 0.0, force],
            nodes: top,
            cycles_per_day: 1.0,
            supports: vec![
                Support {
                    nodes: bottom,
                    fixed: [false, false, true],
                },
                Support {
                    nodes: vec![origin],
                    fixed: [true, true, true],
                },
                Support {
                    nodes: vec![x_axis],
                    fixed: [false, true, false],
                },
            ],
        }
    }

    #[test]
    fn patch_test_uniaxial() {
        let mesh = bar(1);
        let (e, nu) = (200.0, 0.3);
        let model = StaticModel::new(mesh.clone(), vec![uniaxial(&mesh, 5.0)]).unwrap();
        let c = vec![isotropic_tensor(e, nu)];
        let u = &model.solve_all(&c).unwrap()[0];
        let sigma = 5.0;
        let eps = model.mesh().geometry(0).centroid_strain(&model.element_displacement(0, u));
        assert_relative_eq!(eps[2], sigma / e, max_relative = 1e-10);
        assert_relative_eq!(eps[0], -nu * sigma / e, max_relative = 1e-10);
        let stress = c[0] * eps;
        assert_relative_eq!(stress[2], sigma, max_relative = 1e-10);
        let energy = model.strain_energy_density(&c, u)[0];
        assert_relative_eq!(energy, sigma * sigma / (2.0 * e), max_relative = 1e-10);
        assert_relative_eq!(effective_stress(energy, e), sigma, max_relative = 1e-10);
    }

    #[test]
    fn zero_load_gives_zero_displacement() {
        let mesh = bar(2);
        let model = StaticModel::new(mesh.clone(), vec![uniaxial(&mesh, 0.0)]).unwrap();
        let u = &model.solve_all(&vec![isotropic_tensor(1.0, 0.3); 2]).unwrap()[0];
        assert!(u.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn clapeyron_identity_on_graded_bar() {
        // elements in series under a uniform axial stress keep uniform strain
        // when no lateral contraction has to be reconciled, so the centroid
        // energy is exact
        let mesh = bar(3);
        let model = StaticModel::new(mesh.clone(), vec![uniaxial(&mesh, 2.0)]).unwrap();
        let c: Vec<_> = (0..3).map(|e| isotropic_tensor(100.0 + 50.0 * e as f64, 0.0)).collect();
        let u = &model.solve_all(&c).unwrap()[0];
        let energy: f64 = model
            .strain_energy_density(&c, u)
            .iter()
            .enumerate()
            .map(|(e, w)| w * model.mesh().volume(e))
            .sum();
        assert_relative_eq!(energy, model.compliance(0, u), max_relative = 1e-8);
    }

    #[test]
    fn reactions_balance_applied_load() {
        let mesh = bar(3);
        let mut case = uniaxial(&mesh, 2.0);
        case.force = [0.7, -0.4, 2.0];
        let bottom = case.supports[0].nodes.clone();
        case.supports = vec![Support {
            nodes: bottom,
            fixed: [true; 3],
        }];
        let model = StaticModel::new(mesh.clone(), vec![case]).unwrap();
        let c: Vec<_> = (0..3).map(|e| isotropic_tensor(100.0 + 50.0 * e as f64, 0.3)).collect();
        let u = &model.solve_all(&c).unwrap()[0];
        let r = model.internal_force(&c, u);
        assert_relative_eq!(0.5 * sparse::dot(&r, u), model.compliance(0, u), max_relative = 1e-8);
        let f = model.load(0);
        let fixed = model.fixed(0);
        for d in 0..3 {
            let reaction: f64 = (0..r.len()).filter(|&i| i % 3 == d && fixed[i]).map(|i| r[i]).sum();
            let applied: f64 = (0..f.len()).filter(|&i| i % 3 == d).map(|i| f[i]).sum();
            assert!((reaction + applied).abs() < 1e-8 * applied.abs().max(1.0));
        }
    }

    #[test]
    fn insufficient_supports_are_named() {
        let mesh = bar(1);
        let mut case = uniaxial(&mesh, 1.0);
        case.supports.truncate(1);
        match StaticModel::new(mesh, vec![case]) {
            Err(Error::Unconstrained { modes }) => {
                assert_eq!(modes.len(), 3);
                assert!(modes.iter().any(|m| m.contains("Rz")));
            }
            other => panic!("expected unconstrained modes, got {:?}", other.err()),
        }
    }

    #[test]
    fn linear_in_load() {
        let mesh = bar(2);
        let c = vec![isotropic_tensor(10.0, 0.2); 2];
        let u1 = StaticModel::new(mesh.clone(), vec![uniaxial(&mesh, 1.0)]).unwrap().solve_all(&c).unwrap();
        let u3 = StaticModel::new(mesh.clone(), vec![uniaxial(&mesh, 3.0)]).unwrap().solve_all(&c).unwrap();
        for (a, b) in u1[0].iter().zip(&u3[0]) {
            assert!((3.0 * a - b).abs() < 1e-12);
        }
    }
}
