//! Transient bone in-growth simulation.

pub mod laws;

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use laws::{BoneSsa, GrowthConstants, Smoothing};

use crate::material::{modulus_proxy, BoneLaw, ImplantMaterial, Tensor6};
use crate::mech::{Domain, StaticModel};
use crate::sparse::Factor;
use crate::surrogate::{PropertySurrogate, Scalar};
use crate::{Error, Result};

/// Element stiffness and its partials with respect to the bone density and,
/// for design elements, the wall thickness.
#[derive(Debug, Clone, Copy)]
pub struct ElementMaterial {
    pub c: Tensor6,
    pub d_rho: Tensor6,
    pub d_tau: Tensor6,
    pub modulus: f64,
}

/// One element's density update with its local partials. Partials with
/// respect to ρ hold the energies and the modulus fixed.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalUpdate {
    pub rho_next: f64,
    pub d_rho: f64,
    pub d_energy: Vec<f64>,
    pub d_modulus: f64,
    /// Through the lattice surface area only.
    pub d_tau: f64,
}

impl LocalUpdate {
    fn frozen(rho: f64, cases: usize) -> Self {
        LocalUpdate {
            rho_next: rho,
            d_rho: 1.0,
            d_energy: vec![0.0; cases],
            d_modulus: 0.0,
            d_tau: 0.0,
        }
    }
}

/// Everything computed during one time step.
pub struct StepData<'a> {
    pub materials: Vec<ElementMaterial>,
    pub tensors: Vec<Tensor6>,
    pub factors: Vec<Factor<'a>>,
    /// Per load case, full DOF vector.
    pub displacements: Vec<Vec<f64>>,
    /// Per load case, per element.
    pub energies: Vec<Vec<f64>>,
    pub updates: Vec<LocalUpdate>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimulationResult {
    pub final_density: Vec<f64>,
    /// Mass grown in the design region (mg).
    pub mass_growth: f64,
    /// Percentage of the attainable interstitial mass.
    pub growth_percent: f64,
    /// Growth percentage after each step.
    pub history: Vec<f64>,
    /// `½ f·u` per load case at the final density (N·mm).
    pub final_compliance: Vec<f64>,
    /// (step, densities) every requested interval.
    pub snapshots: Vec<(usize, Vec<f64>)>,
}

/// Setup shared by forward simulations and sensitivity runs.
pub struct GrowthModel {
    model: StaticModel,
    surrogate: Arc<PropertySurrogate>,
    pub implant: ImplantMaterial,
    pub bone: BoneLaw,
    pub constants: GrowthConstants,
    pub smoothing: Smoothing,
    pub bone_ssa: BoneSsa,
    /// Whether bone elements outside the implant also densify.
    pub bone_growth: bool,
    initial: Vec<f64>,
    design: Vec<usize>,
}

impl GrowthModel {
    /// `bone_density` gives the initial density of every element; design
    /// elements are reset to ρ̃_b and inert entries are ignored.
    pub fn new(model: StaticModel, surrogate: Arc<PropertySurrogate>, bone_density: Vec<f64>) -> Result<Self> {
        let constants = GrowthConstants::default();
        let mesh = model.mesh();
        if bone_density.len() != mesh.element_count() {
            return Err(Error::Config(format!(
                "{} initial densities for {} elements",
                bone_density.len(),
                mesh.element_count()
            )));
        }
        let design = mesh.elements_in(Domain::Design);
        let mut g = GrowthModel {
            model,
            surrogate,
            implant: ImplantMaterial::default(),
            bone: BoneLaw::default(),
            constants,
            smoothing: Smoothing::default(),
            bone_ssa: BoneSsa::default(),
            bone_growth: true,
            initial: bone_density,
            design,
        };
        g.reset_initial();
        Ok(g)
    }

    fn reset_initial(&mut self) {
        let rho_min = self.constants.rho_min;
        for &e in &self.design {
            self.initial[e] = rho_min;
        }
    }

    /// Checks constants and the initial densities; call after changing fields.
    pub fn validate(&mut self) -> Result<()> {
        self.constants.validate()?;
        self.smoothing.validate()?;
        self.reset_initial();
        let c = &self.constants;
        for (e, &r) in self.initial.iter().enumerate() {
            if self.model.mesh().label(e) == Domain::Bone && !(r >= c.rho_min && r <= c.rho_max) {
                return Err(Error::OutOfDomain {
                    quantity: "initial bone density",
                    value: r,
                    lo: c.rho_min,
                    hi: c.rho_max,
                });
            }
        }
        Ok(())
    }

    pub fn model(&self) -> &StaticModel {
        &self.model
    }

    pub fn surrogate(&self) -> &PropertySurrogate {
        &self.surrogate
    }

    pub fn design_elements(&self) -> &[usize] {
        &self.design
    }

    pub fn initial_density(&self) -> &[f64] {
        &self.initial
    }

    fn cycles(&self) -> Vec<f64> {
        self.model.cases().iter().map(|c| c.cycles_per_day).collect()
    }

    /// Stiffness of every element at densities `rho`; `tau` is read on
    /// design elements only.
    pub fn materials(&self, tau: &[f64], rho: &[f64]) -> Result<Vec<ElementMaterial>> {
        let mesh = self.model.mesh();
        let (lo, hi) = self.surrogate.rho_domain();
        let implant = self.implant.tensor();
        (0..mesh.element_count())
            .into_par_iter()
            .map(|e| {
                let (c, d_rho, d_tau) = match mesh.label(e) {
                    Domain::Inert => (implant, Tensor6::zeros(), Tensor6::zeros()),
                    Domain::Bone => (self.bone.tensor(rho[e]), self.bone.tensor_derivative(rho[e]), Tensor6::zeros()),
                    Domain::Design => {
                        let clamped = rho[e].clamp(lo, hi);
                        let t = self.surrogate.eval(tau[e], clamped)?;
                        let d_rho = if rho[e] > lo && rho[e] < hi { t.d_rho } else { Tensor6::zeros() };
                        (t.c, d_rho, t.d_tau)
                    }
                };
                Ok(ElementMaterial {
                    c,
                    d_rho,
                    d_tau,
                    modulus: modulus_proxy(&c),
                })
            })
            .collect()
    }

    /// Density update of element `e` from its energies.
    pub fn local_update(&self, e: usize, rho: f64, tau: f64, energies: &[f64], modulus: f64) -> Result<LocalUpdate> {
        let c = &self.constants;
        let label = self.model.mesh().label(e);
        if label == Domain::Inert || (label == Domain::Bone && !self.bone_growth) {
            return Ok(LocalUpdate::frozen(rho, energies.len()));
        }
        let stim = laws::stimulus_from_energy(energies, &self.cycles(), modulus, rho, c);
        let (rdot, drdot) = laws::deposition_rate(stim.psi, c, &self.smoothing);
        let (s_eff, ssa, dssa_rho, dssa_tau) = match label {
            Domain::Design => {
                let (s_d, ds_d) = self.surrogate.eval_scalar(Scalar::Ssa, tau)?;
                let (s, ds_rho, ds_sd) = laws::implant_ssa(rho, s_d, &self.bone_ssa, c);
                (c.s_eff_implant, s, ds_rho, ds_sd * ds_d)
            }
            _ => {
                let (s, ds) = self.bone_ssa.eval(rho, c.rho_max);
                (c.s_eff_bone, s, ds, 0.0)
            }
        };
        let k = s_eff * 1e-3 * c.rho_max;
        let rho_dot = k * ssa * rdot;
        let (rho_next, dcap) = laws::smooth_min(c.rho_max, rho + rho_dot * c.dt, self.smoothing.cap_overshoot());
        let scale = dcap * c.dt * k;
        // dṙ vanishes wherever the stimulus partials are singular
        let via_psi = if drdot == 0.0 { 0.0 } else { scale * ssa * drdot };
        Ok(LocalUpdate {
            rho_next,
            d_rho: dcap + scale * dssa_rho * rdot + via_psi * stim.d_rho,
            d_energy: stim.d_energy.iter().map(|d| via_psi * d).collect(),
            d_modulus: via_psi * stim.d_modulus,
            d_tau: scale * dssa_tau * rdot,
        })
    }

    /// Solves the mechanics at `rho` and computes the next densities.
    pub fn step(&self, tau: &[f64], rho: &[f64]) -> Result<StepData<'_>> {
        let materials = self.materials(tau, rho)?;
        let tensors: Vec<Tensor6> = materials.iter().map(|m| m.c).collect();
        let factors = self.model.factorize(&tensors)?;
        let displacements = (0..self.model.cases().len())
            .map(|case| self.model.solve(&factors, case))
            .collect::<Result<Vec<_>>>()?;
        let energies: Vec<Vec<f64>> = displacements
            .iter()
            .map(|u| self.model.strain_energy_density(&tensors, u))
            .collect();
        let ne = rho.len();
        let updates = (0..ne)
            .into_par_iter()
            .map(|e| {
                let u: Vec<f64> = energies.iter().map(|c| c[e]).collect();
                self.local_update(e, rho[e], tau[e], &u, materials[e].modulus)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(StepData {
            materials,
            tensors,
            factors,
            displacements,
            energies,
            updates,
        })
    }

    /// Porosity of each design element; zero elsewhere.
    pub fn porosities(&self, tau: &[f64]) -> Result<Vec<(f64, f64)>> {
        let mut out = vec![(0.0, 0.0); tau.len()];
        for &e in &self.design {
            out[e] = self.surrogate.eval_scalar(Scalar::Porosity, tau[e])?;
        }
        Ok(out)
    }

    /// (m_f in mg, g_m in %) for densities `rho`.
    pub fn mass_growth(&self, tau: &[f64], rho: &[f64]) -> Result<(f64, f64)> {
        let xi = self.porosities(tau)?;
        let mesh = self.model.mesh();
        let mut grown = 0.0;
        let mut capacity = 0.0;
        for &e in &self.design {
            let v = xi[e].0 * mesh.volume(e);
            grown += (rho[e] - self.initial[e]) * v;
            capacity += self.constants.rho_max * v;
        }
        // g/cc · mm³ = mg
        Ok((grown, 100.0 * grown / capacity))
    }

    /// Runs the full horizon for the element thicknesses `tau`.
    pub fn simulate(&self, tau: &[f64], snapshot_every: usize) -> Result<SimulationResult> {
        let ne = self.model.mesh().element_count();
        if tau.len() != ne {
            return Err(Error::Config(format!("{} thicknesses for {ne} elements", tau.len())));
        }
        let mut rho = self.initial.clone();
        let mut history = Vec::with_capacity(self.constants.steps());
        let mut snapshots = Vec::new();
        if snapshot_every > 0 {
            snapshots.push((0, rho.clone()));
        }
        for step in 0..self.constants.steps() {
            let data = self.step(tau, &rho).map_err(|e| step_error(step, e))?;
            rho = data.updates.iter().map(|u| u.rho_next).collect();
            check_finite(step, &rho)?;
            history.push(self.mass_growth(tau, &rho)?.1);
            if snapshot_every > 0 && (step + 1) % snapshot_every == 0 {
                snapshots.push((step + 1, rho.clone()));
            }
        }
        let (mass_growth, growth_percent) = self.mass_growth(tau, &rho)?;
        let final_compliance = self.compliance(tau, &rho)?;
        Ok(SimulationResult {
            final_density: rho,
            mass_growth,
            growth_percent,
            history,
            final_compliance,
            snapshots,
        })
    }

    /// `½ f·u` for every load case at densities `rho`.
    pub fn compliance(&self, tau: &[f64], rho: &[f64]) -> Result<Vec<f64>> {
        let tensors: Vec<Tensor6> = self.materials(tau, rho)?.iter().map(|m| m.c).collect();
        let u = self.model.solve_all(&tensors)?;
        Ok(u.iter().enumerate().map(|(c, u)| self.model.compliance(c, u)).collect())
    }
}

fn step_error(step: usize, e: Error) -> Error {
    match e {
        Error::Numerical(m) => Error::Numerical(format!("step {step}: {m}")),
        other => other,
    }
}

pub(crate) fn check_finite(step: usize, rho: &[f64]) -> Result<()> {
    if let Some(e) = rho.iter().position(|r| !r.is_finite()) {
        return Err(Error::Numerical(format!("non-finite density in element {e} at step {step}")));
    }
    Ok(())
}
