//! Direct differentiation of the transient growth simulation.
//!
//! Alongside each forward step the derivative of every element density with
//! respect to every active control point is carried forward. The step's
//! stiffness factorization is reused for the pseudo-load solves
//! `K du/dz_j = −(dK/dz_j) u`, one column per variable and load case.

use rayon::prelude::*;
use serde::Serialize;

use crate::design::DesignMap;
use crate::growth::{check_finite, GrowthModel, StepData};
use crate::material::{modulus_proxy_derivative, Tensor6};
use crate::surrogate::Scalar;
use crate::{Error, Result};

/// Objective and constraint with their gradients over all control points.
#[derive(Debug, Clone)]
pub struct Evaluation {
    /// m_f (mg).
    pub mass_growth: f64,
    /// g_m (%).
    pub growth_percent: f64,
    pub volume_fraction: f64,
    pub d_mass_growth: Vec<f64>,
    pub d_growth_percent: Vec<f64>,
    pub d_volume_fraction: Vec<f64>,
    pub final_density: Vec<f64>,
    pub history: Vec<f64>,
}

/// Forward simulation of design `z` without gradients.
pub fn objective(growth: &GrowthModel, map: &DesignMap, z: &[f64]) -> Result<(f64, f64, f64)> {
    let tau = map.element_thickness(z);
    let run = growth.simulate(&tau, 0)?;
    let (vf, _) = map.volume_fraction(z, growth.surrogate())?;
    Ok((run.mass_growth, run.growth_percent, vf))
}

/// Forward simulation with direct sensitivities for the active variables.
pub fn objective_and_gradient(growth: &GrowthModel, map: &DesignMap, z: &[f64]) -> Result<Evaluation> {
    let mesh = growth.model().mesh();
    let ne = mesh.element_count();
    let vars = map.active_indices();
    let nv = vars.len();
    let tau = map.element_thickness(z);

    // dτ_e/dz_j for the active variables, per element
    let mut tau_weights: Vec<Vec<(usize, f64)>> = vec![Vec::new(); ne];
    let slot: Vec<Option<usize>> = {
        let mut s = vec![None; z.len()];
        for (k, &j) in vars.iter().enumerate() {
            s[j] = Some(k);
        }
        s
    };
    for (&e, w) in map.elements().iter().zip(map.weights()) {
        tau_weights[e] = w.iter().filter_map(|(i, wi)| slot[i].map(|k| (k, wi))).collect();
    }

    let mut rho = growth.initial_density().to_vec();
    // dρ_e/dz_k, element-major
    let mut sens = vec![0.0; ne * nv];
    let mut history = Vec::with_capacity(growth.constants.steps());
    for step in 0..growth.constants.steps() {
        let data = growth.step(&tau, &rho)?;
        sens = propagate(growth, &data, &tau_weights, &sens, nv, step)?;
        rho = data.updates.iter().map(|u| u.rho_next).collect();
        check_finite(step, &rho)?;
        history.push(growth.mass_growth(&tau, &rho)?.1);
    }

    let (mass, percent) = growth.mass_growth(&tau, &rho)?;
    let c = &growth.constants;
    let mut d_mass = vec![0.0; z.len()];
    let mut capacity = 0.0;
    let mut d_capacity = vec![0.0; z.len()];
    let initial = growth.initial_density();
    for (&e, w) in map.elements().iter().zip(map.weights()) {
        let (xi, dxi) = growth.surrogate().eval_scalar(Scalar::Porosity, tau[e])?;
        let v = mesh.volume(e);
        capacity += c.rho_max * xi * v;
        for (k, &j) in vars.iter().enumerate() {
            d_mass[j] += xi * v * sens[e * nv + k];
        }
        for (i, wi) in w.iter() {
            d_mass[i] += (rho[e] - initial[e]) * v * dxi * wi;
            d_capacity[i] += c.rho_max * v * dxi * wi;
        }
    }
    let d_percent: Vec<f64> = d_mass
        .iter()
        .zip(&d_capacity)
        .map(|(dm, dc)| 100.0 * (dm / capacity - mass * dc / (capacity * capacity)))
        .collect();
    let (volume_fraction, d_volume_fraction) = map.volume_fraction(z, growth.surrogate())?;
    Ok(Evaluation {
        mass_growth: mass,
        growth_percent: percent,
        volume_fraction,
        d_mass_growth: d_mass,
        d_growth_percent: d_percent,
        d_volume_fraction,
        final_density: rho,
        history,
    })
}

/// One step of the sensitivity recursion.
fn propagate(
    growth: &GrowthModel,
    data: &StepData<'_>,
    tau_weights: &[Vec<(usize, f64)>],
    sens: &[f64],
    nv: usize,
    step: usize,
) -> Result<Vec<f64>> {
    let model = growth.model();
    let mesh = model.mesh();
    let ne = mesh.element_count();
    let ncase = model.cases().len();
    if nv == 0 {
        return Ok(Vec::new());
    }
    let d_tensor = |e: usize, k: usize| -> Tensor6 {
        let m = &data.materials[e];
        let mut dc = m.d_rho * sens[e * nv + k];
        if let Some(&(_, w)) = tau_weights[e].iter().find(|(kk, _)| *kk == k) {
            dc += m.d_tau * w;
        }
        dc
    };

    // du/dz_k for every case
    let mut du: Vec<Vec<Vec<f64>>> = Vec::with_capacity(ncase);
    for case in 0..ncase {
        let u = &data.displacements[case];
        let rhs: Vec<Vec<f64>> = (0..nv)
            .into_par_iter()
            .map(|k| {
                let mut r = vec![0.0; u.len()];
                for e in 0..ne {
                    let dc = d_tensor(e, k);
                    if dc.iter().all(|v| *v == 0.0) {
                        continue;
                    }
                    let fe = mesh.geometry(e).apply(&dc, &model.element_displacement(e, u));
                    model.scatter_add(e, &(-fe), &mut r);
                }
                r
            })
            .collect();
        du.push(model.solve_with(&data.factors, case, &rhs)?);
    }

    let out: Vec<Vec<f64>> = (0..ne)
        .into_par_iter()
        .map(|e| {
            let upd = &data.updates[e];
            let m = &data.materials[e];
            let geometry = mesh.geometry(e);
            let strains: Vec<_> = (0..ncase)
                .map(|c| geometry.centroid_strain(&model.element_displacement(e, &data.displacements[c])))
                .collect();
            (0..nv)
                .map(|k| {
                    let mut d = upd.d_rho * sens[e * nv + k];
                    if let Some(&(_, w)) = tau_weights[e].iter().find(|(kk, _)| *kk == k) {
                        d += upd.d_tau * w;
                    }
                    let needs_mechanics = upd.d_modulus != 0.0 || upd.d_energy.iter().any(|v| *v != 0.0);
                    if needs_mechanics {
                        let dc = d_tensor(e, k);
                        d += upd.d_modulus * modulus_proxy_derivative(&m.c, &dc);
                        for c in 0..ncase {
                            if upd.d_energy[c] == 0.0 {
                                continue;
                            }
                            let eps = &strains[c];
                            let deps = geometry.centroid_strain(&model.element_displacement(e, &du[c][k]));
                            let du_energy = eps.dot(&(m.c * deps)) + 0.5 * eps.dot(&(dc * eps));
                            d += upd.d_energy[c] * du_energy;
                        }
                    }
                    d
                })
                .collect()
        })
        .collect();
    let flat: Vec<f64> = out.into_iter().flatten().collect();
    if let Some(i) = flat.iter().position(|v| !v.is_finite()) {
        return Err(Error::Numerical(format!(
            "non-finite density sensitivity for element {} and active variable {} at step {step}",
            i / nv,
            i % nv
        )));
    }
    Ok(flat)
}

/// One component of a finite-difference gradient check.
#[derive(Debug, Clone, Serialize)]
pub struct GradientCheck {
    pub variable: usize,
    pub analytic_mass: f64,
    pub fd_mass: f64,
    pub analytic_volume: f64,
    pub fd_volume: f64,
}

impl GradientCheck {
    fn error(a: f64, fd: f64, scale: f64, filter: f64) -> f64 {
        // components far below the gradient's magnitude are compared absolutely
        if fd.abs().max(a.abs()) < filter * scale {
            (a - fd).abs() / scale
        } else {
            (a - fd).abs() / fd.abs().max(a.abs())
        }
    }
}

/// Worst relative errors (mass, volume) over `checks`, ignoring components
/// smaller than `filter` times the largest.
pub fn worst_errors(checks: &[GradientCheck], filter: f64) -> (f64, f64) {
    let scale = |f: fn(&GradientCheck) -> f64| checks.iter().map(|c| f(c).abs()).fold(0.0, f64::max).max(1e-300);
    let sm = scale(|c| c.fd_mass);
    let sv = scale(|c| c.fd_volume);
    checks.iter().fold((0.0, 0.0), |(m, v), c| {
        (
            f64::max(m, GradientCheck::error(c.analytic_mass, c.fd_mass, sm, filter)),
            f64::max(v, GradientCheck::error(c.analytic_volume, c.fd_volume, sv, filter)),
        )
    })
}

/// Central differences of m_f and V_f with step `h` (mm) on every active
/// variable, alongside the direct sensitivities at `z`.
pub fn check_gradients(growth: &GrowthModel, map: &DesignMap, z: &[f64], h: f64) -> Result<Vec<GradientCheck>> {
    let eval = objective_and_gradient(growth, map, z)?;
    let mut out = Vec::new();
    for j in map.active_indices() {
        let mut zp = z.to_vec();
        let mut zm = z.to_vec();
        zp[j] += h;
        zm[j] -= h;
        let (mp, _, vp) = objective(growth, map, &zp)?;
        let (mm, _, vm) = objective(growth, map, &zm)?;
        out.push(GradientCheck {
            variable: j,
            analytic_mass: eval.d_mass_growth[j],
            fd_mass: (mp - mm) / (2.0 * h),
            analytic_volume: eval.d_volume_fraction[j],
            fd_volume: (vp - vm) / (2.0 * h),
        });
    }
    Ok(out)
}
