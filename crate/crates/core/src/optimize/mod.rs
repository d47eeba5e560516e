//! Maximizing in-growth mass under a lattice volume fraction limit.

mod config;
pub mod mma;
pub mod report;

use std::time::Instant;

use log::info;
use serde::{Deserialize, Serialize};

pub use config::{
    attainable_range, DensitySpec, GridSpec, LoadCaseSpec, Manufacturing, MeshSpec, OptimizerSettings, Problem,
    ProblemConfig, SupportSpec,
};

use crate::design::DesignMap;
use crate::growth::SimulationResult;
use crate::sensitivity::{objective, objective_and_gradient, Evaluation};
use crate::surrogate::PropertySurrogate;
use crate::{Error, Result};

/// Thickness τ with V_f(τ·1) = target, by bisection to 1e-4 in V_f.
pub fn uniform_thickness(map: &DesignMap, surrogate: &PropertySurrogate, target: f64) -> Result<f64> {
    let g = map.grid();
    let vf = |t: f64| map.volume_fraction(&g.uniform(t), surrogate).map(|r| r.0);
    let (mut lo, mut hi) = (g.tau_min, g.tau_max);
    let (vlo, vhi) = (vf(lo)?, vf(hi)?);
    if target < vlo - 1e-12 || target > vhi + 1e-12 {
        return Err(Error::Config(format!(
            "volume fraction {target} is not attainable; uniform designs span [{vlo:.4}, {vhi:.4}]"
        )));
    }
    if target <= vlo + 1e-4 {
        return Ok(lo);
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let v = vf(mid)?;
        if (v - target).abs() < 1e-4 {
            return Ok(mid);
        }
        if v < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Uniform-thickness design at a target volume fraction.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Baseline {
    pub tau: f64,
    pub volume_fraction: f64,
    pub simulation: SimulationResult,
}

pub fn run_uniform_baseline(problem: &Problem, target: f64) -> Result<Baseline> {
    let surrogate = problem.growth.surrogate();
    let tau = uniform_thickness(&problem.map, surrogate, target)?;
    let z = problem.map.grid().uniform(tau);
    let volume_fraction = problem.map.volume_fraction(&z, surrogate)?.0;
    let simulation = problem.growth.simulate(&problem.map.element_thickness(&z), 0)?;
    Ok(Baseline {
        tau,
        volume_fraction,
        simulation,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub mass_growth: f64,
    pub growth_percent: f64,
    pub volume_fraction: f64,
    pub mass_gradient_norm: f64,
    pub volume_gradient_norm: f64,
    /// Norm of dm_f/dz over the variables free to move uphill; zero at a
    /// stationary point when the volume limit is inactive.
    pub projected_gradient_norm: f64,
    pub constraint_active: bool,
    /// Candidates rejected by the safeguard before this iterate was accepted.
    pub rejections: usize,
    pub move_limit_mm: f64,
    pub max_change_mm: f64,
    pub wall_time_s: f64,
    pub z: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    MaxIterations,
    StepTolerance,
    /// Every candidate within the shrinking move limit lost objective or
    /// violated the volume limit.
    NoImprovingStep,
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub z: Vec<f64>,
    pub evaluation: Evaluation,
    pub trace: Vec<TraceRow>,
    pub termination: Termination,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn projected_norm(map: &DesignMap, z: &[f64], grad: &[f64]) -> f64 {
    let g = map.grid();
    map.active_indices()
        .into_iter()
        .filter(|&j| !(z[j] <= g.tau_min && grad[j] < 0.0) && !(z[j] >= g.tau_max && grad[j] > 0.0))
        .map(|j| grad[j] * grad[j])
        .sum::<f64>()
        .sqrt()
}

/// Maximizes m_f subject to V_f ≤ V*, starting from the uniform design at V*.
/// Every row is passed to `observer` as soon as it is accepted.
pub fn optimize(problem: &Problem, observer: &mut dyn FnMut(&TraceRow) -> Result<()>) -> Result<Outcome> {
    let s = problem.config.optimizer;
    let target = problem.config.volume_fraction_limit;
    let map = &problem.map;
    let growth = &problem.growth;
    let g = map.grid();
    let range = g.tau_max - g.tau_min;
    let start = Instant::now();

    let tau0 = uniform_thickness(map, growth.surrogate(), target)?;
    let mut z = g.uniform(tau0);
    map.normalize(&mut z);
    let active = map.active_indices();
    let mut eval = objective_and_gradient(growth, map, &z)?;
    let row = |it: usize, e: &Evaluation, z: &[f64], rejections: usize, step: f64, change: f64| TraceRow {
        iteration: it,
        mass_growth: e.mass_growth,
        growth_percent: e.growth_percent,
        volume_fraction: e.volume_fraction,
        mass_gradient_norm: norm(&e.d_mass_growth),
        volume_gradient_norm: norm(&e.d_volume_fraction),
        projected_gradient_norm: projected_norm(map, z, &e.d_mass_growth),
        constraint_active: e.volume_fraction >= target - s.feasibility_tolerance,
        rejections,
        move_limit_mm: step,
        max_change_mm: change,
        wall_time_s: start.elapsed().as_secs_f64(),
        z: z.to_vec(),
    };
    let mut trace = vec![row(0, &eval, &z, 0, s.move_limit * range, 0.0)];
    observer(&trace[0])?;
    info!(
        "start: τ = {tau0:.4} mm, m_f = {:.4} mg, g_m = {:.3}%, V_f = {:.4}",
        eval.mass_growth, eval.growth_percent, eval.volume_fraction
    );

    let lo = vec![g.tau_min; active.len()];
    let hi = vec![g.tau_max; active.len()];
    let mut mma = mma::Mma::new(active.len(), s.asymptote_init, s.asymptote_increase, s.asymptote_decrease);
    let mut termination = Termination::MaxIterations;
    for it in 1..=s.max_iterations {
        if active.is_empty() {
            termination = Termination::StepTolerance;
            break;
        }
        let scale = eval.mass_growth.abs().max(1e-12);
        let x: Vec<f64> = active.iter().map(|&j| z[j]).collect();
        let g0: Vec<f64> = active.iter().map(|&j| -eval.d_mass_growth[j] / scale).collect();
        let g1: Vec<f64> = active.iter().map(|&j| eval.d_volume_fraction[j]).collect();
        let point = mma::Point {
            x: &x,
            f0_grad: &g0,
            f1: eval.volume_fraction - target,
            f1_grad: &g1,
        };
        let mut step = s.move_limit * range;
        let mut rejections = 0;
        let accepted = loop {
            let cand = mma.step(&point, &lo, &hi, step);
            let mut zc = z.clone();
            for (k, &j) in active.iter().enumerate() {
                zc[j] = cand[k];
            }
            map.normalize(&mut zc);
            // screen with a forward run; gradients only for accepted points
            let (mass, _, vf) = objective(growth, map, &zc)?;
            let feasible = vf <= target + s.feasibility_tolerance;
            let improving = mass >= eval.mass_growth - s.objective_tolerance * eval.mass_growth.abs();
            if feasible && improving {
                let ec = objective_and_gradient(growth, map, &zc)?;
                break Some((zc, ec));
            }
            rejections += 1;
            if rejections > s.max_rejections {
                break None;
            }
            step *= 0.5;
            mma.reset();
        };
        let Some((zn, en)) = accepted else {
            termination = Termination::NoImprovingStep;
            break;
        };
        mma.accept(&x);
        let change = zn.iter().zip(&z).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        z = zn;
        eval = en;
        let r = row(it, &eval, &z, rejections, step, change);
        observer(&r)?;
        info!(
            "iteration {it}: m_f = {:.4} mg, g_m = {:.3}%, V_f = {:.4}, max Δz = {:.2e} mm",
            eval.mass_growth, eval.growth_percent, eval.volume_fraction, change
        );
        trace.push(r);
        if change < s.step_tolerance_mm {
            termination = Termination::StepTolerance;
            break;
        }
    }
    Ok(Outcome {
        z,
        evaluation: eval,
        trace,
        termination,
    })
}

/// `z` with every active entry moved by a uniform random amount in
/// [−amplitude, amplitude], kept within the thickness bounds. Used to keep
/// finite-difference checks off the kinks of the smoothed operators.
pub fn jitter(map: &DesignMap, z: &[f64], amplitude: f64, seed: u64) -> Vec<f64> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let g = map.grid();
    let mut out = z.to_vec();
    for j in map.active_indices() {
        let d: f64 = rng.gen_range(-amplitude..=amplitude);
        out[j] = (z[j] + d).clamp(g.tau_min, g.tau_max);
    }
    out
}

/// Optimized design against the uniform designs at the achieved V_f and at V*.
#[derive(Debug, Clone)]
pub struct Comparison {
    pub row: report::SummaryRow,
    pub optimized: SimulationResult,
    pub uniform: Baseline,
    pub uniform_at_target: Baseline,
}

pub fn compare(problem: &Problem, outcome: &Outcome) -> Result<Comparison> {
    let target = problem.config.volume_fraction_limit;
    let optimized = problem.growth.simulate(&problem.map.element_thickness(&outcome.z), 0)?;
    let achieved = outcome.evaluation.volume_fraction.min(target);
    let uniform = run_uniform_baseline(problem, achieved)?;
    let uniform_at_target = run_uniform_baseline(problem, target)?;
    let c_opt: f64 = optimized.final_compliance.iter().sum();
    let c_uni: f64 = uniform.simulation.final_compliance.iter().sum();
    let row = report::SummaryRow {
        v_target: target,
        v_f_optimized: outcome.evaluation.volume_fraction,
        g_m_optimized_percent: optimized.growth_percent,
        m_f_optimized_mg: optimized.mass_growth,
        compliance_optimized_nmm: c_opt,
        tau_uniform_mm: uniform.tau,
        v_f_uniform: uniform.volume_fraction,
        g_m_uniform_percent: uniform.simulation.growth_percent,
        m_f_uniform_mg: uniform.simulation.mass_growth,
        compliance_uniform_nmm: c_uni,
        compliance_ratio: c_opt / c_uni,
        g_m_uniform_at_target_percent: uniform_at_target.simulation.growth_percent,
        iterations: outcome.trace.len() - 1,
    };
    Ok(Comparison {
        row,
        optimized,
        uniform,
        uniform_at_target,
    })
}
