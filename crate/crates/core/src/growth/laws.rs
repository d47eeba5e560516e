//! Pointwise growth laws. Every map returns its value together with the
//! partial derivatives the direct sensitivities need.

use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Growth model constants. Rates are per day, lengths in µm where noted.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(default, deny_unknown_fields)]
pub struct GrowthConstants {
    pub m: f64,
    /// Ψ* (MPa/day).
    #[serde(rename = "psi_ref_mpa_per_day")]
    pub psi_ref: f64,
    /// Dead band half width w (MPa/day).
    #[serde(rename = "dead_band_mpa_per_day")]
    pub dead_band: f64,
    /// c_s (µm/MPa).
    #[serde(rename = "rate_coefficient_um_per_mpa")]
    pub rate_coefficient: f64,
    /// ρ̂_b (g/cc).
    #[serde(rename = "rho_max_g_cc")]
    pub rho_max: f64,
    /// ρ̃_b (g/cc).
    #[serde(rename = "rho_min_g_cc")]
    pub rho_min: f64,
    pub s_eff_bone: f64,
    pub s_eff_implant: f64,
    /// Δt (days).
    #[serde(rename = "dt_days")]
    pub dt: f64,
    /// Simulated period (days).
    #[serde(rename = "horizon_days")]
    pub horizon: f64,
}

impl Default for GrowthConstants {
    fn default() -> Self {
        GrowthConstants {
            m: 4.0,
            psi_ref: 50.0,
            dead_band: 12.5,
            rate_coefficient: 0.02,
            rho_max: 1.92,
            rho_min: 0.05,
            s_eff_bone: 0.2,
            s_eff_implant: 0.6,
            dt: 1.0,
            horizon: 56.0,
        }
    }
}

impl GrowthConstants {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("m", self.m),
            ("psi_ref", self.psi_ref),
            ("dead_band", self.dead_band),
            ("rate_coefficient", self.rate_coefficient),
            ("rho_max", self.rho_max),
            ("rho_min", self.rho_min),
            ("s_eff_bone", self.s_eff_bone),
            ("s_eff_implant", self.s_eff_implant),
            ("dt", self.dt),
            ("horizon", self.horizon),
        ];
        if let Some((name, v)) = positive.iter().find(|(_, v)| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::Config(format!("growth constant {name} must be positive, got {v}")));
        }
        if self.rho_min >= self.rho_max {
            return Err(Error::Config("rho_min must be below rho_max".into()));
        }
        if self.dead_band >= self.psi_ref {
            return Err(Error::Config("dead band must be narrower than the reference stimulus".into()));
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        (self.horizon / self.dt).round() as usize
    }
}

/// Widths of the smoothed Heaviside and of the density cap.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(default, deny_unknown_fields)]
pub struct Smoothing {
    /// β ((g/cc)⁻¹); the cap overshoot is at most ln 2 / β.
    #[serde(rename = "beta_cc_per_g")]
    pub beta: f64,
    /// ε_H (MPa/day).
    #[serde(rename = "heaviside_width_mpa_per_day")]
    pub heaviside_width: f64,
}

impl Default for Smoothing {
    fn default() -> Self {
        Smoothing {
            beta: 200.0,
            heaviside_width: 1.0,
        }
    }
}

impl Smoothing {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0 && self.heaviside_width > 0.0) {
            return Err(Error::Config("smoothing widths must be positive".into()));
        }
        Ok(())
    }

    pub fn cap_overshoot(&self) -> f64 {
        std::f64::consts::LN_2 / self.beta
    }
}

/// Bone specific surface area as a polynomial in the volume fraction
/// `v = ρ/ρ̂_b`: `S_b = Σ c_k v^k`, k = 1..=5 (mm⁻¹).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct BoneSsa {
    #[serde(rename = "coefficients_per_mm")]
    pub coefficients: [f64; 5],
}

impl Default for BoneSsa {
    /// Surface density fit for human bone from the remodeling literature.
    fn default() -> Self {
        BoneSsa {
            coefficients: [32.3, -93.9, 134.0, -101.0, 28.8],
        }
    }
}

impl BoneSsa {
    /// (S_b, dS_b/dρ).
    pub fn eval(&self, rho: f64, rho_max: f64) -> (f64, f64) {
        let v = rho / rho_max;
        let mut s = 0.0;
        let mut ds = 0.0;
        for (k, c) in self.coefficients.iter().enumerate().rev() {
            let p = (k + 1) as f64;
            s = s * v + c;
            ds = ds * v + p * c;
        }
        // Horner above built Σ c_k v^{k-1} and Σ k c_k v^{k-1}
        (s * v, ds / rho_max)
    }
}

/// `Ĥ(x)`: 0 for x ≤ 0, 1 for x ≥ ε, cubic smoothstep between. Returns (Ĥ, Ĥ′).
pub fn growth_heaviside(x: f64, width: f64) -> (f64, f64) {
    if x <= 0.0 {
        (0.0, 0.0)
    } else if x >= width {
        (1.0, 0.0)
    } else {
        let s = x / width;
        (s * s * (3.0 - 2.0 * s), 6.0 * s * (1.0 - s) / width)
    }
}

/// C¹ cap used as the smooth minimum `min̂(cap, x)`.
///
/// Identity up to `cap`, then a cubic Hermite rise to `cap + ε` with zero end
/// slope. It never returns less than `min(x, cap + ε)`, so repeated updates
/// with a nonnegative increment cannot lower the density. Returns (value,
/// ∂/∂x).
pub fn smooth_min(cap: f64, x: f64, overshoot: f64) -> (f64, f64) {
    let t = (x - cap) / overshoot;
    if t <= 0.0 {
        (x, 1.0)
    } else if t >= 1.0 {
        (cap + overshoot, 0.0)
    } else {
        // h(t) = t + t² − t³
        let h = t + t * t - t * t * t;
        let dh = (1.0 - t) * (1.0 + 3.0 * t);
        (cap + overshoot * h, dh)
    }
}

/// Ψ from per-load energies. Evaluating `σ̄^m = (2 E U)^{m/2}` directly keeps
/// the map differentiable at zero strain.
#[derive(Debug, Clone, PartialEq)]
pub struct Stimulus {
    pub psi: f64,
    pub d_rho: f64,
    pub d_energy: Vec<f64>,
    pub d_modulus: f64,
}

pub fn stimulus_from_energy(energies: &[f64], cycles: &[f64], modulus: f64, rho: f64, c: &GrowthConstants) -> Stimulus {
    let half_m = 0.5 * c.m;
    let mut sum = 0.0;
    let mut d_energy: Vec<f64> = Vec::with_capacity(energies.len());
    let mut d_modulus = 0.0;
    for (&u, &n) in energies.iter().zip(cycles) {
        let u = u.max(0.0);
        let base = 2.0 * modulus * u;
        let term = n * base.powf(half_m);
        sum += term;
        // d(term)/dU and d(term)/dE
        let dbase = if base > 0.0 { n * half_m * base.powf(half_m - 1.0) } else { 0.0 };
        d_energy.push(dbase * 2.0 * modulus);
        d_modulus += dbase * 2.0 * u;
    }
    let density = (c.rho_max / rho).powi(2);
    if sum <= 0.0 {
        return Stimulus {
            psi: 0.0,
            d_rho: 0.0,
            d_energy: vec![0.0; energies.len()],
            d_modulus: 0.0,
        };
    }
    let root = sum.powf(1.0 / c.m);
    let psi = density * root;
    let d_sum = density * root / (c.m * sum);
    Stimulus {
        psi,
        d_rho: -2.0 * psi / rho,
        d_energy: d_energy.iter().map(|d| d * d_sum).collect(),
        d_modulus: d_modulus * d_sum,
    }
}

/// `Ψ = (ρ̂_b/ρ)² (Σ n_i σ̄_i^m)^{1/m}`.
pub fn stimulus(sigma_bars: &[f64], cycles: &[f64], rho: f64, c: &GrowthConstants) -> f64 {
    let sum: f64 = sigma_bars.iter().zip(cycles).map(|(s, n)| n * s.max(0.0).powf(c.m)).sum();
    (c.rho_max / rho).powi(2) * sum.powf(1.0 / c.m)
}

/// `ṙ = c_s ΔΨ Ĥ(ΔΨ)` in µm/day, with ΔΨ = Ψ − Ψ* − w. Returns (ṙ, dṙ/dΨ).
pub fn deposition_rate(psi: f64, c: &GrowthConstants, s: &Smoothing) -> (f64, f64) {
    let delta = psi - c.psi_ref - c.dead_band;
    let (h, dh) = growth_heaviside(delta, s.heaviside_width);
    (c.rate_coefficient * delta * h, c.rate_coefficient * (h + delta * dh))
}

/// `ρ̇ = S_eff S ṙ ρ̂_b` in g/cc/day (ṙ converted from µm to mm).
pub fn density_rate(ssa: f64, s_eff: f64, rdot: f64, c: &GrowthConstants) -> f64 {
    s_eff * ssa * rdot * 1e-3 * c.rho_max
}

/// `S = (ρ̃_b/ρ) S_d + S_b(ρ)`. Returns (S, ∂S/∂ρ, ∂S/∂S_d).
pub fn implant_ssa(rho: f64, s_d: f64, bone: &BoneSsa, c: &GrowthConstants) -> (f64, f64, f64) {
    let (sb, dsb) = bone.eval(rho, c.rho_max);
    let ratio = c.rho_min / rho;
    (ratio * s_d + sb, -ratio / rho * s_d + dsb, ratio)
}
