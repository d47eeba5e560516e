//! Constituent materials and 6×6 elasticity tensors in Voigt notation.
//!
//! Component order is (11, 22, 33, 23, 13, 12) with engineering shear
//! strains, so `σ = C ε` and the strain energy density is `½ εᵀ C ε`.

use nalgebra::Matrix6;
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

pub type Tensor6 = Matrix6<f64>;

/// Isotropic stiffness from Young's modulus (MPa) and Poisson's ratio.
pub fn isotropic_tensor(youngs: f64, poisson: f64) -> Tensor6 {
    let lambda = youngs * poisson / ((1.0 + poisson) * (1.0 - 2.0 * poisson));
    let mu = youngs / (2.0 * (1.0 + poisson));
    let mut c = Tensor6::zeros();
    for i in 0..3 {
        for j in 0..3 {
            c[(i, j)] = lambda;
        }
        c[(i, i)] = lambda + 2.0 * mu;
        c[(i + 3, i + 3)] = mu;
    }
    c
}

/// Solid implant material (defaults: Ti-6Al-4V, 114 GPa, ν = 0.3).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct ImplantMaterial {
    pub youngs_mpa: f64,
    pub poisson: f64,
}

impl Default for ImplantMaterial {
    fn default() -> Self {
        ImplantMaterial {
            youngs_mpa: 114_000.0,
            poisson: 0.3,
        }
    }
}

impl ImplantMaterial {
    pub fn tensor(&self) -> Tensor6 {
        isotropic_tensor(self.youngs_mpa, self.poisson)
    }
}

/// Isotropic bone with `E = coefficient · ρ^exponent` (ρ in g/cc, E in MPa).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct BoneLaw {
    pub coefficient_mpa: f64,
    pub exponent: f64,
    pub poisson: f64,
}

impl Default for BoneLaw {
    fn default() -> Self {
        BoneLaw {
            coefficient_mpa: 3790.0,
            exponent: 3.0,
            poisson: 0.3,
        }
    }
}

impl BoneLaw {
    pub fn modulus(&self, rho: f64) -> f64 {
        self.coefficient_mpa * rho.powf(self.exponent)
    }

    pub fn modulus_derivative(&self, rho: f64) -> f64 {
        self.coefficient_mpa * self.exponent * rho.powf(self.exponent - 1.0)
    }

    pub fn tensor(&self, rho: f64) -> Tensor6 {
        isotropic_tensor(self.modulus(rho), self.poisson)
    }

    /// dC/dρ; the tensor is linear in E.
    pub fn tensor_derivative(&self, rho: f64) -> Tensor6 {
        isotropic_tensor(self.modulus_derivative(rho), self.poisson)
    }
}

/// The 21 independent entries of a symmetric 6×6 tensor, row-major upper
/// triangle.
pub const UPPER_ENTRIES: [(usize, usize); 21] = {
    let mut out = [(0, 0); 21];
    let mut k = 0;
    let mut i = 0;
    while i < 6 {
        let mut j = i;
        while j < 6 {
            out[k] = (i, j);
            k += 1;
            j += 1;
        }
        i += 1;
    }
    out
};

pub fn from_upper(entries: &[f64; 21]) -> Tensor6 {
    let mut c = Tensor6::zeros();
    for (k, &(i, j)) in UPPER_ENTRIES.iter().enumerate() {
        c[(i, j)] = entries[k];
        c[(j, i)] = entries[k];
    }
    c
}

pub fn to_upper(c: &Tensor6) -> [f64; 21] {
    let mut out = [0.0; 21];
    for (k, &(i, j)) in UPPER_ENTRIES.iter().enumerate() {
        out[k] = 0.5 * (c[(i, j)] + c[(j, i)]);
    }
    out
}

/// Scalar stiffness used to turn strain energy into an effective stress.
///
/// Harmonic mean of the three axial Young's moduli `1/S_ii` (S = C⁻¹); equals
/// `E` for an isotropic tensor.
pub fn modulus_proxy(c: &Tensor6) -> f64 {
    let s = c.try_inverse().expect("elasticity tensor must be invertible");
    3.0 / (s[(0, 0)] + s[(1, 1)] + s[(2, 2)])
}

/// Directional derivative of [`modulus_proxy`] along `dc`.
pub fn modulus_proxy_derivative(c: &Tensor6, dc: &Tensor6) -> f64 {
    let s = c.try_inverse().expect("elasticity tensor must be invertible");
    let trace = s[(0, 0)] + s[(1, 1)] + s[(2, 2)];
    // dS = -S dC S
    let ds = -(s * dc * s);
    let dtrace = ds[(0, 0)] + ds[(1, 1)] + ds[(2, 2)];
    -3.0 * dtrace / (trace * trace)
}
