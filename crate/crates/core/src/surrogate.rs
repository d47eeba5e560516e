//! Quadratic B-spline surrogates of the homogenized cell properties.
//!
//! Each quantity is interpolated on the sample sites. Interior knots sit
//! midway between interior sites, which gives a C¹ interpolant whose
//! collocation matrix is always nonsingular.

use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::homogenize::CellSample;
use crate::material::{from_upper, Tensor6};
use crate::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;

/// Quadratic B-spline basis on an open knot vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadraticBasis {
    knots: Vec<f64>,
}

impl QuadraticBasis {
    /// Basis interpolating at the strictly increasing `sites`.
    pub fn interpolating(sites: &[f64]) -> Result<Self> {
        let n = sites.len();
        if n < 2 || sites.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config("spline sites must be at least 2 strictly increasing values".into()));
        }
        let (lo, hi) = (sites[0], sites[n - 1]);
        let mut knots = vec![lo; 3];
        if n == 2 {
            // Bernstein basis; the fit pins it to the straight line
            knots.extend([hi; 3]);
            return Ok(QuadraticBasis { knots });
        }
        knots.extend((1..n - 2).map(|i| 0.5 * (sites[i] + sites[i + 1])));
        knots.extend([hi; 3]);
        Ok(QuadraticBasis { knots })
    }

    pub fn len(&self) -> usize {
        self.knots.len() - 3
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.knots[0], self.knots[self.knots.len() - 1])
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    /// First basis index and the three nonzero values and derivatives at `x`.
    pub fn eval(&self, x: f64) -> (usize, [f64; 3], [f64; 3]) {
        let t = &self.knots;
        let m = t.len();
        // span s with t[s] ≤ x < t[s+1], 2 ≤ s ≤ m − 4
        let s = (t[..m - 3].partition_point(|&k| k <= x)).clamp(3, m - 3) - 1;
        let (t0, t1, t2, t3) = (t[s - 1], t[s], t[s + 1], t[s + 2]);
        let d_lo = t2 - t0;
        let d_hi = t3 - t1;
        let h = t2 - t1;
        // degree-1 pieces
        let a = (t2 - x) / h;
        let b = (x - t1) / h;
        let n0 = a * (t2 - x) / d_lo;
        let n2 = b * (x - t1) / d_hi;
        let n1 = 1.0 - n0 - n2;
        let d0 = -2.0 * (t2 - x) / (h * d_lo);
        let d2 = 2.0 * (x - t1) / (h * d_hi);
        let d1 = -d0 - d2;
        (s - 2, [n0, n1, n2], [d0, d1, d2])
    }

    /// Second derivatives of the three active functions; constant per span.
    fn second_derivative(&self, x: f64) -> (usize, [f64; 3]) {
        let t = &self.knots;
        let m = t.len();
        let s = (t[..m - 3].partition_point(|&k| k <= x)).clamp(3, m - 3) - 1;
        let (t0, t1, t2, t3) = (t[s - 1], t[s], t[s + 1], t[s + 2]);
        let h = t2 - t1;
        let e0 = 2.0 / (h * (t2 - t0));
        let e2 = 2.0 / (h * (t3 - t1));
        (s - 2, [e0, -e0 - e2, e2])
    }

    fn collocation(&self, sites: &[f64]) -> DMatrix<f64> {
        let mut a = DMatrix::zeros(sites.len(), self.len());
        for (r, &x) in sites.iter().enumerate() {
            let (first, values, _) = self.eval(x);
            for (k, v) in values.iter().enumerate() {
                a[(r, first + k)] = *v;
            }
        }
        a
    }

    /// Coefficients interpolating `columns` (each of length `sites.len()`).
    fn solve(&self, sites: &[f64], columns: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if sites.len() == 2 {
            // three functions, two conditions: take the linear interpolant
            let mut out = DMatrix::zeros(3, columns.ncols());
            for c in 0..columns.ncols() {
                let (y0, y1) = (columns[(0, c)], columns[(1, c)]);
                out[(0, c)] = y0;
                out[(1, c)] = 0.5 * (y0 + y1);
                out[(2, c)] = y1;
            }
            return Ok(out);
        }
        self.collocation(sites)
            .lu()
            .solve(columns)
            .ok_or_else(|| Error::Numerical("singular spline collocation matrix".into()))
    }
}

/// Scalar spline in one variable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spline1 {
    basis: QuadraticBasis,
    coefficients: Vec<f64>,
}

impl Spline1 {
    pub fn interpolate(sites: &[f64], values: &[f64]) -> Result<Self> {
        let basis = QuadraticBasis::interpolating(sites)?;
        let y = DMatrix::from_column_slice(values.len(), 1, values);
        let c = basis.solve(sites, &y)?;
        Ok(Spline1 {
            basis,
            coefficients: c.column(0).iter().copied().collect(),
        })
    }

    pub fn domain(&self) -> (f64, f64) {
        self.basis.domain()
    }

    /// Value and derivative; no domain check.
    pub fn eval_unchecked(&self, x: f64) -> (f64, f64) {
        let (first, n, d) = self.basis.eval(x);
        let c = &self.coefficients[first..first + 3];
        (
            c[0] * n[0] + c[1] * n[1] + c[2] * n[2],
            c[0] * d[0] + c[1] * d[1] + c[2] * d[2],
        )
    }

    pub fn second_derivative(&self, x: f64) -> f64 {
        let (first, e) = self.basis.second_derivative(x);
        let c = &self.coefficients[first..first + 3];
        c[0] * e[0] + c[1] * e[1] + c[2] * e[2]
    }

    pub fn knots(&self) -> &[f64] {
        self.basis.knots()
    }
}

/// Tensor value with its partial derivatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TensorEval {
    pub c: Tensor6,
    pub d_tau: Tensor6,
    pub d_rho: Tensor6,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scalar {
    Porosity,
    Ssa,
}

/// Provenance of a fitted surrogate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitMetadata {
    pub format_version: u32,
    pub sample_count: usize,
    /// SHA-256 of the sample table the surrogate was fitted to.
    pub sample_table_sha256: Option<String>,
    /// Largest relative misfit at the sample points.
    pub max_relative_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropertySurrogate {
    tau: QuadraticBasis,
    rho: QuadraticBasis,
    /// `tau.len() × rho.len()` coefficient blocks, τ-major, 21 entries each.
    tensor: Vec<[f64; 21]>,
    porosity: Spline1,
    ssa: Spline1,
    pub metadata: FitMetadata,
}

fn unique_sorted(values: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut v: Vec<f64> = values.collect();
    v.sort_by(f64::total_cmp);
    v.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0));
    v
}

fn locate(sites: &[f64], x: f64) -> Option<usize> {
    sites
        .iter()
        .position(|&s| (s - x).abs() <= 1e-12 * s.abs().max(x.abs()).max(1.0))
}

impl PropertySurrogate {
    /// Fits all quantities to a complete tensor-product grid of samples.
    pub fn fit(samples: &[CellSample], sample_table_sha256: Option<String>) -> Result<Self> {
        let taus = unique_sorted(samples.iter().map(|s| s.tau));
        let rhos = unique_sorted(samples.iter().map(|s| s.rho_b));
        let mut grid: Vec<Option<&CellSample>> = vec![None; taus.len() * rhos.len()];
        for s in samples {
            let i = locate(&taus, s.tau).expect("site collected above");
            let j = locate(&rhos, s.rho_b).expect("site collected above");
            grid[i * rhos.len() + j] = Some(s);
        }
        let missing: Vec<(f64, f64)> = grid
            .iter()
            .enumerate()
            .filter(|(_, s)| s.is_none())
            .map(|(k, _)| (taus[k / rhos.len()], rhos[k % rhos.len()]))
            .collect();
        if !missing.is_empty() {
            return Err(Error::IncompleteGrid { missing });
        }
        if taus.len() < 2 || rhos.len() < 2 {
            return Err(Error::Config("surrogate needs at least 2 levels per factor".into()));
        }
        let grid: Vec<&CellSample> = grid.into_iter().map(Option::unwrap).collect();
        let (nt, nr) = (taus.len(), rhos.len());

        let tau_basis = QuadraticBasis::interpolating(&taus)?;
        let rho_basis = QuadraticBasis::interpolating(&rhos)?;
        // C = A_τ⁻¹ Y A_ρ⁻ᵀ, entry by entry
        let mut tensor = vec![[0.0; 21]; tau_basis.len() * rho_basis.len()];
        for k in 0..21 {
            let y = DMatrix::from_fn(nt, nr, |i, j| grid[i * nr + j].tensor[k]);
            let along_tau = tau_basis.solve(&taus, &y)?;
            let coef = rho_basis.solve(&rhos, &along_tau.transpose())?.transpose();
            for i in 0..coef.nrows() {
                for j in 0..coef.ncols() {
                    tensor[i * rho_basis.len() + j][k] = coef[(i, j)];
                }
            }
        }
        let porosity: Vec<f64> = (0..nt).map(|i| grid[i * nr].porosity).collect();
        let ssa: Vec<f64> = (0..nt).map(|i| grid[i * nr].ssa).collect();
        let mut out = PropertySurrogate {
            tau: tau_basis,
            rho: rho_basis,
            tensor,
            porosity: Spline1::interpolate(&taus, &porosity)?,
            ssa: Spline1::interpolate(&taus, &ssa)?,
            metadata: FitMetadata {
                format_version: FORMAT_VERSION,
                sample_count: samples.len(),
                sample_table_sha256,
                max_relative_residual: 0.0,
            },
        };
        out.metadata.max_relative_residual = samples
            .iter()
            .map(|s| {
                let c = out.eval_unchecked(s.tau, s.rho_b).c;
                let reference = from_upper(&s.tensor);
                (c - reference).norm() / reference.norm()
            })
            .fold(0.0, f64::max);
        Ok(out)
    }

    pub fn tau_domain(&self) -> (f64, f64) {
        self.tau.domain()
    }

    pub fn rho_domain(&self) -> (f64, f64) {
        self.rho.domain()
    }

    fn check(quantity: &'static str, value: f64, (lo, hi): (f64, f64)) -> Result<()> {
        let slack = 1e-12 * (hi - lo);
        if value.is_nan() || value < lo - slack || value > hi + slack {
            return Err(Error::OutOfDomain { quantity, value, lo, hi });
        }
        Ok(())
    }

    /// Effective tensor and its partials at (τ, ρ_b).
    pub fn eval(&self, tau: f64, rho_b: f64) -> Result<TensorEval> {
        Self::check("tau", tau, self.tau_domain())?;
        Self::check("rho_b", rho_b, self.rho_domain())?;
        Ok(self.eval_unchecked(tau, rho_b))
    }

    fn eval_unchecked(&self, tau: f64, rho_b: f64) -> TensorEval {
        let (it, nt, dt) = self.tau.eval(tau);
        let (ir, nr, dr) = self.rho.eval(rho_b);
        let stride = self.rho.len();
        let mut v = [0.0; 21];
        let mut vt = [0.0; 21];
        let mut vr = [0.0; 21];
        for a in 0..3 {
            for b in 0..3 {
                let coef = &self.tensor[(it + a) * stride + ir + b];
                let (w, wt, wr) = (nt[a] * nr[b], dt[a] * nr[b], nt[a] * dr[b]);
                for k in 0..21 {
                    v[k] += w * coef[k];
                    vt[k] += wt * coef[k];
                    vr[k] += wr * coef[k];
                }
            }
        }
        TensorEval {
            c: from_upper(&v),
            d_tau: from_upper(&vt),
            d_rho: from_upper(&vr),
        }
    }

    /// Porosity or specific surface area and its τ-derivative.
    pub fn eval_scalar(&self, which: Scalar, tau: f64) -> Result<(f64, f64)> {
        Self::check("tau", tau, self.tau_domain())?;
        Ok(self.spline(which).eval_unchecked(tau))
    }

    pub fn spline(&self, which: Scalar) -> &Spline1 {
        match which {
            Scalar::Porosity => &self.porosity,
            Scalar::Ssa => &self.ssa,
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::format(path, e.to_string()))?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let s: PropertySurrogate = serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))?;
        if s.metadata.format_version != FORMAT_VERSION {
            return Err(Error::format(
                path,
                format!("surrogate format version {} (expected {FORMAT_VERSION})", s.metadata.format_version),
            ));
        }
        if s.tensor.len() != s.tau.len() * s.rho.len() {
            return Err(Error::format(path, "coefficient count does not match the knot vectors"));
        }
        Ok(s)
    }

    /// Fails unless the surrogate was fitted to the table with this hash.
    pub fn verify_provenance(&self, sample_table_sha256: &str) -> Result<()> {
        match &self.metadata.sample_table_sha256 {
            Some(h) if h == sample_table_sha256 => Ok(()),
            other => Err(Error::Config(format!(
                "surrogate was fitted to sample table {other:?}, not {sample_table_sha256}"
            ))),
        }
    }
}
