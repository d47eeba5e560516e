//! Zero-thickness pore size: twice the smallest wall distance along the
//! passage centrelines, where the level function is stationary.

use log::warn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::field::UnitCellField;
use super::interp::PeriodicCubic;
use super::distance::gyroid_solver;
use super::{to_scaled, Gyroid, LevelFunction};
use crate::{Error, Point3, Result};

#[derive(Debug, Clone)]
pub struct PoreSearchOptions {
    pub starts: usize,
    pub seed: u64,
    /// Penalty weights applied in turn to ½‖∇f‖².
    pub penalties: Vec<f64>,
    /// Minimum |f| for an accepted centreline point.
    pub min_level: f64,
    /// Threshold on the finite-difference ‖∇f‖ for the grid scan.
    pub oracle_gradient_threshold: f64,
}

impl Default for PoreSearchOptions {
    fn default() -> Self {
        PoreSearchOptions {
            starts: 32,
            seed: 0x9e3779b97f4a7c15,
            penalties: vec![0.1, 1.0, 10.0, 100.0],
            min_level: 0.05,
            oracle_gradient_threshold: 0.2,
        }
    }
}

/// Result of one start.
#[derive(Debug, Clone, Copy)]
pub struct CentrelinePoint {
    pub point: Point3,
    pub distance: f64,
}

pub struct PoreSearch<'a> {
    field: &'a UnitCellField,
    interp: PeriodicCubic<'a>,
    options: PoreSearchOptions,
}

impl<'a> PoreSearch<'a> {
    pub fn new(field: &'a UnitCellField, options: PoreSearchOptions) -> Self {
        PoreSearch {
            field,
            interp: PeriodicCubic::new(field.resolution(), field.spacing(), field.distances()),
            options,
        }
    }

    fn grad_f(&self, x: &Point3) -> (f64, Point3, [[f64; 3]; 3]) {
        let a = self.field.cell_size();
        let s = 2.0 * std::f64::consts::PI / a;
        let xs = to_scaled(x, a);
        let g = Gyroid.gradient(&xs).map(|v| v * s);
        let h = Gyroid.hessian(&xs).map(|r| r.map(|v| v * s * s));
        (Gyroid.value(&xs), g, h)
    }

    // d̃ + μ/2‖∇f‖² and its gradient
    fn penalized(&self, x: &Point3, mu: f64) -> (f64, Point3) {
        let (d, dg) = self.interp.eval(x);
        let (_, g, h) = self.grad_f(x);
        let mut grad = dg;
        for i in 0..3 {
            for j in 0..3 {
                grad[i] += mu * h[i][j] * g[j];
            }
        }
        (d + 0.5 * mu * dot(&g, &g), grad)
    }

    fn descend(&self, mut x: Point3, mu: f64) -> Point3 {
        let a = self.field.cell_size();
        let mut step = 0.05 * a;
        let (mut val, mut grad) = self.penalized(&x, mu);
        for _ in 0..400 {
            let gn = dot(&grad, &grad).sqrt();
            if gn < 1e-10 {
                break;
            }
            let mut accepted = false;
            while step > 1e-12 * a {
                let cand = [0, 1, 2].map(|d| x[d] - step * grad[d] / gn);
                let (cv, cg) = self.penalized(&cand, mu);
                if cv < val - 1e-4 * step * gn {
                    x = cand;
                    val = cv;
                    grad = cg;
                    step *= 1.5;
                    accepted = true;
                    break;
                }
                step *= 0.5;
            }
            if !accepted {
                break;
            }
        }
        x
    }

    // Newton on ∇f = 0
    fn polish(&self, mut x: Point3) -> Option<Point3> {
        let a = self.field.cell_size();
        let s = 2.0 * std::f64::consts::PI / a;
        for _ in 0..50 {
            let (_, g, h) = self.grad_f(&x);
            if dot(&g, &g).sqrt() < 1e-11 * s {
                return Some(x);
            }
            let hm = nalgebra::Matrix3::from_fn(|i, j| h[i][j]);
            let step = hm.lu().solve(&nalgebra::Vector3::new(g[0], g[1], g[2]))?;
            if step.norm() > 0.25 * a {
                return None;
            }
            for d in 0..3 {
                x[d] -= step[d];
            }
        }
        None
    }

    fn run_start(&self, start: Point3) -> Option<CentrelinePoint> {
        let mut x = start;
        for &mu in &self.options.penalties {
            x = self.descend(x, mu * self.field.cell_size().powi(2));
        }
        let p = self.polish(x)?;
        let (f, _, _) = self.grad_f(&p);
        if f.abs() < self.options.min_level {
            return None;
        }
        // d̃ rounds off the crease of D along the centreline; the exact
        // distance at the stationary point is cheap and sharper
        let distance = gyroid_solver()
            .closest(&p, self.field.cell_size())
            .map(|c| c.distance)
            .unwrap_or_else(|_| self.interp.eval(&p).0);
        Some(CentrelinePoint { point: p, distance })
    }

    /// Converged runs from random starts in the void.
    pub fn centreline_points(&self) -> Vec<CentrelinePoint> {
        let f = self.field;
        let n = f.resolution();
        let mut sorted: Vec<f64> = f.distances().to_vec();
        sorted.sort_by(f64::total_cmp);
        let median = sorted[sorted.len() / 2];
        let mut rng = ChaCha8Rng::seed_from_u64(self.options.seed);
        let mut starts = Vec::with_capacity(self.options.starts);
        let mut attempts = 0;
        while starts.len() < self.options.starts && attempts < 1000 * self.options.starts {
            attempts += 1;
            let idx = rng.gen_range(0..n * n * n);
            if f.distances()[idx] >= median {
                let (i, j, k) = (idx % n, (idx / n) % n, idx / (n * n));
                let c = f.centroid(i, j, k);
                let h = f.spacing();
                starts.push([0, 1, 2].map(|d| c[d] + h * (rng.gen::<f64>() - 0.5)));
            }
        }
        starts.into_iter().filter_map(|s| self.run_start(s)).collect()
    }

    /// p₀ from the multi-start search, or from the grid scan if every start fails.
    pub fn p0(&self) -> Result<f64> {
        let points = self.centreline_points();
        match points.iter().map(|p| p.distance).min_by(f64::total_cmp) {
            Some(d) => Ok(2.0 * d),
            None => {
                warn!("pore search: no start converged; using the grid scan");
                self.brute_force_p0()
            }
        }
    }

    /// Exhaustive scan: smallest D among voxels whose central-difference
    /// ‖∇f‖ (scaled coordinates) is below the threshold and no larger than at
    /// any of the 26 neighbours.
    pub fn brute_force_p0(&self) -> Result<f64> {
        let f = self.field;
        let n = f.resolution();
        let a = f.cell_size();
        let e = 1e-5 * a;
        let level = |p: &Point3| Gyroid.value(&to_scaled(p, a));
        let mut grad_norm = vec![0.0; n * n * n];
        for k in 0..n {
            for j in 0..n {
                for i in 0..n {
                    let x = f.centroid(i, j, k);
                    let mut g2 = 0.0;
                    for d in 0..3 {
                        let mut xp = x;
                        let mut xm = x;
                        xp[d] += e;
                        xm[d] -= e;
                        let gd = (level(&xp) - level(&xm)) / (2.0 * e) * a / (2.0 * std::f64::consts::PI);
                        g2 += gd * gd;
                    }
                    grad_norm[i + n * (j + n * k)] = g2.sqrt();
                }
            }
        }
        let at = |i: isize, j: isize, k: isize| {
            let w = |v: isize| v.rem_euclid(n as isize) as usize;
            grad_norm[w(i) + n * (w(j) + n * w(k))]
        };
        let mut best = f64::INFINITY;
        for k in 0..n as isize {
            for j in 0..n as isize {
                for i in 0..n as isize {
                    let g = at(i, j, k);
                    if g >= self.options.oracle_gradient_threshold {
                        continue;
                    }
                    let x = f.centroid(i as usize, j as usize, k as usize);
                    if level(&x).abs() < self.options.min_level {
                        continue;
                    }
                    let local_min = (-1..=1).all(|dk| {
                        (-1..=1).all(|dj| (-1..=1).all(|di| at(i + di, j + dj, k + dk) >= g))
                    });
                    if local_min {
                        best = best.min(f.distance(i as usize, j as usize, k as usize));
                    }
                }
            }
        }
        if best.is_finite() {
            Ok(2.0 * best)
        } else {
            Err(Error::Numerical("pore grid scan found no stationary voxels".into()))
        }
    }
}

fn dot(a: &Point3, b: &Point3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}
