//! Closest point on the base surface.
//!
//! Works in scaled coordinates (period 2π). Starting points come from a
//! triangulation of the zero set; each start runs a Newton iteration on the
//! optimality system of `min ‖c − X‖ s.t. f(c) = 0` and the best converged
//! foot point wins.

use std::f64::consts::PI;
use std::sync::OnceLock;

use nalgebra::{Matrix4, Vector4};

use super::isosurface::PeriodicGrid;
use super::{to_scaled, Gyroid, LevelFunction};
use crate::{Error, Point3, Result};

const TWO_PI: f64 = 2.0 * PI;
const SEED_RESOLUTION: usize = 32;
const BUCKETS: usize = 16;
const STARTS: usize = 3;

/// Foot point on the base surface and the distance to it, both in mm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClosestPoint {
    pub point: Point3,
    pub distance: f64,
}

pub struct DistanceSolver {
    level: Box<dyn LevelFunction + Send>,
    buckets: Vec<Vec<Point3>>,
}

impl DistanceSolver {
    pub fn new(level: Box<dyn LevelFunction + Send>) -> Self {
        let n = SEED_RESOLUTION;
        let h = TWO_PI / n as f64;
        let mut values = vec![0.0; n * n * n];
        for k in 0..n {
            for j in 0..n {
                for i in 0..n {
                    values[i + n * (j + n * k)] = level.value(&[i as f64 * h, j as f64 * h, k as f64 * h]);
                }
            }
        }
        let grid = PeriodicGrid {
            resolution: n,
            spacing: h,
            origin: [0.0; 3],
            values: &values,
        };
        let mut buckets = vec![Vec::new(); BUCKETS * BUCKETS * BUCKETS];
        for tri in grid.triangulate(0.0) {
            let mut c = [0.0; 3];
            for v in &tri {
                for d in 0..3 {
                    c[d] += v[d] / 3.0;
                }
            }
            let Some(c) = project_along_gradient(level.as_ref(), c) else {
                continue;
            };
            let c = c.map(wrap);
            buckets[bucket_index(&c)].push(c);
        }
        DistanceSolver { level, buckets }
    }

    /// Closest base-surface point to `x` (mm) for cell size `a`.
    pub fn closest(&self, x: &Point3, cell_size: f64) -> Result<ClosestPoint> {
        let target = to_scaled(x, cell_size);
        let scaled = self.closest_scaled(&target)?;
        let s = cell_size / TWO_PI;
        Ok(ClosestPoint {
            point: scaled.point.map(|c| c * s),
            distance: scaled.distance * s,
        })
    }

    fn closest_scaled(&self, x: &Point3) -> Result<ClosestPoint> {
        let seeds = self.nearest_seeds(x);
        if seeds.is_empty() {
            return Err(Error::Numerical("distance solver has no surface seeds".into()));
        }
        let bound = dist(&seeds[0], x);
        // a foot point can never be farther than a known surface point
        let pick = |cands: Vec<Point3>| {
            cands
                .into_iter()
                .map(|c| ClosestPoint { point: c, distance: dist(&c, x) })
                .filter(|c| c.distance <= bound * (1.0 + 1e-9) + 1e-12)
                .min_by(|a, b| a.distance.total_cmp(&b.distance))
        };
        let mut best = pick(seeds.iter().filter_map(|s| self.kkt_newton(x, s)).collect());
        if best.is_none() {
            best = pick(seeds.iter().filter_map(|s| self.alternating_projection(x, s)).collect());
        }
        best.ok_or_else(|| Error::Numerical(format!("closest-point search failed from every start at {x:?}")))
    }

    // k nearest seeds under the minimum-image convention, shifted next to x
    fn nearest_seeds(&self, x: &Point3) -> Vec<Point3> {
        let w = x.map(wrap);
        let shift = [x[0] - w[0], x[1] - w[1], x[2] - w[2]];
        let bs = TWO_PI / BUCKETS as f64;
        let home = [0, 1, 2].map(|d| ((w[d] / bs) as usize).min(BUCKETS - 1) as isize);
        let mut found: Vec<(f64, Point3)> = Vec::with_capacity(STARTS + 1);
        let b = BUCKETS as isize;
        for ring in 0..=(BUCKETS as isize / 2) {
            for dk in -ring..=ring {
                for dj in -ring..=ring {
                    let on_shell = dk.abs() == ring || dj.abs() == ring;
                    let di_step = if on_shell { 1 } else { (2 * ring).max(1) };
                    let mut di = -ring;
                    while di <= ring {
                        let idx = [home[0] + di, home[1] + dj, home[2] + dk].map(|v| v.rem_euclid(b) as usize);
                        for s in &self.buckets[idx[0] + BUCKETS * (idx[1] + BUCKETS * idx[2])] {
                            let img = min_image(s, &w);
                            let d = dist(&img, &w);
                            if found.len() < STARTS || d < found[found.len() - 1].0 {
                                let pos = found.partition_point(|e| e.0 <= d);
                                found.insert(pos, (d, img));
                                found.truncate(STARTS);
                            }
                        }
                        di += di_step;
                    }
                }
            }
            // every unvisited bucket is at least `ring` widths away
            if found.len() == STARTS && found[STARTS - 1].0 <= ring as f64 * bs {
                break;
            }
        }
        found
            .into_iter()
            .map(|(_, p)| [p[0] + shift[0], p[1] + shift[1], p[2] + shift[2]])
            .collect()
    }

    fn kkt_newton(&self, x: &Point3, seed: &Point3) -> Option<Point3> {
        let f = self.level.as_ref();
        let mut c = *seed;
        let g = f.gradient(&c);
        let gg = dot(&g, &g);
        let mut lambda = (0..3).map(|d| (x[d] - c[d]) * g[d]).sum::<f64>() / gg;
        let residual = |c: &Point3, lambda: f64| -> Vector4<f64> {
            let g = f.gradient(c);
            Vector4::new(
                c[0] - x[0] + lambda * g[0],
                c[1] - x[1] + lambda * g[1],
                c[2] - x[2] + lambda * g[2],
                f.value(c),
            )
        };
        let mut r = residual(&c, lambda);
        for _ in 0..60 {
            let scale = 1.0 + dist(&c, x);
            if r.fixed_rows::<3>(0).norm() < 1e-12 * scale && r[3].abs() < 1e-13 {
                return Some(c);
            }
            let g = f.gradient(&c);
            let h = f.hessian(&c);
            let mut jac = Matrix4::zeros();
            for i in 0..3 {
                for j in 0..3 {
                    jac[(i, j)] = lambda * h[i][j] + if i == j { 1.0 } else { 0.0 };
                }
                jac[(i, 3)] = g[i];
                jac[(3, i)] = g[i];
            }
            let step = jac.lu().solve(&(-r))?;
            let mut t = 1.0;
            let r0 = r.norm();
            loop {
                let cand = [c[0] + t * step[0], c[1] + t * step[1], c[2] + t * step[2]];
                let lc = lambda + t * step[3];
                let rc = residual(&cand, lc);
                if rc.norm() < r0 || t < 1e-4 {
                    c = cand;
                    lambda = lc;
                    r = rc;
                    break;
                }
                t *= 0.5;
            }
        }
        None
    }

    fn alternating_projection(&self, x: &Point3, seed: &Point3) -> Option<Point3> {
        let f = self.level.as_ref();
        let mut c = *seed;
        for _ in 0..500 {
            let g = f.gradient(&c);
            let gg = dot(&g, &g);
            let off = [x[0] - c[0], x[1] - c[1], x[2] - c[2]];
            let along = dot(&off, &g) / gg;
            let tangent = [0, 1, 2].map(|d| c[d] + off[d] - along * g[d]);
            let next = project_along_gradient(f, tangent)?;
            let moved = dist(&next, &c);
            c = next;
            if moved < 1e-13 {
                return Some(c);
            }
        }
        None
    }
}

fn project_along_gradient(f: &dyn LevelFunction, mut c: Point3) -> Option<Point3> {
    for _ in 0..50 {
        let v = f.value(&c);
        if v.abs() < 1e-14 {
            return Some(c);
        }
        let g = f.gradient(&c);
        let gg = dot(&g, &g);
        if gg < 1e-20 {
            return None;
        }
        for d in 0..3 {
            c[d] -= v * g[d] / gg;
        }
    }
    (f.value(&c).abs() < 1e-12).then_some(c)
}

fn wrap(v: f64) -> f64 {
    let w = v.rem_euclid(TWO_PI);
    if w >= TWO_PI {
        0.0
    } else {
        w
    }
}

fn bucket_index(p: &Point3) -> usize {
    let bs = TWO_PI / BUCKETS as f64;
    let i = p.map(|v| ((v / bs) as usize).min(BUCKETS - 1));
    i[0] + BUCKETS * (i[1] + BUCKETS * i[2])
}

fn min_image(s: &Point3, x: &Point3) -> Point3 {
    [0, 1, 2].map(|d| s[d] - TWO_PI * ((s[d] - x[d]) / TWO_PI).round())
}

fn dot(a: &Point3, b: &Point3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn dist(a: &Point3, b: &Point3) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

pub(crate) fn gyroid_solver() -> &'static DistanceSolver {
    static SOLVER: OnceLock<DistanceSolver> = OnceLock::new();
    SOLVER.get_or_init(|| DistanceSolver::new(Box::new(Gyroid)))
}

/// Distance (mm) from `x` to the gyroid base surface of cell size `a`.
pub fn distance_to_base(x: &Point3, cell_size: f64) -> Result<f64> {
    Ok(gyroid_solver().closest(x, cell_size)?.distance)
}
