//! Method of moving asymptotes for one inequality constraint.
//!
//! Minimizes f₀(x) subject to f₁(x) ≤ 0 and box bounds. With a single
//! constraint the dual of the convex separable subproblem is a concave
//! function of one multiplier λ, so it is solved by bisection on λ.

/// Asymptote state carried between iterations.
#[derive(Debug, Clone)]
pub struct Mma {
    lower: Vec<f64>,
    upper: Vec<f64>,
    history: Vec<Vec<f64>>,
    pub init: f64,
    pub increase: f64,
    pub decrease: f64,
}

/// Linearization data at the current point.
pub struct Point<'a> {
    pub x: &'a [f64],
    pub f0_grad: &'a [f64],
    pub f1: f64,
    pub f1_grad: &'a [f64],
}

impl Mma {
    pub fn new(n: usize, init: f64, increase: f64, decrease: f64) -> Self {
        Mma {
            lower: vec![0.0; n],
            upper: vec![0.0; n],
            history: Vec::new(),
            init,
            increase,
            decrease,
        }
    }

    /// Forgets the iterate history so the next asymptotes start at `init`.
    pub fn reset(&mut self) {
        self.history.clear();
    }

    /// Records an accepted iterate.
    pub fn accept(&mut self, x: &[f64]) {
        self.history.push(x.to_vec());
        if self.history.len() > 2 {
            self.history.remove(0);
        }
    }

    fn update_asymptotes(&mut self, x: &[f64], lo: &[f64], hi: &[f64]) {
        let n = x.len();
        match self.history.as_slice() {
            [older, old] if older.len() == n && old.len() == n => {
                for j in 0..n {
                    let range = hi[j] - lo[j];
                    let s = (x[j] - old[j]) * (old[j] - older[j]);
                    let gamma = if s > 0.0 {
                        self.increase
                    } else if s < 0.0 {
                        self.decrease
                    } else {
                        1.0
                    };
                    let mut l = x[j] - gamma * (old[j] - self.lower[j]);
                    let mut u = x[j] + gamma * (self.upper[j] - old[j]);
                    l = l.clamp(x[j] - 10.0 * range, x[j] - 0.01 * range);
                    u = u.clamp(x[j] + 0.01 * range, x[j] + 10.0 * range);
                    self.lower[j] = l;
                    self.upper[j] = u;
                }
            }
            _ => {
                for j in 0..n {
                    let range = hi[j] - lo[j];
                    self.lower[j] = x[j] - self.init * range;
                    self.upper[j] = x[j] + self.init * range;
                }
            }
        }
    }

    /// Solves the subproblem at `p` with per-variable move limit `step`
    /// (absolute) and returns the new point, which always lies in the bounds.
    pub fn step(&mut self, p: &Point<'_>, lo: &[f64], hi: &[f64], step: f64) -> Vec<f64> {
        let n = p.x.len();
        self.update_asymptotes(p.x, lo, hi);
        let (l, u) = (&self.lower, &self.upper);
        let mut alpha = vec![0.0; n];
        let mut beta = vec![0.0; n];
        let mut p0 = vec![0.0; n];
        let mut q0 = vec![0.0; n];
        let mut p1 = vec![0.0; n];
        let mut q1 = vec![0.0; n];
        let mut r1 = p.f1;
        for j in 0..n {
            let x = p.x[j];
            let range = (hi[j] - lo[j]).max(1e-12);
            alpha[j] = lo[j].max(l[j] + 0.1 * (x - l[j])).max(x - step);
            beta[j] = hi[j].min(u[j] - 0.1 * (u[j] - x)).min(x + step);
            if alpha[j] > beta[j] {
                alpha[j] = x;
                beta[j] = x;
            }
            let (ux, xl) = (u[j] - x, x - l[j]);
            let g0 = p.f0_grad[j];
            let reg = 1e-5 / range;
            p0[j] = ux * ux * (1.001 * g0.max(0.0) + 0.001 * (-g0).max(0.0) + reg);
            q0[j] = xl * xl * (0.001 * g0.max(0.0) + 1.001 * (-g0).max(0.0) + reg);
            let g1 = p.f1_grad[j];
            p1[j] = ux * ux * g1.max(0.0);
            q1[j] = xl * xl * (-g1).max(0.0);
            r1 -= p1[j] / ux + q1[j] / xl;
        }
        let solve = |lambda: f64| -> Vec<f64> {
            (0..n)
                .map(|j| {
                    let a = (p0[j] + lambda * p1[j]).sqrt();
                    let b = (q0[j] + lambda * q1[j]).sqrt();
                    let x = (b * u[j] + a * l[j]) / (a + b);
                    x.clamp(alpha[j], beta[j])
                })
                .collect()
        };
        let constraint = |x: &[f64]| -> f64 {
            r1 + (0..n).map(|j| p1[j] / (u[j] - x[j]) + q1[j] / (x[j] - l[j])).sum::<f64>()
        };
        let x0 = solve(0.0);
        if constraint(&x0) <= 0.0 {
            return x0;
        }
        let mut hi_l = 1.0;
        let mut x_hi = solve(hi_l);
        let mut grow = 0;
        while constraint(&x_hi) > 0.0 && grow < 200 {
            hi_l *= 2.0;
            x_hi = solve(hi_l);
            grow += 1;
        }
        if constraint(&x_hi) > 0.0 {
            // the subproblem is infeasible within the move limits; take the
            // point that reduces the constraint the most
            return x_hi;
        }
        let mut lo_l = 0.0;
        for _ in 0..200 {
            let mid = 0.5 * (lo_l + hi_l);
            if constraint(&solve(mid)) > 0.0 {
                lo_l = mid;
            } else {
                hi_l = mid;
            }
            if hi_l - lo_l <= 1e-14 * hi_l {
                break;
            }
        }
        solve(hi_l)
    }
}
