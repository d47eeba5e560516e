//! Periodic tricubic Catmull-Rom interpolation of voxel-centred samples.

use crate::Point3;

/// C¹ interpolant of an `n³` periodic sample grid whose sample `(i, j, k)`
/// sits at `((i, j, k) + ½)·h`.
pub struct PeriodicCubic<'a> {
    n: usize,
    h: f64,
    values: &'a [f64],
}

fn weights(t: f64) -> ([f64; 4], [f64; 4]) {
    let t2 = t * t;
    let t3 = t2 * t;
    (
        [
            0.5 * (-t3 + 2.0 * t2 - t),
            0.5 * (3.0 * t3 - 5.0 * t2 + 2.0),
            0.5 * (-3.0 * t3 + 4.0 * t2 + t),
            0.5 * (t3 - t2),
        ],
        [
            0.5 * (-3.0 * t2 + 4.0 * t - 1.0),
            0.5 * (9.0 * t2 - 10.0 * t),
            0.5 * (-9.0 * t2 + 8.0 * t + 1.0),
            0.5 * (3.0 * t2 - 2.0 * t),
        ],
    )
}

impl<'a> PeriodicCubic<'a> {
    pub fn new(resolution: usize, spacing: f64, values: &'a [f64]) -> Self {
        assert_eq!(values.len(), resolution.pow(3));
        PeriodicCubic {
            n: resolution,
            h: spacing,
            values,
        }
    }

    /// Value and gradient at `x`; any point is wrapped into the period.
    pub fn eval(&self, x: &Point3) -> (f64, Point3) {
        let n = self.n as isize;
        let mut base = [0isize; 3];
        let mut w = [[0.0; 4]; 3];
        let mut dw = [[0.0; 4]; 3];
        for d in 0..3 {
            let s = x[d] / self.h - 0.5;
            let fl = s.floor();
            base[d] = fl as isize - 1;
            let (a, b) = weights(s - fl);
            w[d] = a;
            dw[d] = b.map(|v| v / self.h);
        }
        let mut value = 0.0;
        let mut grad = [0.0; 3];
        for c in 0..4 {
            let k = (base[2] + c as isize).rem_euclid(n) as usize;
            for b in 0..4 {
                let j = (base[1] + b as isize).rem_euclid(n) as usize;
                for a in 0..4 {
                    let i = (base[0] + a as isize).rem_euclid(n) as usize;
                    let v = self.values[i + self.n * (j + self.n * k)];
                    value += w[0][a] * w[1][b] * w[2][c] * v;
                    grad[0] += dw[0][a] * w[1][b] * w[2][c] * v;
                    grad[1] += w[0][a] * dw[1][b] * w[2][c] * v;
                    grad[2] += w[0][a] * w[1][b] * dw[2][c] * v;
                }
            }
        }
        (value, grad)
    }
}
