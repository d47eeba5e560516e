//! Matrix-free Jacobi-preconditioned conjugate gradients for voxel cells too
//! large to factorize.

use crate::mech::hex8::{ElementMatrix, ElementVector};
use crate::sparse::{dot, norm, FIXED};
use crate::{Error, Result};

pub(super) struct VoxelOperator<'a> {
    pub dofs: &'a [u32],
    pub ndof: usize,
    pub element_matrix: &'a (dyn Fn(usize) -> ElementMatrix + Sync),
}

impl VoxelOperator<'_> {
    fn elements(&self) -> usize {
        self.dofs.len() / 24
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.ndof];
        for e in 0..self.elements() {
            let d = &self.dofs[24 * e..24 * e + 24];
            let xe = ElementVector::from_fn(|i, _| if d[i] == FIXED { 0.0 } else { x[d[i] as usize] });
            let ye = (self.element_matrix)(e) * xe;
            for i in 0..24 {
                if d[i] != FIXED {
                    y[d[i] as usize] += ye[i];
                }
            }
        }
        y
    }

    fn diagonal(&self) -> Vec<f64> {
        let mut diag = vec![0.0; self.ndof];
        for e in 0..self.elements() {
            let d = &self.dofs[24 * e..24 * e + 24];
            let k = (self.element_matrix)(e);
            for i in 0..24 {
                if d[i] != FIXED {
                    diag[d[i] as usize] += k[(i, i)];
                }
            }
        }
        diag
    }
}

pub(super) fn solve(op: &VoxelOperator<'_>, b: &[f64], tolerance: f64, max_iterations: usize) -> Result<Vec<f64>> {
    let n = op.ndof;
    let norm_b = norm(b);
    let mut x = vec![0.0; n];
    if norm_b == 0.0 {
        return Ok(x);
    }
    let inv_diag: Vec<f64> = op.diagonal().iter().map(|d| 1.0 / d).collect();
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(r, d)| r * d).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut history = Vec::new();
    for it in 0..max_iterations {
        let ap = op.apply(&p);
        let alpha = rz / dot(&p, &ap);
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rel = norm(&r) / norm_b;
        if it % 50 == 0 {
            history.push(rel);
        }
        if rel < tolerance {
            return Ok(x);
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    history.push(norm(&r) / norm_b);
    Err(Error::SolverDivergence { tolerance, history })
}
