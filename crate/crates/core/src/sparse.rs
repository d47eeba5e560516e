//! Symmetric sparse assembly and Cholesky solves.
//!
//! The lower triangle is stored column-compressed. The sparsity pattern, the
//! element scatter map and the symbolic factorization are built once per
//! mesh and support set; every assembly only refills the numeric values.

use std::sync::OnceLock;

use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::{Llt, SymbolicLlt};
use faer::sparse::{SparseColMatRef, SymbolicSparseColMat};
use faer::{Mat, Side};
use rayon::prelude::*;

use crate::{Error, Result};

/// Marks an element degree of freedom that is not an unknown.
pub const FIXED: u32 = u32::MAX;

const ELEMENT_CHUNK: usize = 256;

pub struct Assembly {
    n: usize,
    dofs_per_element: usize,
    element_dofs: Vec<u32>,
    symbolic: SymbolicSparseColMat<usize>,
    // position in the value array of every local lower-triangle pair (i ≥ j)
    scatter: Vec<u32>,
    llt_symbolic: OnceLock<std::result::Result<SymbolicLlt<usize>, String>>,
}

impl Assembly {
    /// `element_dofs` holds `dofs_per_element` unknown indices per element,
    /// with [`FIXED`] for eliminated ones.
    pub fn new(n: usize, dofs_per_element: usize, element_dofs: Vec<u32>) -> Self {
        let m = dofs_per_element;
        assert_eq!(element_dofs.len() % m, 0);
        let mut cols: Vec<Vec<u32>> = vec![Vec::new(); n];
        for e in element_dofs.chunks(m) {
            for &r in e {
                for &c in e {
                    if r != FIXED && c != FIXED && r >= c {
                        cols[c as usize].push(r);
                    }
                }
            }
        }
        let mut col_ptr = Vec::with_capacity(n + 1);
        col_ptr.push(0usize);
        let mut row_idx = Vec::new();
        for c in &mut cols {
            c.sort_unstable();
            c.dedup();
            row_idx.extend(c.iter().map(|&r| r as usize));
            col_ptr.push(row_idx.len());
        }
        drop(cols);
        let pairs = m * (m + 1) / 2;
        let mut scatter = vec![FIXED; pairs * (element_dofs.len() / m)];
        scatter
            .par_chunks_mut(pairs)
            .zip(element_dofs.par_chunks(m))
            .for_each(|(out, e)| {
                let mut p = 0;
                for i in 0..m {
                    for j in 0..=i {
                        let (a, b) = (e[i], e[j]);
                        if a != FIXED && b != FIXED {
                            let (r, c) = if a >= b { (a, b) } else { (b, a) };
                            let col = &row_idx[col_ptr[c as usize]..col_ptr[c as usize + 1]];
                            let off = col.binary_search(&(r as usize)).expect("pattern covers element");
                            out[p] = (col_ptr[c as usize] + off) as u32;
                        }
                        p += 1;
                    }
                }
            });
        let symbolic = SymbolicSparseColMat::new_checked(n, n, col_ptr, None, row_idx);
        Assembly {
            n,
            dofs_per_element: m,
            element_dofs,
            symbolic,
            scatter,
            llt_symbolic: OnceLock::new(),
        }
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.symbolic.row_idx().len()
    }

    pub fn element_count(&self) -> usize {
        self.element_dofs.len() / self.dofs_per_element
    }

    pub fn element_dofs(&self, e: usize) -> &[u32] {
        let m = self.dofs_per_element;
        &self.element_dofs[e * m..(e + 1) * m]
    }

    /// Lower-triangle values from full row-major element matrices.
    /// Element matrices are computed in parallel and summed in element order,
    /// so the result does not depend on the thread count.
    pub fn assemble<F>(&self, element_matrix: F) -> Vec<f64>
    where
        F: Fn(usize, &mut [f64]) + Sync,
    {
        let m = self.dofs_per_element;
        let pairs = m * (m + 1) / 2;
        let ne = self.element_count();
        let mut values = vec![0.0; self.nnz()];
        let mut starts = (0..ne).step_by(ELEMENT_CHUNK);
        let mut buffer = Vec::new();
        loop {
            let chunk: Vec<usize> = starts.by_ref().take(rayon::current_num_threads().max(1)).collect();
            if chunk.is_empty() {
                break;
            }
            chunk
                .par_iter()
                .map(|&s| {
                    let end = (s + ELEMENT_CHUNK).min(ne);
                    let mut ke = vec![0.0; m * m];
                    let mut packed = Vec::with_capacity((end - s) * pairs);
                    for e in s..end {
                        ke.iter_mut().for_each(|v| *v = 0.0);
                        element_matrix(e, &mut ke);
                        for i in 0..m {
                            for j in 0..=i {
                                packed.push(ke[i * m + j]);
                            }
                        }
                    }
                    (s, packed)
                })
                .collect_into_vec(&mut buffer);
            for (s, packed) in buffer.drain(..) {
                let map = &self.scatter[s * pairs..s * pairs + packed.len()];
                for (&pos, v) in map.iter().zip(packed) {
                    if pos != FIXED {
                        values[pos as usize] += v;
                    }
                }
            }
        }
        values
    }

    /// `y = K x` for the symmetric matrix stored by its lower triangle.
    pub fn matvec(&self, values: &[f64], x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        let col_ptr = self.symbolic.col_ptr();
        let row_idx = self.symbolic.row_idx();
        for c in 0..self.n {
            for p in col_ptr[c]..col_ptr[c + 1] {
                let r = row_idx[p];
                y[r] += values[p] * x[c];
                if r != c {
                    y[c] += values[p] * x[r];
                }
            }
        }
        y
    }

    pub fn diagonal(&self, values: &[f64]) -> Vec<f64> {
        let col_ptr = self.symbolic.col_ptr();
        let row_idx = self.symbolic.row_idx();
        (0..self.n)
            .map(|c| {
                (col_ptr[c]..col_ptr[c + 1])
                    .find(|&p| row_idx[p] == c)
                    .map_or(0.0, |p| values[p])
            })
            .collect()
    }

    /// Cholesky factorization reusing the symbolic analysis.
    pub fn factor(&self, values: Vec<f64>) -> Result<Factor<'_>> {
        let symbolic = self
            .llt_symbolic
            .get_or_init(|| SymbolicLlt::try_new(self.symbolic.as_ref(), Side::Lower).map_err(|e| format!("{e:?}")))
            .as_ref()
            .map_err(|e| Error::Numerical(format!("symbolic factorization failed: {e}")))?;
        let matrix = SparseColMatRef::new(self.symbolic.as_ref(), &values);
        let llt = Llt::try_new_with_symbolic(symbolic.clone(), matrix, Side::Lower)
            .map_err(|e| Error::Numerical(format!("stiffness matrix is not positive definite ({e:?})")))?;
        Ok(Factor {
            assembly: self,
            values,
            llt,
        })
    }
}

/// A factorized matrix together with the values it was built from, so solves
/// can verify and refine their residuals.
pub struct Factor<'a> {
    assembly: &'a Assembly,
    values: Vec<f64>,
    llt: Llt<usize, f64>,
}

impl Factor<'_> {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        self.assembly.matvec(&self.values, x)
    }

    /// Solves every column of `rhs` to relative residual `tolerance`,
    /// refining iteratively up to three times.
    pub fn solve_columns(&self, rhs: &[Vec<f64>], tolerance: f64) -> Result<Vec<Vec<f64>>> {
        self.solve_columns_refined(rhs, tolerance, 4)
    }

    /// As [`Factor::solve_columns`] with `sweeps` residual checks.
    pub fn solve_columns_refined(&self, rhs: &[Vec<f64>], tolerance: f64, sweeps: usize) -> Result<Vec<Vec<f64>>> {
        let n = self.assembly.n;
        if rhs.is_empty() {
            return Ok(Vec::new());
        }
        let mut b = Mat::<f64>::zeros(n, rhs.len());
        for (j, col) in rhs.iter().enumerate() {
            for i in 0..n {
                b[(i, j)] = col[i];
            }
        }
        self.llt.solve_in_place(b.as_mut());
        let mut out: Vec<Vec<f64>> = (0..rhs.len()).map(|j| (0..n).map(|i| b[(i, j)]).collect()).collect();
        for (j, x) in out.iter_mut().enumerate() {
            self.refine(&rhs[j], x, tolerance, sweeps)?;
        }
        Ok(out)
    }

    pub fn solve(&self, rhs: &[f64], tolerance: f64) -> Result<Vec<f64>> {
        Ok(self.solve_columns(std::slice::from_ref(&rhs.to_vec()), tolerance)?.remove(0))
    }

    fn refine(&self, b: &[f64], x: &mut [f64], tolerance: f64, sweeps: usize) -> Result<()> {
        let norm_b = norm(b);
        if norm_b == 0.0 {
            x.iter_mut().for_each(|v| *v = 0.0);
            return Ok(());
        }
        let mut history = Vec::new();
        for _ in 0..sweeps.max(1) {
            let kx = self.matvec(x);
            let r: Vec<f64> = b.iter().zip(&kx).map(|(b, k)| b - k).collect();
            let rel = norm(&r) / norm_b;
            history.push(rel);
            if rel < tolerance {
                return Ok(());
            }
            let mut c = Mat::<f64>::zeros(r.len(), 1);
            for (i, v) in r.iter().enumerate() {
                c[(i, 0)] = *v;
            }
            self.llt.solve_in_place(c.as_mut());
            for (i, v) in x.iter_mut().enumerate() {
                *v += c[(i, 0)];
            }
        }
        Err(Error::SolverDivergence { tolerance, history })
    }
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
