//! Trilinear hexahedron with 2×2×2 Gauss integration.
//!
//! Node order follows VTK_HEXAHEDRON: the bottom face counter-clockwise, then
//! the top face. Strains are in Voigt order (11, 22, 33, 23, 13, 12) with
//! engineering shears, and element DOFs are node-major `3·a + d`.

use nalgebra::{Matrix3, SMatrix, SVector, Vector6};

use crate::material::Tensor6;
use crate::{Error, Point3, Result};

pub type BMatrix = SMatrix<f64, 6, 24>;
pub type ElementMatrix = SMatrix<f64, 24, 24>;
pub type ElementVector = SVector<f64, 24>;

pub const NATURAL: [[f64; 3]; 8] = [
    [-1.0, -1.0, -1.0],
    [1.0, -1.0, -1.0],
    [1.0, 1.0, -1.0],
    [-1.0, 1.0, -1.0],
    [-1.0, -1.0, 1.0],
    [1.0, -1.0, 1.0],
    [1.0, 1.0, 1.0],
    [-1.0, 1.0, 1.0],
];

const GAUSS: f64 = 0.577_350_269_189_625_8;

pub fn shape_functions(xi: &[f64; 3]) -> [f64; 8] {
    NATURAL.map(|n| 0.125 * (1.0 + n[0] * xi[0]) * (1.0 + n[1] * xi[1]) * (1.0 + n[2] * xi[2]))
}

fn natural_derivatives(xi: &[f64; 3]) -> [[f64; 3]; 8] {
    NATURAL.map(|n| {
        let a = 1.0 + n[0] * xi[0];
        let b = 1.0 + n[1] * xi[1];
        let c = 1.0 + n[2] * xi[2];
        [0.125 * n[0] * b * c, 0.125 * n[1] * a * c, 0.125 * n[2] * a * b]
    })
}

// Strain-displacement matrix and Jacobian determinant at one natural point.
fn b_matrix(nodes: &[Point3; 8], xi: &[f64; 3]) -> Result<(BMatrix, f64)> {
    let dn = natural_derivatives(xi);
    let mut jac = Matrix3::zeros();
    for (a, d) in dn.iter().enumerate() {
        for i in 0..3 {
            for j in 0..3 {
                jac[(i, j)] += d[i] * nodes[a][j];
            }
        }
    }
    let det = jac.determinant();
    if !(det > 0.0) {
        return Err(Error::Numerical(format!("non-positive Jacobian {det:e} at natural point {xi:?}")));
    }
    let inv = jac.try_inverse().expect("positive determinant");
    let mut b = BMatrix::zeros();
    for (a, d) in dn.iter().enumerate() {
        let g = inv * nalgebra::Vector3::new(d[0], d[1], d[2]);
        let c = 3 * a;
        b[(0, c)] = g[0];
        b[(1, c + 1)] = g[1];
        b[(2, c + 2)] = g[2];
        b[(3, c + 1)] = g[2];
        b[(3, c + 2)] = g[1];
        b[(4, c)] = g[2];
        b[(4, c + 2)] = g[0];
        b[(5, c)] = g[1];
        b[(5, c + 1)] = g[0];
    }
    Ok((b, det))
}

/// Precomputed kinematics of one element.
#[derive(Debug, Clone)]
pub struct ElementGeometry {
    pub gauss_b: [BMatrix; 8],
    /// Jacobian determinant times quadrature weight.
    pub gauss_weight: [f64; 8],
    pub centroid_b: BMatrix,
    pub volume: f64,
}

impl ElementGeometry {
    pub fn new(nodes: &[Point3; 8]) -> Result<Self> {
        let mut gauss_b = [BMatrix::zeros(); 8];
        let mut gauss_weight = [0.0; 8];
        for (g, n) in NATURAL.iter().enumerate() {
            let xi = n.map(|v| v * GAUSS);
            let (b, det) = b_matrix(nodes, &xi)?;
            gauss_b[g] = b;
            gauss_weight[g] = det;
        }
        let (centroid_b, _) = b_matrix(nodes, &[0.0; 3])?;
        Ok(ElementGeometry {
            gauss_b,
            gauss_weight,
            centroid_b,
            volume: gauss_weight.iter().sum(),
        })
    }

    /// `∫ Bᵀ C B dV`.
    pub fn stiffness(&self, c: &Tensor6) -> ElementMatrix {
        let mut k = ElementMatrix::zeros();
        for g in 0..8 {
            let cb = c * self.gauss_b[g];
            k += self.gauss_b[g].transpose() * cb * self.gauss_weight[g];
        }
        k
    }

    /// `∫ Bᵀ C B dV · u` without forming the matrix.
    pub fn apply(&self, c: &Tensor6, u: &ElementVector) -> ElementVector {
        let mut f = ElementVector::zeros();
        for g in 0..8 {
            let sigma = c * (self.gauss_b[g] * u) * self.gauss_weight[g];
            f += self.gauss_b[g].transpose() * sigma;
        }
        f
    }

    /// `∫ B dV`.
    pub fn integrated_b(&self) -> BMatrix {
        let mut s = BMatrix::zeros();
        for g in 0..8 {
            s += self.gauss_b[g] * self.gauss_weight[g];
        }
        s
    }

    pub fn centroid_strain(&self, u: &ElementVector) -> Vector6<f64> {
        self.centroid_b * u
    }
}
