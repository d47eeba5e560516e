//! Marching-tetrahedra iso-surfaces of periodic sample grids.
//!
//! Each cube of eight neighbouring samples is split into six tetrahedra
//! around its main diagonal, so the triangulation is crack-free without the
//! ambiguous cases of marching cubes.

use std::io::Write;
use std::path::Path;

use crate::{Error, Point3, Result};

pub type Triangle = [Point3; 3];

/// Samples on an `n³` grid with periodic wrap; sample `(i, j, k)` sits at
/// `origin + (i, j, k)·spacing`.
pub struct PeriodicGrid<'a> {
    pub resolution: usize,
    pub spacing: f64,
    pub origin: Point3,
    pub values: &'a [f64],
}

// Six tetrahedra sharing the cube diagonal 0-7; corner bit 1 = +x, 2 = +y, 4 = +z.
const TETS: [[usize; 4]; 6] = [
    [0, 1, 3, 7],
    [0, 1, 5, 7],
    [0, 2, 3, 7],
    [0, 2, 6, 7],
    [0, 4, 5, 7],
    [0, 4, 6, 7],
];

impl PeriodicGrid<'_> {
    fn value(&self, i: usize, j: usize, k: usize) -> f64 {
        let n = self.resolution;
        self.values[(i % n) + n * ((j % n) + n * (k % n))]
    }

    /// Triangles of the `level` iso-surface; unwrapped coordinates may extend
    /// one spacing past the periodic box.
    pub fn triangulate(&self, level: f64) -> Vec<Triangle> {
        let n = self.resolution;
        let mut out = Vec::new();
        for k in 0..n {
            for j in 0..n {
                for i in 0..n {
                    let mut pos = [[0.0; 3]; 8];
                    let mut val = [0.0; 8];
                    for c in 0..8 {
                        let (di, dj, dk) = (c & 1, (c >> 1) & 1, (c >> 2) & 1);
                        val[c] = self.value(i + di, j + dj, k + dk) - level;
                        pos[c] = [
                            self.origin[0] + (i + di) as f64 * self.spacing,
                            self.origin[1] + (j + dj) as f64 * self.spacing,
                            self.origin[2] + (k + dk) as f64 * self.spacing,
                        ];
                    }
                    if val.iter().all(|&v| v >= 0.0) || val.iter().all(|&v| v < 0.0) {
                        continue;
                    }
                    for tet in &TETS {
                        let p = tet.map(|c| pos[c]);
                        let v = tet.map(|c| val[c]);
                        triangulate_tet(&p, &v, &mut out);
                    }
                }
            }
        }
        out
    }

    pub fn area(&self, level: f64) -> f64 {
        self.triangulate(level).iter().map(triangle_area).sum()
    }
}

fn lerp(a: &Point3, b: &Point3, va: f64, vb: f64) -> Point3 {
    let t = va / (va - vb);
    [
        a[0] + t * (b[0] - a[0]),
        a[1] + t * (b[1] - a[1]),
        a[2] + t * (b[2] - a[2]),
    ]
}

fn triangulate_tet(p: &[Point3; 4], v: &[f64; 4], out: &mut Vec<Triangle>) {
    let inside: Vec<usize> = (0..4).filter(|&i| v[i] >= 0.0).collect();
    let outside: Vec<usize> = (0..4).filter(|&i| v[i] < 0.0).collect();
    let toward = |from: &[usize], to: &[usize]| -> Point3 {
        let mean = |idx: &[usize]| -> Point3 {
            let mut m = [0.0; 3];
            for &i in idx {
                for d in 0..3 {
                    m[d] += p[i][d] / idx.len() as f64;
                }
            }
            m
        };
        let (a, b) = (mean(from), mean(to));
        [b[0] - a[0], b[1] - a[1], b[2] - a[2]]
    };
    match inside.len() {
        1 | 3 => {
            let (lone, rest) = if inside.len() == 1 {
                (inside[0], outside.clone())
            } else {
                (outside[0], inside.clone())
            };
            let tri = [
                lerp(&p[lone], &p[rest[0]], v[lone], v[rest[0]]),
                lerp(&p[lone], &p[rest[1]], v[lone], v[rest[1]]),
                lerp(&p[lone], &p[rest[2]], v[lone], v[rest[2]]),
            ];
            push_oriented(tri, toward(&outside, &inside), out);
        }
        2 => {
            let (a, b) = (inside[0], inside[1]);
            let (c, d) = (outside[0], outside[1]);
            let pac = lerp(&p[a], &p[c], v[a], v[c]);
            let pad = lerp(&p[a], &p[d], v[a], v[d]);
            let pbc = lerp(&p[b], &p[c], v[b], v[c]);
            let pbd = lerp(&p[b], &p[d], v[b], v[d]);
            let dir = toward(&outside, &inside);
            push_oriented([pac, pad, pbd], dir, out);
            push_oriented([pac, pbd, pbc], dir, out);
        }
        _ => {}
    }
}

// Normals point toward increasing sample value.
fn push_oriented(tri: Triangle, dir: Point3, out: &mut Vec<Triangle>) {
    let n = triangle_normal(&tri);
    if n[0] * dir[0] + n[1] * dir[1] + n[2] * dir[2] < 0.0 {
        out.push([tri[0], tri[2], tri[1]]);
    } else {
        out.push(tri);
    }
}

fn triangle_normal(t: &Triangle) -> Point3 {
    let u = [t[1][0] - t[0][0], t[1][1] - t[0][1], t[1][2] - t[0][2]];
    let v = [t[2][0] - t[0][0], t[2][1] - t[0][1], t[2][2] - t[0][2]];
    [
        u[1] * v[2] - u[2] * v[1],
        u[2] * v[0] - u[0] * v[2],
        u[0] * v[1] - u[1] * v[0],
    ]
}

pub fn triangle_area(t: &Triangle) -> f64 {
    let n = triangle_normal(t);
    0.5 * (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt()
}

/// Binary STL.
pub fn write_stl(path: &Path, triangles: &[Triangle]) -> Result<()> {
    let mut buf = Vec::with_capacity(84 + 50 * triangles.len());
    let mut header = [0u8; 80];
    let tag = b"ingrowth gyroid iso-surface";
    header[..tag.len()].copy_from_slice(tag);
    buf.extend_from_slice(&header);
    buf.extend_from_slice(&(triangles.len() as u32).to_le_bytes());
    for t in triangles {
        let n = triangle_normal(t);
        let len = (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt().max(f64::MIN_POSITIVE);
        for c in n {
            buf.extend_from_slice(&((c / len) as f32).to_le_bytes());
        }
        for v in t {
            for c in v {
                buf.extend_from_slice(&(*c as f32).to_le_bytes());
            }
        }
        buf.extend_from_slice(&0u16.to_le_bytes());
    }
    let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&buf).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn planar(n: usize) -> Vec<f64> {
        // periodic in x and y, plane z = const crossing at level 0.5·spacing
        let mut v = vec![0.0; n * n * n];
        for k in 0..n {
            for j in 0..n {
                for i in 0..n {
                    // distance from the plane z = 2.25 within the first period
                    v[i + n * (j + n * k)] = if k < n / 2 { k as f64 - 2.25 } else { -1.0 };
                }
            }
        }
        v
    }

    #[test]
    fn plane_area_is_exact() {
        let n = 8;
        let values = planar(n);
        let grid = PeriodicGrid {
            resolution: n,
            spacing: 1.0,
            origin: [0.0; 3],
            values: &values,
        };
        // one plane crossing at z = 2.25 plus the wrap-around crossing at the top
        let area = grid.area(0.0);
        assert_relative_eq!(area, 2.0 * (n * n) as f64, max_relative = 1e-12);
    }

    #[test]
    fn sphere_area_converges() {
        let area_at = |n: usize| {
            let h = 2.0 / n as f64;
            let mut v = vec![0.0; n * n * n];
            for k in 0..n {
                for j in 0..n {
                    for i in 0..n {
                        let p = [i as f64 * h - 1.0, j as f64 * h - 1.0, k as f64 * h - 1.0];
                        v[i + n * (j + n * k)] = 0.7 - (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
                    }
                }
            }
            PeriodicGrid {
                resolution: n,
                spacing: h,
                origin: [-1.0; 3],
                values: &v,
            }
            .area(0.0)
        };
        let exact = 4.0 * std::f64::consts::PI * 0.49;
        let coarse = (area_at(24) - exact).abs();
        let fine = (area_at(48) - exact).abs();
        assert!(fine < coarse);
        assert!(fine / exact < 0.01);
    }

    #[test]
    fn stl_has_expected_size() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.stl");
        let tri = [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]];
        write_stl(&path, &[tri, tri]).unwrap();
        assert_eq!(std::fs::metadata(&path).unwrap().len(), 84 + 2 * 50);
    }
}
