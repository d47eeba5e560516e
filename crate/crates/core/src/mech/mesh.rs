use std::collections::HashMap;

use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use super::hex8::{ElementGeometry, NATURAL};
use crate::{Error, Point3, Result};

/// Region an element belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    Bone,
    Design,
    Inert,
}

impl Domain {
    pub fn code(self) -> i32 {
        match self {
            Domain::Bone => 0,
            Domain::Design => 1,
            Domain::Inert => 2,
        }
    }

    pub fn from_code(code: i64) -> Option<Self> {
        match code {
            0 => Some(Domain::Bone),
            1 => Some(Domain::Design),
            2 => Some(Domain::Inert),
            _ => None,
        }
    }
}

/// Axis-aligned box, inclusive, used to select nodes and elements.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct Aabb {
    pub min: Point3,
    pub max: Point3,
}

impl Aabb {
    pub fn contains(&self, p: &Point3, tol: f64) -> bool {
        (0..3).all(|d| p[d] >= self.min[d] - tol && p[d] <= self.max[d] + tol)
    }
}

#[derive(Debug, Clone)]
pub struct HexMesh {
    nodes: Vec<Point3>,
    elements: Vec<[u32; 8]>,
    labels: Vec<Domain>,
    geometry: Vec<ElementGeometry>,
    centroids: Vec<Point3>,
}

impl HexMesh {
    pub fn new(nodes: Vec<Point3>, elements: Vec<[u32; 8]>, labels: Vec<Domain>) -> Result<Self> {
        if labels.len() != elements.len() {
            return Err(Error::Config(format!(
                "{} elements but {} domain labels",
                elements.len(),
                labels.len()
            )));
        }
        if let Some(bad) = elements.iter().flatten().find(|&&n| n as usize >= nodes.len()) {
            return Err(Error::Config(format!("element refers to missing node {bad}")));
        }
        let mut geometry = Vec::with_capacity(elements.len());
        let mut centroids = Vec::with_capacity(elements.len());
        for (e, conn) in elements.iter().enumerate() {
            let xs = conn.map(|n| nodes[n as usize]);
            geometry.push(
                ElementGeometry::new(&xs).map_err(|err| Error::Config(format!("element {e}: {err}")))?,
            );
            let mut c = [0.0; 3];
            for x in &xs {
                for d in 0..3 {
                    c[d] += 0.125 * x[d];
                }
            }
            centroids.push(c);
        }
        Ok(HexMesh {
            nodes,
            elements,
            labels,
            geometry,
            centroids,
        })
    }

    /// Structured block of `divisions` elements from `origin` spanning `size`.
    pub fn block(origin: Point3, size: Point3, divisions: [usize; 3], label: impl Fn(&Point3) -> Domain) -> Result<Self> {
        let [nx, ny, nz] = divisions;
        let id = |i: usize, j: usize, k: usize| (i + (nx + 1) * (j + (ny + 1) * k)) as u32;
        let mut nodes = Vec::with_capacity((nx + 1) * (ny + 1) * (nz + 1));
        for k in 0..=nz {
            for j in 0..=ny {
                for i in 0..=nx {
                    nodes.push([
                        origin[0] + size[0] * i as f64 / nx as f64,
                        origin[1] + size[1] * j as f64 / ny as f64,
                        origin[2] + size[2] * k as f64 / nz as f64,
                    ]);
                }
            }
        }
        let mut elements = Vec::with_capacity(nx * ny * nz);
        let mut labels = Vec::with_capacity(nx * ny * nz);
        for k in 0..nz {
            for j in 0..ny {
                for i in 0..nx {
                    let conn = NATURAL.map(|n| {
                        let s = |v: f64| usize::from(v > 0.0);
                        id(i + s(n[0]), j + s(n[1]), k + s(n[2]))
                    });
                    let c = [
                        origin[0] + size[0] * (i as f64 + 0.5) / nx as f64,
                        origin[1] + size[1] * (j as f64 + 0.5) / ny as f64,
                        origin[2] + size[2] * (k as f64 + 0.5) / nz as f64,
                    ];
                    elements.push(conn);
                    labels.push(label(&c));
                }
            }
        }
        HexMesh::new(nodes, elements, labels)
    }

    /// Splits every element into eight by its trilinear map; labels are inherited.
    pub fn refine(&self) -> Result<Self> {
        let mut nodes = self.nodes.clone();
        let mut index: HashMap<Vec<u32>, u32> = HashMap::new();
        let mut elements = Vec::with_capacity(8 * self.elements.len());
        let mut labels = Vec::with_capacity(8 * self.elements.len());
        for (e, conn) in self.elements.iter().enumerate() {
            let xs = conn.map(|n| self.nodes[n as usize]);
            // nodes of the 3×3×3 sub-lattice in natural coordinates −1, 0, 1
            let mut lattice = [[[0u32; 3]; 3]; 3];
            for (c, row) in lattice.iter_mut().enumerate() {
                for (b, col) in row.iter_mut().enumerate() {
                    for (a, slot) in col.iter_mut().enumerate() {
                        let xi = [a as f64 - 1.0, b as f64 - 1.0, c as f64 - 1.0];
                        // the parent nodes spanning the smallest entity containing xi
                        let mut key: Vec<u32> = NATURAL
                            .iter()
                            .enumerate()
                            .filter(|(_, n)| (0..3).all(|d| xi[d] == 0.0 || xi[d] == n[d]))
                            .map(|(i, _)| conn[i])
                            .collect();
                        key.sort_unstable();
                        *slot = if key.len() == 1 {
                            key[0]
                        } else {
                            *index.entry(key).or_insert_with(|| {
                                let w = super::hex8::shape_functions(&xi);
                                let mut p = [0.0; 3];
                                for (n, x) in w.iter().zip(&xs) {
                                    for d in 0..3 {
                                        p[d] += n * x[d];
                                    }
                                }
                                nodes.push(p);
                                (nodes.len() - 1) as u32
                            })
                        };
                    }
                }
            }
            for c in 0..2 {
                for b in 0..2 {
                    for a in 0..2 {
                        elements.push(NATURAL.map(|n| {
                            let s = |v: f64| usize::from(v > 0.0);
                            lattice[c + s(n[2])][b + s(n[1])][a + s(n[0])]
                        }));
                        labels.push(self.labels[e]);
                    }
                }
            }
        }
        HexMesh::new(nodes, elements, labels)
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn element_count(&self) -> usize {
        self.elements.len()
    }

    pub fn nodes(&self) -> &[Point3] {
        &self.nodes
    }

    pub fn elements(&self) -> &[[u32; 8]] {
        &self.elements
    }

    pub fn labels(&self) -> &[Domain] {
        &self.labels
    }

    pub fn label(&self, e: usize) -> Domain {
        self.labels[e]
    }

    pub fn geometry(&self, e: usize) -> &ElementGeometry {
        &self.geometry[e]
    }

    pub fn centroid(&self, e: usize) -> Point3 {
        self.centroids[e]
    }

    pub fn volume(&self, e: usize) -> f64 {
        self.geometry[e].volume
    }

    pub fn elements_in(&self, domain: Domain) -> Vec<usize> {
        (0..self.elements.len()).filter(|&e| self.labels[e] == domain).collect()
    }

    pub fn bounding_box(&self) -> Aabb {
        let mut min = [f64::INFINITY; 3];
        let mut max = [f64::NEG_INFINITY; 3];
        for p in &self.nodes {
            for d in 0..3 {
                min[d] = min[d].min(p[d]);
                max[d] = max[d].max(p[d]);
            }
        }
        Aabb { min, max }
    }

    /// Length scale used for geometric tolerances.
    pub fn tolerance(&self) -> f64 {
        let b = self.bounding_box();
        1e-9 * (0..3).map(|d| b.max[d] - b.min[d]).fold(0.0, f64::max)
    }

    pub fn nodes_in(&self, region: &Aabb) -> Vec<u32> {
        let tol = self.tolerance();
        (0..self.nodes.len() as u32)
            .filter(|&n| region.contains(&self.nodes[n as usize], tol))
            .collect()
    }

    /// Boundary quadrilaterals (faces used by exactly one element).
    pub fn boundary_faces(&self) -> Vec<[u32; 4]> {
        const FACES: [[usize; 4]; 6] = [
            [0, 3, 2, 1],
            [4, 5, 6, 7],
            [0, 1, 5, 4],
            [1, 2, 6, 5],
            [2, 3, 7, 6],
            [3, 0, 4, 7],
        ];
        let mut count: HashMap<[u32; 4], ([u32; 4], usize)> = HashMap::new();
        for conn in &self.elements {
            for f in &FACES {
                let face = f.map(|i| conn[i]);
                let mut key = face;
                key.sort_unstable();
                count.entry(key).or_insert((face, 0)).1 += 1;
            }
        }
        let mut faces: Vec<[u32; 4]> = count.into_values().filter(|(_, c)| *c == 1).map(|(f, _)| f).collect();
        faces.sort_unstable();
        faces
    }

    /// Share of boundary-face area attributed to each node of `group`, from
    /// faces lying entirely in the group; shares sum to one. A group with no
    /// complete face is weighted uniformly.
    pub fn tributary_weights(&self, group: &[u32]) -> Vec<f64> {
        let pos: HashMap<u32, usize> = group.iter().enumerate().map(|(i, &n)| (n, i)).collect();
        let mut w = vec![0.0; group.len()];
        for face in self.boundary_faces() {
            if face.iter().all(|n| pos.contains_key(n)) {
                let p = face.map(|n| self.nodes[n as usize]);
                let area = quad_area(&p);
                for n in face {
                    w[pos[&n]] += 0.25 * area;
                }
            }
        }
        let total: f64 = w.iter().sum();
        if total > 0.0 {
            w.iter_mut().for_each(|v| *v /= total);
        } else {
            w.iter_mut().for_each(|v| *v = 1.0 / group.len() as f64);
        }
        w
    }
}

fn quad_area(p: &[Point3; 4]) -> f64 {
    let d1 = [0, 1, 2].map(|d| p[2][d] - p[0][d]);
    let d2 = [0, 1, 2].map(|d| p[3][d] - p[1][d]);
    let c = [
        d1[1] * d2[2] - d1[2] * d2[1],
        d1[2] * d2[0] - d1[0] * d2[2],
        d1[0] * d2[1] - d1[1] * d2[0],
    ];
    0.5 * (c[0] * c[0] + c[1] * c[1] + c[2] * c[2]).sqrt()
}
