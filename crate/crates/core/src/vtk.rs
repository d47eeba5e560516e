//! Legacy ASCII VTK unstructured grids of 8-node hexahedra.
//!
//! Meshes are read with an integer cell field `domain` (0 bone, 1 design,
//! 2 inert) and optionally a scalar cell field `bone_density` in g/cc.

use std::fmt::Write as _;
use std::path::Path;

use crate::mech::{Domain, HexMesh};
use crate::{Error, Point3, Result};

const VTK_HEXAHEDRON: i64 = 12;

/// A named per-element or per-node scalar field.
pub struct Field<'a> {
    pub name: &'a str,
    pub values: &'a [f64],
}

/// Writes `mesh` with its domain labels and the given cell and point fields.
pub fn write(path: &Path, mesh: &HexMesh, cell_fields: &[Field<'_>], point_fields: &[Field<'_>]) -> Result<()> {
    let ne = mesh.element_count();
    let nn = mesh.node_count();
    for f in cell_fields {
        if f.values.len() != ne {
            return Err(Error::Config(format!("cell field '{}' has {} values for {ne} cells", f.name, f.values.len())));
        }
    }
    for f in point_fields {
        if f.values.len() != nn {
            return Err(Error::Config(format!("point field '{}' has {} values for {nn} points", f.name, f.values.len())));
        }
    }
    let mut s = String::new();
    s.push_str("# vtk DataFile Version 3.0\ningrowth\nASCII\nDATASET UNSTRUCTURED_GRID\n");
    let _ = writeln!(s, "POINTS {nn} double");
    for p in mesh.nodes() {
        let _ = writeln!(s, "{:e} {:e} {:e}", p[0], p[1], p[2]);
    }
    let _ = writeln!(s, "CELLS {ne} {}", 9 * ne);
    for conn in mesh.elements() {
        s.push('8');
        for n in conn {
            let _ = write!(s, " {n}");
        }
        s.push('\n');
    }
    let _ = writeln!(s, "CELL_TYPES {ne}");
    for _ in 0..ne {
        let _ = writeln!(s, "{VTK_HEXAHEDRON}");
    }
    let _ = writeln!(s, "CELL_DATA {ne}\nSCALARS domain int 1\nLOOKUP_TABLE default");
    for d in mesh.labels() {
        let _ = writeln!(s, "{}", d.code());
    }
    for f in cell_fields {
        scalars(&mut s, f);
    }
    if !point_fields.is_empty() {
        let _ = writeln!(s, "POINT_DATA {nn}");
        for f in point_fields {
            scalars(&mut s, f);
        }
    }
    std::fs::write(path, s).map_err(|e| Error::io(path, e))
}

fn scalars(s: &mut String, f: &Field<'_>) {
    let _ = writeln!(s, "SCALARS {} double 1\nLOOKUP_TABLE default", f.name);
    for v in f.values {
        let _ = writeln!(s, "{v:e}");
    }
}

/// A mesh read from disk with its optional bone density field.
pub struct MeshFile {
    pub mesh: HexMesh,
    pub bone_density: Option<Vec<f64>>,
}

/// Reads a hexahedral unstructured grid. Every cell must be a hexahedron and
/// a `domain` cell field must be present.
pub fn read(path: &Path) -> Result<MeshFile> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let fail = |m: String| Error::format(path, m);
    let mut lines = text.lines();
    let header = lines.next().unwrap_or_default();
    if !header.starts_with("# vtk DataFile") {
        return Err(fail("not a legacy VTK file".into()));
    }
    lines.next();
    if lines.next().map(str::trim) != Some("ASCII") {
        return Err(fail("only ASCII legacy files are supported".into()));
    }
    let mut tokens = lines.flat_map(str::split_whitespace).peekable();
    let mut next = |what: &str| tokens.next().ok_or_else(|| fail(format!("unexpected end of file reading {what}")));
    let parse_u = |t: &str, what: &str| t.parse::<usize>().map_err(|_| fail(format!("bad {what} '{t}'")));
    let parse_f = |t: &str, what: &str| t.parse::<f64>().map_err(|_| fail(format!("bad {what} '{t}'")));

    let mut nodes: Vec<Point3> = Vec::new();
    let mut cells: Vec<[u32; 8]> = Vec::new();
    let mut domain: Option<Vec<Domain>> = None;
    let mut density: Option<Vec<f64>> = None;
    let mut section = "";
    loop {
        let Ok(key) = next("keyword") else { break };
        match key {
            "DATASET" => {
                let kind = next("dataset type")?;
                if kind != "UNSTRUCTURED_GRID" {
                    return Err(fail(format!("dataset {kind} is not an unstructured grid")));
                }
            }
            "POINTS" => {
                let n = parse_u(next("point count")?, "point count")?;
                next("point type")?;
                nodes.reserve(n);
                for _ in 0..n {
                    let mut p = [0.0; 3];
                    for c in &mut p {
                        *c = parse_f(next("coordinate")?, "coordinate")?;
                    }
                    nodes.push(p);
                }
            }
            "CELLS" => {
                let n = parse_u(next("cell count")?, "cell count")?;
                next("cell list size")?;
                for c in 0..n {
                    let k = parse_u(next("cell size")?, "cell size")?;
                    if k != 8 {
                        return Err(fail(format!("cell {c} has {k} nodes; only hexahedra are supported")));
                    }
                    let mut conn = [0u32; 8];
                    for v in &mut conn {
                        *v = parse_u(next("connectivity")?, "connectivity")? as u32;
                    }
                    cells.push(conn);
                }
            }
            "CELL_TYPES" => {
                let n = parse_u(next("cell type count")?, "cell type count")?;
                for c in 0..n {
                    let t = next("cell type")?;
                    if t.parse::<i64>().ok() != Some(VTK_HEXAHEDRON) {
                        return Err(fail(format!("cell {c} has type {t}; only hexahedra (12) are supported")));
                    }
                }
            }
            "CELL_DATA" | "POINT_DATA" => {
                section = if key == "CELL_DATA" { "cell" } else { "point" };
                next("data count")?;
            }
            "SCALARS" => {
                let name = next("field name")?.to_string();
                next("field type")?;
                let count = match section {
                    "cell" => cells.len(),
                    "point" => nodes.len(),
                    _ => return Err(fail(format!("field '{name}' outside a data section"))),
                };
                let mut t = next("lookup table")?;
                if t.parse::<usize>().is_ok() {
                    t = next("lookup table")?;
                }
                if t != "LOOKUP_TABLE" {
                    return Err(fail(format!("field '{name}': expected LOOKUP_TABLE, found '{t}'")));
                }
                next("lookup table name")?;
                let mut values = Vec::with_capacity(count);
                for _ in 0..count {
                    values.push(parse_f(next("field value")?, "field value")?);
                }
                if section == "cell" && name == "domain" {
                    let labels = values
                        .iter()
                        .enumerate()
                        .map(|(c, &v)| {
                            Domain::from_code(v as i64)
                                .filter(|_| v.fract() == 0.0)
                                .ok_or_else(|| fail(format!("cell {c} has unknown domain label {v}")))
                        })
                        .collect::<Result<Vec<_>>>()?;
                    domain = Some(labels);
                } else if section == "cell" && name == "bone_density" {
                    density = Some(values);
                }
            }
            other => return Err(fail(format!("unsupported keyword '{other}'"))),
        }
    }
    let labels = domain.ok_or_else(|| fail("missing 'domain' cell field".into()))?;
    let mesh = HexMesh::new(nodes, cells, labels).map_err(|e| fail(e.to_string()))?;
    Ok(MeshFile {
        mesh,
        bone_density: density,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labelled_block() -> HexMesh {
        HexMesh::block([0.0; 3], [2.0, 1.0, 1.0], [2, 1, 1], |c| {
            if c[0] < 1.0 {
                Domain::Bone
            } else {
                Domain::Design
            }
        })
        .unwrap()
    }

    #[test]
    fn round_trip_keeps_geometry_labels_and_density() {
        let mesh = labelled_block();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.vtk");
        let rho = [0.7, 0.05];
        write(&path, &mesh, &[Field { name: "bone_density", values: &rho }], &[]).unwrap();
        let back = read(&path).unwrap();
        assert_eq!(back.mesh.nodes(), mesh.nodes());
        assert_eq!(back.mesh.elements(), mesh.elements());
        assert_eq!(back.mesh.labels(), mesh.labels());
        assert_eq!(back.bone_density.unwrap(), rho);
    }

    #[test]
    fn missing_domain_is_a_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.vtk");
        std::fs::write(
            &path,
            "# vtk DataFile Version 3.0\nx\nASCII\nDATASET UNSTRUCTURED_GRID\nPOINTS 0 double\nCELLS 0 0\nCELL_TYPES 0\n",
        )
        .unwrap();
        let err = read(&path).err().unwrap();
        assert!(err.is_config(), "{err}");
        assert!(err.to_string().contains("domain"));
    }

    #[test]
    fn wrong_field_length_is_rejected() {
        let mesh = labelled_block();
        let dir = tempfile::tempdir().unwrap();
        let err = write(&dir.path().join("m.vtk"), &mesh, &[Field { name: "x", values: &[1.0] }], &[]);
        assert!(err.is_err());
    }
}
