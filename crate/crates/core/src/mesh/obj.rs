//! Wavefront OBJ (`v` and `f` records only) and dihedral CSV files.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::Vector3;

use super::{validate_topology, TopologyReport, TriMesh, Vec3};
use crate::error::{Error, Result};
use crate::fmt::g17;

/// Vertices and triangulated faces as read from a file, before validation.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RawMesh {
    pub vertices: Vec<Vec3>,
    pub faces: Vec<[usize; 3]>,
}

impl RawMesh {
    pub fn validate(&self) -> TopologyReport {
        validate_topology(self.vertices.len(), &self.faces)
    }

    pub fn into_mesh(self) -> Result<TriMesh> {
        TriMesh::new(self.vertices, self.faces)
    }
}

fn parse_index(tok: &str, n_vertices: usize, line: usize) -> Result<usize> {
    let head = tok.split('/').next().unwrap_or("");
    let raw: i64 = head.parse().map_err(|_| Error::Parse {
        line,
        message: format!("bad face index `{tok}`"),
    })?;
    let idx = match raw {
        0 => None,
        r if r > 0 => Some(r as usize - 1),
        r => (n_vertices as i64 + r).try_into().ok(),
    };
    idx.ok_or_else(|| Error::Parse {
        line,
        message: format!("face index `{tok}` does not name a vertex"),
    })
}

/// Parses OBJ text. Polygons are fan-triangulated from their first vertex;
/// record types other than `v` and `f` are ignored.
pub fn parse_obj(text: &str) -> Result<RawMesh> {
    let mut mesh = RawMesh::default();
    for (n, line) in text.lines().enumerate() {
        let line_no = n + 1;
        let mut toks = line.split_whitespace();
        match toks.next() {
            Some("v") => {
                let mut xyz = [0.0; 3];
                for slot in &mut xyz {
                    let t = toks.next().ok_or_else(|| Error::Parse {
                        line: line_no,
                        message: "vertex needs three coordinates".into(),
                    })?;
                    *slot = t.parse().map_err(|_| Error::Parse {
                        line: line_no,
                        message: format!("bad coordinate `{t}`"),
                    })?;
                }
                mesh.vertices.push(Vector3::from(xyz));
            }
            Some("f") => {
                let idx = toks
                    .map(|t| parse_index(t, mesh.vertices.len(), line_no))
                    .collect::<Result<Vec<_>>>()?;
                if idx.len() < 3 {
                    return Err(Error::Parse {
                        line: line_no,
                        message: format!("face has {} vertices", idx.len()),
                    });
                }
                for k in 1..idx.len() - 1 {
                    mesh.faces.push([idx[0], idx[k], idx[k + 1]]);
                }
            }
            _ => {}
        }
    }
    Ok(mesh)
}

pub fn read_obj_raw(path: impl AsRef<Path>) -> Result<RawMesh> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_obj(&text)
}

/// Reads and validates a closed genus-zero triangle mesh.
pub fn load_obj(path: impl AsRef<Path>) -> Result<TriMesh> {
    read_obj_raw(path)?.into_mesh()
}

pub fn write_obj_string(mesh: &TriMesh) -> String {
    let mut out = String::with_capacity(mesh.n_vertices() * 64 + mesh.n_faces() * 24);
    for p in mesh.vertices() {
        let _ = writeln!(out, "v {} {} {}", g17(p.x), g17(p.y), g17(p.z));
    }
    for f in mesh.faces() {
        let _ = writeln!(out, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1);
    }
    out
}

pub fn write_obj(path: impl AsRef<Path>, mesh: &TriMesh) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, write_obj_string(mesh)).map_err(|e| Error::io(path, e))
}

/// `edge_i,edge_j,angle_rad`, one row per canonical edge.
pub fn write_dihedral_csv(path: impl AsRef<Path>, mesh: &TriMesh, values: &[f64]) -> Result<()> {
    if values.len() != mesh.n_edges() {
        return Err(Error::LengthMismatch {
            expected: mesh.n_edges(),
            got: values.len(),
        });
    }
    let mut out = String::from("edge_i,edge_j,angle_rad\n");
    for (e, a) in mesh.edges().iter().zip(values) {
        let _ = writeln!(out, "{},{},{}", e.v[0], e.v[1], g17(*a));
    }
    let path = path.as_ref();
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Reads a three-column per-edge CSV (`edge_i,edge_j,value`) and checks the
/// rows follow the mesh's canonical edge order.
pub fn read_dihedral_csv(path: impl AsRef<Path>, mesh: &TriMesh) -> Result<Vec<f64>> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Csv(format!("{}: {e}", path.display())))?;
    let mut values = Vec::with_capacity(mesh.n_edges());
    for (n, record) in reader.deserialize::<(usize, usize, f64)>().enumerate() {
        let (i, j, v) = record.map_err(|e| Error::Csv(format!("{}: {e}", path.display())))?;
        match mesh.edges().get(values.len()) {
            Some(e) if e.v == [i, j] => values.push(v),
            _ => {
                return Err(Error::Csv(format!(
                    "{}: row {} names edge ({i},{j}) out of canonical order",
                    path.display(),
                    n + 2
                )))
            }
        }
    }
    if values.len() != mesh.n_edges() {
        return Err(Error::LengthMismatch {
            expected: mesh.n_edges(),
            got: values.len(),
        });
    }
    Ok(values)
}
