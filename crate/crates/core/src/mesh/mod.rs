//! Closed genus-zero triangle meshes.
//!
//! A [`TriMesh`] is an immutable [`Topology`] (shared behind an `Arc`, so many
//! embeddings of one connectivity stay cheap) plus one vertex position per
//! vertex. Construction validates the topology; everything downstream can
//! assume a closed, consistently oriented 2-manifold with Euler
//! characteristic 2.

mod geometry;
mod obj;
mod pose;

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::sync::Arc;

use nalgebra::Vector3;
use serde::Serialize;

use crate::error::{Error, Result};

pub use geometry::{
    corner_cotangents, dihedral_angles, edge_lengths, face_areas, face_normals, inner_angles,
    normal_cotangent_residual, rms_edge_length, CornerAngles, DihedralVector,
};
pub use obj::{
    load_obj, parse_obj, read_dihedral_csv, read_obj_raw, write_dihedral_csv, write_obj,
    write_obj_string, RawMesh,
};
pub use pose::{align_rotation, normalize_pose, procrustes_rms};

pub type Vec3 = Vector3<f64>;

/// An undirected edge `(v[0], v[1])` with `v[0] < v[1]`.
///
/// `faces[0]` traverses the edge as `v[0] -> v[1]` in its winding and
/// `faces[1]` traverses it as `v[1] -> v[0]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Edge {
    pub v: [usize; 2],
    pub faces: [usize; 2],
}

/// One wedge of a vertex star: the face `(i, neighbor, next neighbor)` in
/// counter-clockwise order, plus the spoke edge `(i, neighbor)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Wedge {
    pub neighbor: usize,
    pub face: usize,
    pub spoke: usize,
}

/// Connectivity of a closed genus-zero triangle mesh.
#[derive(Debug, PartialEq, Eq)]
pub struct Topology {
    n_vertices: usize,
    faces: Vec<[usize; 3]>,
    edges: Vec<Edge>,
    /// `face_edges[f][c]` is the edge joining corners `c` and `c + 1`.
    face_edges: Vec<[usize; 3]>,
    rings: Vec<Vec<Wedge>>,
    edge_lookup: HashMap<(usize, usize), usize>,
}

impl Topology {
    /// Validates `faces` and builds edges and vertex stars.
    pub fn new(n_vertices: usize, faces: Vec<[usize; 3]>) -> Result<Self> {
        let report = validate_topology(n_vertices, &faces);
        if let Some(err) = report.first_error() {
            return Err(err);
        }

        let mut by_edge: BTreeMap<(usize, usize), [usize; 2]> = BTreeMap::new();
        for (f, face) in faces.iter().enumerate() {
            for c in 0..3 {
                let (a, b) = (face[c], face[(c + 1) % 3]);
                let slot = by_edge.entry((a.min(b), a.max(b))).or_insert([usize::MAX; 2]);
                if a < b {
                    slot[0] = f;
                } else {
                    slot[1] = f;
                }
            }
        }
        let edges: Vec<Edge> = by_edge
            .into_iter()
            .map(|((a, b), faces)| Edge { v: [a, b], faces })
            .collect();
        let edge_lookup: HashMap<(usize, usize), usize> =
            edges.iter().enumerate().map(|(i, e)| ((e.v[0], e.v[1]), i)).collect();

        let face_edges = faces
            .iter()
            .map(|face| {
                let mut out = [0; 3];
                for c in 0..3 {
                    let (a, b) = (face[c], face[(c + 1) % 3]);
                    out[c] = edge_lookup[&(a.min(b), a.max(b))];
                }
                out
            })
            .collect();

        // Successor map per vertex: in face (i, a, b) the neighbor after a is b.
        let mut next: Vec<HashMap<usize, (usize, usize)>> = vec![HashMap::new(); n_vertices];
        for (f, face) in faces.iter().enumerate() {
            for c in 0..3 {
                let (i, a, b) = (face[c], face[(c + 1) % 3], face[(c + 2) % 3]);
                next[i].insert(a, (b, f));
            }
        }
        let mut rings = Vec::with_capacity(n_vertices);
        for (i, succ) in next.iter().enumerate() {
            let start = *succ.keys().min().expect("validated: every vertex is referenced");
            let mut ring = Vec::with_capacity(succ.len());
            let mut cur = start;
            loop {
                let (nb, f) = succ[&cur];
                ring.push(Wedge {
                    neighbor: cur,
                    face: f,
                    spoke: edge_lookup[&(i.min(cur), i.max(cur))],
                });
                cur = nb;
                if cur == start {
                    break;
                }
            }
            rings.push(ring);
        }

        Ok(Topology {
            n_vertices,
            faces,
            edges,
            face_edges,
            rings,
            edge_lookup,
        })
    }

    pub fn n_vertices(&self) -> usize {
        self.n_vertices
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn n_faces(&self) -> usize {
        self.faces.len()
    }

    /// Number of (face, corner) slots, `3F`.
    pub fn n_corners(&self) -> usize {
        3 * self.faces.len()
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }

    /// Edges in canonical order: lexicographic by `(min index, max index)`.
    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn face_edges(&self) -> &[[usize; 3]] {
        &self.face_edges
    }

    /// Counter-clockwise star of vertex `i`, starting at its smallest neighbor.
    pub fn ring(&self, i: usize) -> &[Wedge] {
        &self.rings[i]
    }

    pub fn edge_index(&self, a: usize, b: usize) -> Option<usize> {
        self.edge_lookup.get(&(a.min(b), a.max(b))).copied()
    }

    /// Corner slot of vertex `v` inside face `f`.
    pub fn corner_of(&self, f: usize, v: usize) -> usize {
        let face = &self.faces[f];
        let c = face.iter().position(|&x| x == v).expect("vertex not in face");
        3 * f + c
    }

    pub fn euler_characteristic(&self) -> i64 {
        self.n_vertices as i64 - self.edges.len() as i64 + self.faces.len() as i64
    }
}

/// A closed genus-zero triangle mesh embedded in R^3.
#[derive(Clone, Debug)]
pub struct TriMesh {
    topology: Arc<Topology>,
    vertices: Vec<Vec3>,
}

impl TriMesh {
    /// Builds a mesh, validating topology and rejecting degenerate faces and
    /// edges relative to the RMS edge length.
    pub fn new(vertices: Vec<Vec3>, faces: Vec<[usize; 3]>) -> Result<Self> {
        let topology = Arc::new(Topology::new(vertices.len(), faces)?);
        let mesh = TriMesh { topology, vertices };
        mesh.check_nondegenerate()?;
        Ok(mesh)
    }

    /// A new embedding sharing this mesh's topology. No geometric checks.
    pub fn with_vertices(&self, vertices: Vec<Vec3>) -> Result<Self> {
        if vertices.len() != self.topology.n_vertices {
            return Err(Error::LengthMismatch {
                expected: self.topology.n_vertices,
                got: vertices.len(),
            });
        }
        Ok(TriMesh {
            topology: Arc::clone(&self.topology),
            vertices,
        })
    }

    pub fn from_topology(topology: Arc<Topology>, vertices: Vec<Vec3>) -> Result<Self> {
        if vertices.len() != topology.n_vertices {
            return Err(Error::LengthMismatch {
                expected: topology.n_vertices,
                got: vertices.len(),
            });
        }
        Ok(TriMesh { topology, vertices })
    }

    pub fn topology(&self) -> &Arc<Topology> {
        &self.topology
    }

    pub fn vertices(&self) -> &[Vec3] {
        &self.vertices
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.topology.faces
    }

    pub fn edges(&self) -> &[Edge] {
        &self.topology.edges
    }

    pub fn n_vertices(&self) -> usize {
        self.topology.n_vertices
    }

    pub fn n_edges(&self) -> usize {
        self.topology.edges.len()
    }

    pub fn n_faces(&self) -> usize {
        self.topology.faces.len()
    }

    /// True when both meshes use the same face list.
    pub fn same_topology(&self, other: &TriMesh) -> bool {
        Arc::ptr_eq(&self.topology, &other.topology)
            || (self.topology.n_vertices == other.topology.n_vertices
                && self.topology.faces == other.topology.faces)
    }

    pub fn map_vertices(&self, f: impl FnMut(&Vec3) -> Vec3) -> TriMesh {
        TriMesh {
            topology: Arc::clone(&self.topology),
            vertices: self.vertices.iter().map(f).collect(),
        }
    }

    pub fn centroid(&self) -> Vec3 {
        self.vertices.iter().sum::<Vec3>() / self.vertices.len() as f64
    }

    /// Topology report for an already-built mesh.
    pub fn report(&self) -> TopologyReport {
        validate_topology(self.topology.n_vertices, &self.topology.faces)
    }

    fn check_nondegenerate(&self) -> Result<()> {
        edge_lengths(self)?;
        face_areas(self)?;
        Ok(())
    }
}

/// A single reason a face list fails to describe a closed genus-zero surface.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TopologyIssue {
    BadIndex { face: usize, index: i64 },
    RepeatedIndex { face: usize, indices: [usize; 3] },
    NonManifoldEdge { edge: (usize, usize), faces: Vec<usize> },
    BoundaryEdge { edge: (usize, usize) },
    InconsistentOrientation { edge: (usize, usize) },
    NonManifoldVertex { vertex: usize },
    UnreferencedVertex { vertex: usize },
}

impl fmt::Display for TopologyIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TopologyIssue::BadIndex { face, index } => write!(f, "face {face}: bad index {index}"),
            TopologyIssue::RepeatedIndex { face, indices } => {
                write!(f, "face {face}: repeated index {indices:?}")
            }
            TopologyIssue::NonManifoldEdge { edge, faces } => {
                write!(f, "non-manifold edge {edge:?} in faces {faces:?}")
            }
            TopologyIssue::BoundaryEdge { edge } => write!(f, "boundary edge {edge:?}"),
            TopologyIssue::InconsistentOrientation { edge } => {
                write!(f, "inconsistent orientation at edge {edge:?}")
            }
            TopologyIssue::NonManifoldVertex { vertex } => write!(f, "non-manifold vertex {vertex}"),
            TopologyIssue::UnreferencedVertex { vertex } => {
                write!(f, "unreferenced vertex {vertex}")
            }
        }
    }
}

/// Counts and failure list produced by [`validate_topology`].
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct TopologyReport {
    pub vertices: usize,
    pub edges: usize,
    pub faces: usize,
    pub euler: i64,
    pub closed: bool,
    pub manifold: bool,
    pub oriented: bool,
    pub issues: Vec<TopologyIssue>,
}

impl TopologyReport {
    /// Accepted downstream only when closed, manifold, oriented and χ = 2.
    pub fn is_valid(&self) -> bool {
        self.issues.is_empty() && self.euler == 2
    }

    /// The error a mesh constructor would raise for this report, if any.
    pub fn first_error(&self) -> Option<Error> {
        let boundary: Vec<(usize, usize)> = self
            .issues
            .iter()
            .filter_map(|i| match i {
                TopologyIssue::BoundaryEdge { edge } => Some(*edge),
                _ => None,
            })
            .collect();
        if let Some(issue) = self.issues.first() {
            let err = match issue {
                TopologyIssue::BadIndex { face, index } => Error::BadIndex {
                    face: *face,
                    index: *index,
                    vertices: self.vertices,
                },
                TopologyIssue::RepeatedIndex { face, indices } => Error::RepeatedIndex {
                    face: *face,
                    indices: *indices,
                },
                TopologyIssue::NonManifoldEdge { edge, faces } => Error::NonManifoldEdge {
                    edge: *edge,
                    faces: faces.clone(),
                },
                TopologyIssue::BoundaryEdge { .. } => Error::OpenBoundary {
                    edges: boundary.clone(),
                },
                TopologyIssue::InconsistentOrientation { edge } => {
                    Error::InconsistentOrientation { edge: *edge }
                }
                TopologyIssue::NonManifoldVertex { vertex } => {
                    Error::NonManifoldVertex { vertex: *vertex }
                }
                TopologyIssue::UnreferencedVertex { vertex } => {
                    Error::UnreferencedVertex { vertex: *vertex }
                }
            };
            return Some(err);
        }
        if self.euler != 2 {
            return Some(Error::NonSpherical {
                euler: self.euler,
                vertices: self.vertices,
                edges: self.edges,
                faces: self.faces,
            });
        }
        None
    }
}

/// Checks that `faces` describe a closed, oriented, genus-zero 2-manifold on
/// `n_vertices` vertices. Never fails; problems are listed in the report.
pub fn validate_topology(n_vertices: usize, faces: &[[usize; 3]]) -> TopologyReport {
    let mut issues = Vec::new();
    let mut usable = Vec::with_capacity(faces.len());
    for (f, face) in faces.iter().enumerate() {
        if let Some(&bad) = face.iter().find(|&&x| x >= n_vertices) {
            issues.push(TopologyIssue::BadIndex {
                face: f,
                index: bad as i64,
            });
        } else if face[0] == face[1] || face[1] == face[2] || face[0] == face[2] {
            issues.push(TopologyIssue::RepeatedIndex {
                face: f,
                indices: *face,
            });
        } else {
            usable.push(f);
        }
    }

    // undirected edge -> list of (face, traversed low->high)
    let mut incidence: BTreeMap<(usize, usize), Vec<(usize, bool)>> = BTreeMap::new();
    let mut referenced = vec![false; n_vertices];
    for &f in &usable {
        let face = faces[f];
        for c in 0..3 {
            let (a, b) = (face[c], face[(c + 1) % 3]);
            referenced[a] = true;
            incidence.entry((a.min(b), a.max(b))).or_default().push((f, a < b));
        }
    }

    let mut closed = true;
    let mut manifold = true;
    let mut oriented = true;
    for (&edge, inc) in &incidence {
        match inc.len() {
            1 => {
                closed = false;
                issues.push(TopologyIssue::BoundaryEdge { edge });
            }
            2 => {
                if inc[0].1 == inc[1].1 {
                    oriented = false;
                    issues.push(TopologyIssue::InconsistentOrientation { edge });
                }
            }
            _ => {
                manifold = false;
                issues.push(TopologyIssue::NonManifoldEdge {
                    edge,
                    faces: inc.iter().map(|&(f, _)| f).collect(),
                });
            }
        }
    }

    for (v, &r) in referenced.iter().enumerate() {
        if !r {
            issues.push(TopologyIssue::UnreferencedVertex { vertex: v });
        }
    }

    // Vertex fans are only meaningful once every edge is a clean manifold edge.
    if closed && manifold && oriented {
        let mut next: Vec<HashMap<usize, usize>> = vec![HashMap::new(); n_vertices];
        for &f in &usable {
            let face = faces[f];
            for c in 0..3 {
                next[face[c]].insert(face[(c + 1) % 3], face[(c + 2) % 3]);
            }
        }
        for (v, succ) in next.iter().enumerate() {
            let Some(&start) = succ.keys().min() else {
                continue;
            };
            let mut cur = start;
            let mut steps = 0;
            loop {
                cur = succ[&cur];
                steps += 1;
                if cur == start || steps > succ.len() {
                    break;
                }
            }
            if steps != succ.len() {
                manifold = false;
                issues.push(TopologyIssue::NonManifoldVertex { vertex: v });
            }
        }
    }

    let n_edges = incidence.len();
    TopologyReport {
        vertices: n_vertices,
        edges: n_edges,
        faces: faces.len(),
        euler: n_vertices as i64 - n_edges as i64 + faces.len() as i64,
        closed,
        manifold,
        oriented,
        issues,
    }
}
