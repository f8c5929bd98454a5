use std::path::PathBuf;

use thiserror::Error;

/// Failures raised anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("vertex index {index} out of range in face {face} (mesh has {vertices} vertices)")]
    BadIndex {
        face: usize,
        index: i64,
        vertices: usize,
    },

    #[error("face {face} repeats a vertex index: {indices:?}")]
    RepeatedIndex { face: usize, indices: [usize; 3] },

    #[error("non-manifold edge ({}, {}) shared by faces {faces:?}", edge.0, edge.1)]
    NonManifoldEdge { edge: (usize, usize), faces: Vec<usize> },

    #[error("open boundary: {} boundary edge(s) {edges:?}", edges.len())]
    OpenBoundary { edges: Vec<(usize, usize)> },

    #[error("inconsistent face orientation at edge ({}, {})", edge.0, edge.1)]
    InconsistentOrientation { edge: (usize, usize) },

    #[error("non-manifold vertex {vertex}: its faces do not form a single fan")]
    NonManifoldVertex { vertex: usize },

    #[error("vertex {vertex} is not referenced by any face")]
    UnreferencedVertex { vertex: usize },

    #[error("non-spherical topology: Euler characteristic {euler} (V={vertices}, E={edges}, F={faces})")]
    NonSpherical {
        euler: i64,
        vertices: usize,
        edges: usize,
        faces: usize,
    },

    #[error("degenerate face {face} (area {area:e})")]
    DegenerateFace { face: usize, area: f64 },

    #[error("degenerate edge ({}, {}) (length {length:e})", edge.0, edge.1)]
    DegenerateEdge { edge: (usize, usize), length: f64 },

    #[error("topology mismatch: {0}")]
    TopologyMismatch(String),

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("singular configuration: corner {corner} of face {face} has angle {angle} (cotangent blow-up)")]
    SingularCorner { face: usize, corner: usize, angle: f64 },

    #[error("finite differences wrapped an angle by ~2pi at {location}; retry with a smaller step")]
    AngleWrap { location: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("infeasible wedge: face {face} violates the triangle inequality (lengths {lengths:?})")]
    InfeasibleWedge { face: usize, lengths: [f64; 3] },

    #[error("solver failure: {0}")]
    Solver(String),

    #[error("csv error: {0}")]
    Csv(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
