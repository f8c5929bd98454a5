//! Dihedral infinitesimal rigidity.
//!
//! The system `M β' = 0` collects, for a mesh with `V` vertices:
//!
//! * vertex rows (`3V`): `Σ_f β'_{f,i} n_f = 0` over the faces around vertex `i`;
//! * face rows (`2V - 4`): the three corner rates of a face sum to zero;
//! * cotangent rows (`V`): around vertex `i`, for each wedge `(i, a, b)`,
//!   `cot β_a β'_a - cot β_b β'_b` summed to zero (Law of Sines telescoping).
//!
//! Columns are corner slots `3 * face + corner`. The mesh is dihedral
//! infinitesimally rigid exactly when `M` has full column rank `6V - 12`.

mod fd;

use std::f64::consts::PI;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::mesh::{corner_cotangents, face_normals, inner_angles, TriMesh};

pub use fd::{
    corner_rates_vertex_term, finite_difference_rates, validate_cotangent_equation,
    validate_vertex_equation, FdRates, DEFAULT_STEP,
};

/// Corners closer than this to 0 or π make the cotangent rows blow up.
pub const SINGULAR_ANGLE_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RowKind {
    VertexX,
    VertexY,
    VertexZ,
    Face,
    Cotangent,
}

/// The `(6V - 4) x (6V - 12)` rigidity system in triplet form.
#[derive(Clone, Debug)]
pub struct RigidityMatrix {
    rows: usize,
    cols: usize,
    n_vertices: usize,
    n_faces: usize,
    /// `(row, col, value)`, sorted by row then column.
    entries: Vec<(usize, usize, f64)>,
}

impl RigidityMatrix {
    /// Builds a matrix from raw triplets; duplicates are summed.
    pub fn from_triplets(rows: usize, cols: usize, mut entries: Vec<(usize, usize, f64)>) -> Self {
        entries.sort_by_key(|&(r, c, _)| (r, c));
        let mut merged: Vec<(usize, usize, f64)> = Vec::with_capacity(entries.len());
        for (r, c, v) in entries {
            assert!(r < rows && c < cols, "entry ({r}, {c}) outside {rows}x{cols}");
            match merged.last_mut() {
                Some(last) if last.0 == r && last.1 == c => last.2 += v,
                _ => merged.push((r, c, v)),
            }
        }
        RigidityMatrix {
            rows,
            cols,
            n_vertices: 0,
            n_faces: 0,
            entries: merged,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn entries(&self) -> &[(usize, usize, f64)] {
        &self.entries
    }

    /// Block a row belongs to (only meaningful for assembled matrices).
    pub fn row_kind(&self, row: usize) -> RowKind {
        let v3 = 3 * self.n_vertices;
        if row < v3 {
            [RowKind::VertexX, RowKind::VertexY, RowKind::VertexZ][row % 3]
        } else if row < v3 + self.n_faces {
            RowKind::Face
        } else {
            RowKind::Cotangent
        }
    }

    pub fn vertex_rows(&self) -> std::ops::Range<usize> {
        0..3 * self.n_vertices
    }

    pub fn face_rows(&self) -> std::ops::Range<usize> {
        3 * self.n_vertices..3 * self.n_vertices + self.n_faces
    }

    pub fn cotangent_rows(&self) -> std::ops::Range<usize> {
        3 * self.n_vertices + self.n_faces..self.rows
    }

    /// Nonzeros of one row as `(col, value)`.
    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let lo = self.entries.partition_point(|e| e.0 < r);
        let hi = self.entries.partition_point(|e| e.0 <= r);
        self.entries[lo..hi].iter().map(|&(_, c, v)| (c, v))
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols);
        let mut y = vec![0.0; self.rows];
        for &(r, c, v) in &self.entries {
            y[r] += v * x[c];
        }
        y
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.rows, self.cols);
        for &(r, c, v) in &self.entries {
            m[(r, c)] += v;
        }
        m
    }
}

/// Assembles vertex, face and cotangent rows for `mesh`.
pub fn assemble_rigidity_matrix(mesh: &TriMesh) -> Result<RigidityMatrix> {
    let normals = face_normals(mesh)?;
    let angles = inner_angles(mesh)?;
    for (slot, &a) in angles.iter().enumerate() {
        if !(SINGULAR_ANGLE_TOL..=PI - SINGULAR_ANGLE_TOL).contains(&a) {
            return Err(Error::SingularCorner {
                face: slot / 3,
                corner: slot % 3,
                angle: a,
            });
        }
    }
    let cot = corner_cotangents(mesh)?;
    let topo = mesh.topology();
    let (nv, nf) = (mesh.n_vertices(), mesh.n_faces());
    let rows = 3 * nv + nf + nv;
    let cols = 3 * nf;
    let mut entries = Vec::with_capacity(3 * 3 * cols + 3 * nf + 2 * cols);

    for i in 0..nv {
        for w in topo.ring(i) {
            let col = topo.corner_of(w.face, i);
            for d in 0..3 {
                entries.push((3 * i + d, col, normals[w.face][d]));
            }
        }
    }
    for f in 0..nf {
        for c in 0..3 {
            entries.push((3 * nv + f, 3 * f + c, 1.0));
        }
    }
    let cot_base = 3 * nv + nf;
    for i in 0..nv {
        for w in topo.ring(i) {
            let face = mesh.faces()[w.face];
            let k = face.iter().position(|&x| x == i).expect("ring face contains vertex");
            // counter-clockwise corners after i: a then b
            let (ca, cb) = (3 * w.face + (k + 1) % 3, 3 * w.face + (k + 2) % 3);
            entries.push((cot_base + i, ca, cot[ca]));
            entries.push((cot_base + i, cb, -cot[cb]));
        }
    }

    let mut m = RigidityMatrix::from_triplets(rows, cols, entries);
    m.n_vertices = nv;
    m.n_faces = nf;
    Ok(m)
}

/// Outcome of the numeric rank test.
#[derive(Clone, Debug, Serialize)]
pub struct RigidityVerdict {
    pub rows: usize,
    pub cols: usize,
    pub rank: usize,
    pub sigma_min: f64,
    pub sigma_max: f64,
    /// Relative tolerance: singular values above `tol * sigma_max` count.
    pub tol: f64,
    /// `sigma_min / sigma_max`, a genericity indicator.
    pub margin: f64,
    pub rigid: bool,
    /// Orthonormal null-space basis; empty when rigid.
    #[serde(skip)]
    pub kernel: Vec<Vec<f64>>,
}

/// Default relative rank tolerance, `1e-10 * max(rows, cols)`.
pub fn default_tolerance(rows: usize, cols: usize) -> f64 {
    1e-10 * rows.max(cols) as f64
}

/// Numeric rank of `matrix` by dense SVD. `tol` defaults to
/// [`default_tolerance`].
pub fn numeric_rank(matrix: &RigidityMatrix, tol: Option<f64>) -> Result<RigidityVerdict> {
    let (rows, cols) = (matrix.rows, matrix.cols);
    let tol = tol.unwrap_or_else(|| default_tolerance(rows, cols));
    if !(tol >= 0.0) {
        return Err(Error::InvalidArgument(format!("rank tolerance {tol}")));
    }
    if cols == 0 {
        return Ok(RigidityVerdict {
            rows,
            cols,
            rank: 0,
            sigma_min: 0.0,
            sigma_max: 0.0,
            tol,
            margin: 0.0,
            rigid: true,
            kernel: Vec::new(),
        });
    }
    // Pad short matrices with zero rows so the thin SVD carries a full V.
    let mut dense = matrix.to_dense();
    if rows < cols {
        dense = dense.resize_vertically(cols, 0.0);
    }
    if dense.iter().any(|v| !v.is_finite()) {
        return Err(Error::Solver("rigidity matrix has non-finite entries".into()));
    }

    let sv = dense
        .clone()
        .try_svd(false, false, f64::EPSILON, 10_000)
        .ok_or_else(|| Error::Solver("SVD did not converge".into()))?
        .singular_values;
    let sigma_max = sv.max();
    let sigma_min = sv.min();
    let threshold = tol * sigma_max;
    let rank = if sigma_max == 0.0 {
        0
    } else {
        sv.iter().filter(|&&s| s > threshold).count()
    };
    let rigid = rank == cols;

    let kernel = if rigid {
        Vec::new()
    } else if sigma_max == 0.0 {
        (0..cols)
            .map(|k| (0..cols).map(|j| if j == k { 1.0 } else { 0.0 }).collect())
            .collect()
    } else {
        let svd = dense
            .try_svd(false, true, f64::EPSILON, 10_000)
            .ok_or_else(|| Error::Solver("SVD did not converge".into()))?;
        let v_t = svd.v_t.expect("v_t requested");
        let mut idx: Vec<usize> = (0..svd.singular_values.len())
            .filter(|&k| !(svd.singular_values[k] > threshold))
            .collect();
        idx.sort_by(|&a, &b| svd.singular_values[a].total_cmp(&svd.singular_values[b]));
        idx.iter().map(|&k| v_t.row(k).iter().copied().collect()).collect()
    };

    Ok(RigidityVerdict {
        rows,
        cols,
        rank,
        sigma_min,
        sigma_max,
        tol,
        margin: if sigma_max > 0.0 { sigma_min / sigma_max } else { 0.0 },
        rigid,
        kernel,
    })
}

/// Assembly followed by the rank test.
pub fn is_dihedral_inf_rigid(mesh: &TriMesh, tol: Option<f64>) -> Result<RigidityVerdict> {
    numeric_rank(&assemble_rigidity_matrix(mesh)?, tol)
}
