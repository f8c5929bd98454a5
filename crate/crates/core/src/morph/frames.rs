//! Frame synchronization: canonical per-vertex frames, relative rotations
//! between neighboring stars, global rotations and vertex positions.

use nalgebra::Matrix3;

use crate::error::{Error, Result};
use crate::linalg::{nearest_rotation, LeastSquares};
use crate::mesh::{align_rotation, Topology, Vec3};

use super::star::StarLayout;

/// Per-vertex frames `F_i`, per-edge relative rotations `R_ij` (stored for
/// canonical `i < j`) and global rotations `G_i` with `G_i R_ij ≈ G_j`.
#[derive(Clone, Debug)]
pub struct FrameField {
    pub frames: Vec<Matrix3<f64>>,
    pub relative: Vec<Matrix3<f64>>,
    pub global: Vec<Matrix3<f64>>,
    /// Least-squares residual of the synchronization, before projection.
    pub residual: f64,
}

impl FrameField {
    /// `R_ij` for either orientation of the edge.
    pub fn relative_rotation(&self, topology: &Topology, i: usize, j: usize) -> Option<Matrix3<f64>> {
        let e = topology.edge_index(i, j)?;
        Some(if i < j { self.relative[e] } else { self.relative[e].transpose() })
    }
}

/// Canonical frame of a star: first column along spoke 0 (the smallest
/// neighbor), third column the area-weighted normal orthogonalized against
/// it, second column their cross product.
pub fn canonical_frame(star: &StarLayout) -> Matrix3<f64> {
    let c1 = star.positions[0].normalize();
    let mut normal = star.area_normal();
    normal -= c1 * c1.dot(&normal);
    if normal.norm() < 1e-12 {
        // Degenerate star; fall back to the first wedge.
        normal = star.positions[0].cross(&star.positions[1]);
        normal -= c1 * c1.dot(&normal);
    }
    let c3 = normal.normalize();
    let c2 = c3.cross(&c1);
    Matrix3::from_columns(&[c1, c2, c3])
}

/// Coordinates of star vertex `v` expressed in the star's canonical frame.
pub fn local_offset(star: &StarLayout, frame: &Matrix3<f64>, v: usize) -> Option<Vec3> {
    star.position_of(v).map(|q| frame.transpose() * q)
}

/// `R_ij` per canonical edge from the four vertices the two stars share:
/// the edge endpoints and the apices of its two faces.
pub fn relative_rotations(
    topology: &Topology,
    stars: &[StarLayout],
    frames: &[Matrix3<f64>],
) -> Result<Vec<Matrix3<f64>>> {
    topology
        .edges()
        .iter()
        .map(|e| {
            let (i, j) = (e.v[0], e.v[1]);
            let mut shared = vec![i, j];
            for &f in &e.faces {
                shared.extend(topology.faces()[f].iter().copied().filter(|&v| v != i && v != j));
            }
            let mut xi = Vec::with_capacity(4);
            let mut xj = Vec::with_capacity(4);
            for &v in &shared {
                match (
                    local_offset(&stars[i], &frames[i], v),
                    local_offset(&stars[j], &frames[j], v),
                ) {
                    (Some(a), Some(b)) => {
                        xi.push(a);
                        xj.push(b);
                    }
                    _ => {
                        return Err(Error::Solver(format!(
                            "stars {i} and {j} do not share vertex {v}"
                        )))
                    }
                }
            }
            let (ci, cj) = (centroid(&xi), centroid(&xj));
            let xi: Vec<Vec3> = xi.iter().map(|p| p - ci).collect();
            let xj: Vec<Vec3> = xj.iter().map(|p| p - cj).collect();
            Ok(align_rotation(&xj, &xi).into_inner())
        })
        .collect()
}

fn centroid(p: &[Vec3]) -> Vec3 {
    p.iter().sum::<Vec3>() / p.len() as f64
}

/// Solved global rotations and the synchronization residual.
#[derive(Clone, Debug)]
pub struct GlobalRotations {
    /// Projected rotations, `G_0 = I`.
    pub rotations: Vec<Matrix3<f64>>,
    /// Unprojected least-squares blocks.
    pub raw: Vec<Matrix3<f64>>,
    /// `sqrt(Σ |G_i R_ij - G_j|²)` of the unprojected solution.
    pub residual: f64,
}

/// Least squares `min Σ |G_i R_ij - G_j|²_F` with `G_0 = I`, then projection
/// of each block onto SO(3).
///
/// Each row `g` of `G` satisfies `g_i R_ij - g_j = 0` independently, so the
/// three rows share one sparse system and differ only in the pinned value of
/// `g_0`.
pub fn solve_global_rotations(topology: &Topology, relative: &[Matrix3<f64>]) -> Result<GlobalRotations> {
    let n = topology.n_vertices();
    if relative.len() != topology.n_edges() {
        return Err(Error::LengthMismatch {
            expected: topology.n_edges(),
            got: relative.len(),
        });
    }
    let mut lsq = LeastSquares::new(3 * n, 3);
    for a in 0..3 {
        let mut pin = [0.0; 3];
        pin[a] = 1.0;
        lsq.fix(a, &pin);
    }
    for (e, r) in topology.edges().iter().zip(relative) {
        let (i, j) = (e.v[0], e.v[1]);
        for c in 0..3 {
            let row: Vec<(usize, f64)> = (0..3)
                .map(|a| (3 * i + a, r[(a, c)]))
                .chain(std::iter::once((3 * j + c, -1.0)))
                .collect();
            lsq.add_row(&row, &[0.0; 3]);
        }
    }
    let sol = lsq.solve()?;
    let raw: Vec<Matrix3<f64>> = (0..n)
        .map(|i| Matrix3::from_fn(|row, col| sol.x[row][3 * i + col]))
        .collect();
    let residual = sol.residual.iter().map(|r| r * r).sum::<f64>().sqrt();
    if !residual.is_finite() {
        return Err(Error::Solver(format!("rotation synchronization residual {residual}")));
    }
    let rotations = raw.iter().map(nearest_rotation).collect();
    Ok(GlobalRotations { rotations, raw, residual })
}

/// Least squares `min Σ |(p_i - p_j) + G_i p_ij|²` over directed edges, one
/// solve per coordinate, translated so the centroid is at the origin.
///
/// `offsets` holds `(i, j, p_ij)` with `p_ij` the local position of `j` in
/// the frame of star `i`. Returns positions and the residual norm.
pub fn solve_vertex_positions(
    n_vertices: usize,
    rotations: &[Matrix3<f64>],
    offsets: &[(usize, usize, Vec3)],
) -> Result<(Vec<Vec3>, f64)> {
    if n_vertices == 0 {
        return Ok((Vec::new(), 0.0));
    }
    let mut lsq = LeastSquares::new(n_vertices, 3);
    lsq.fix(0, &[0.0; 3]);
    for &(i, j, q) in offsets {
        let w = -(rotations[i] * q);
        lsq.add_row(&[(i, 1.0), (j, -1.0)], w.as_slice());
    }
    let sol = lsq.solve().map_err(|e| match e {
        Error::Solver(msg) => Error::Solver(format!("position solve: {msg} (disconnected edge graph?)")),
        other => other,
    })?;
    let mut p: Vec<Vec3> = (0..n_vertices)
        .map(|v| Vec3::new(sol.x[0][v], sol.x[1][v], sol.x[2][v]))
        .collect();
    let c = centroid(&p);
    for q in &mut p {
        *q -= c;
    }
    let residual = sol.residual.iter().map(|r| r * r).sum::<f64>().sqrt();
    Ok((p, residual))
}
