//! Vertex stars laid out from target edge lengths and dihedrals.
//!
//! Around vertex `i` with ring `j_0 .. j_{m-1}`, wedge `r` is the triangle
//! `(i, j_r, j_{r+1})`. Its apex angle at `i` comes from the three target
//! lengths by the law of cosines. The wedges are chained by a moving frame
//! `(u, v, n)` (spoke direction, in-plane normal, wedge normal):
//!
//! ```text
//! W_{r+1} = W_r · Rz(γ_r) · Rx(δ_{r+1} - π)
//! ```
//!
//! which turns by the apex angle inside wedge `r` and then folds about the
//! next spoke so the two wedges meet at the target dihedral. When the chain
//! does not return to `W_0` the apex angles are corrected by the
//! minimum-norm change that closes it (Gauss-Newton on the rotation
//! defect), so dihedrals and spoke lengths stay exact while the ring edge
//! lengths absorb the error.

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::linalg::rotation_log;
use crate::mesh::{Topology, Vec3};

const CLOSURE_TOL: f64 = 1e-14;
const MAX_CLOSURE_STEPS: usize = 50;
/// Apex angles are kept inside `(MIN_APEX, π - MIN_APEX)` during correction.
const MIN_APEX: f64 = 1e-6;

/// One reconstructed vertex star in its own layout coordinates, the center
/// vertex at the origin and spoke 0 along +x.
#[derive(Clone, Debug)]
pub struct StarLayout {
    pub vertex: usize,
    /// Ring neighbors in counter-clockwise order.
    pub neighbors: Vec<usize>,
    /// Local position of each ring neighbor.
    pub positions: Vec<Vec3>,
    /// Apex angle of each wedge as targeted by the lengths.
    pub target_apex: Vec<f64>,
    /// Apex angle actually used after closing the ring.
    pub apex: Vec<f64>,
    /// Norm of the rotation defect of the uncorrected chain, radians.
    pub closure_defect: f64,
    /// Norm of the rotation defect left after correction.
    pub residual_defect: f64,
}

impl StarLayout {
    /// Local position of vertex `v` (the center is at the origin).
    pub fn position_of(&self, v: usize) -> Option<Vec3> {
        if v == self.vertex {
            return Some(Vec3::zeros());
        }
        self.neighbors.iter().position(|&n| n == v).map(|k| self.positions[k])
    }

    /// Area-weighted normal of the laid-out star.
    pub fn area_normal(&self) -> Vec3 {
        let m = self.positions.len();
        (0..m)
            .map(|r| self.positions[r].cross(&self.positions[(r + 1) % m]))
            .sum()
    }
}

/// Angle opposite side `c` in a triangle with sides `a`, `b`, `c`; `None`
/// when the triangle inequality fails.
pub fn law_of_cosines(a: f64, b: f64, c: f64) -> Option<f64> {
    if !(a > 0.0 && b > 0.0 && c > 0.0) || a + b <= c || a + c <= b || b + c <= a {
        return None;
    }
    Some(((a * a + b * b - c * c) / (2.0 * a * b)).clamp(-1.0, 1.0).acos())
}

fn rz(t: f64) -> Matrix3<f64> {
    let (s, c) = t.sin_cos();
    Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

fn rx(t: f64) -> Matrix3<f64> {
    let (s, c) = t.sin_cos();
    Matrix3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c)
}

/// Frames `W_0 .. W_m` of the wedge chain.
pub(crate) fn wedge_chain(apex: &[f64], fold: &[f64]) -> Vec<Matrix3<f64>> {
    let m = apex.len();
    let mut frames = Vec::with_capacity(m + 1);
    let mut w = Matrix3::identity();
    frames.push(w);
    for r in 0..m {
        w = w * rz(apex[r]) * rx(fold[(r + 1) % m] - std::f64::consts::PI);
        frames.push(w);
    }
    frames
}

/// Lays out the star of `vertex` from per-edge target `lengths` and
/// `dihedrals` (canonical edge order).
pub fn reconstruct_star(
    topology: &Topology,
    vertex: usize,
    lengths: &[f64],
    dihedrals: &[f64],
) -> Result<StarLayout> {
    let ring = topology.ring(vertex);
    let m = ring.len();
    let neighbors: Vec<usize> = ring.iter().map(|w| w.neighbor).collect();
    let spoke_len: Vec<f64> = ring.iter().map(|w| lengths[w.spoke]).collect();
    let fold: Vec<f64> = ring.iter().map(|w| dihedrals[w.spoke]).collect();

    let mut target_apex = Vec::with_capacity(m);
    for r in 0..m {
        let (a, b) = (neighbors[r], neighbors[(r + 1) % m]);
        let ring_edge = topology.edge_index(a, b).expect("ring neighbors share an edge");
        let (la, lb, lc) = (spoke_len[r], spoke_len[(r + 1) % m], lengths[ring_edge]);
        let g = law_of_cosines(la, lb, lc).ok_or(Error::InfeasibleWedge {
            face: ring[r].face,
            lengths: [la, lb, lc],
        })?;
        target_apex.push(g);
    }

    let defect = |apex: &[f64]| -> (Vector3<f64>, Vec<Matrix3<f64>>) {
        let frames = wedge_chain(apex, &fold);
        (rotation_log(&frames[m]), frames)
    };

    let mut apex = target_apex.clone();
    let (mut r, mut frames) = defect(&apex);
    let closure_defect = r.norm();
    let mut best = (r.norm(), apex.clone());
    for _ in 0..MAX_CLOSURE_STEPS {
        if r.norm() <= CLOSURE_TOL {
            break;
        }
        // d log(D) / d γ_r ≈ world normal of wedge r.
        let jac = DMatrix::from_fn(3, m, |row, col| frames[col][(row, 2)]);
        let rhs = DVector::from_column_slice(r.as_slice());
        let step = match jac.svd(true, true).solve(&rhs, 1e-12) {
            Ok(s) => s,
            Err(_) => break,
        };
        for (g, s) in apex.iter_mut().zip(step.iter()) {
            *g = (*g - s).clamp(MIN_APEX, std::f64::consts::PI - MIN_APEX);
        }
        let next = defect(&apex);
        r = next.0;
        frames = next.1;
        if r.norm() < best.0 {
            best = (r.norm(), apex.clone());
        } else if r.norm() > 2.0 * best.0 {
            break;
        }
    }
    let (residual_defect, apex) = best;
    let frames = wedge_chain(&apex, &fold);
    let positions = (0..m)
        .map(|k| frames[k].column(0).into_owned() * spoke_len[k])
        .collect();

    Ok(StarLayout {
        vertex,
        neighbors,
        positions,
        target_apex,
        apex,
        closure_defect,
        residual_defect,
    })
}
