//! Morphing along straight segments in dihedral space.
//!
//! A frame is built in two stages. [`initialize_embedding`] lays out every
//! vertex star from target lengths and dihedrals, synchronizes the star
//! frames into global rotations and solves for positions. Then
//! [`refine_embedding`] alternates normal and position solves to pull the
//! achieved dihedrals toward the target.

mod frames;
mod refine;
mod star;

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::mesh::{dihedral_angles, edge_lengths, normalize_pose, DihedralVector, Topology, TriMesh, Vec3};
use crate::par;

pub use frames::{
    canonical_frame, local_offset, relative_rotations, solve_global_rotations, solve_vertex_positions,
    FrameField, GlobalRotations,
};
pub use refine::{refine_embedding, refinement_energy, refinement_step, Refinement, StopReason};
pub use star::{law_of_cosines, reconstruct_star, StarLayout};

#[derive(Clone, Debug, PartialEq)]
pub struct MorphConfig {
    /// Number of frames including both endpoints.
    pub frames: usize,
    pub alpha: f64,
    pub beta: f64,
    pub max_iters: usize,
    /// Relative improvement below which refinement stops.
    pub stop: f64,
    /// Interpolate edge lengths geometrically instead of linearly.
    pub log_lengths: bool,
    /// Dihedral error treated as exact; refinement does not start below it.
    pub abs_tol: f64,
}

impl Default for MorphConfig {
    fn default() -> Self {
        MorphConfig {
            frames: 10,
            alpha: 0.6,
            beta: 0.4,
            max_iters: 50,
            stop: 1e-4,
            log_lengths: false,
            abs_tol: 1e-12,
        }
    }
}

impl MorphConfig {
    pub fn validate(&self) -> Result<()> {
        if self.frames < 2 {
            return Err(Error::InvalidArgument(format!("need at least 2 frames, got {}", self.frames)));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite() && self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "weights must be positive, got alpha {} beta {}",
                self.alpha, self.beta
            )));
        }
        if !(self.stop >= 0.0) || !(self.abs_tol >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "thresholds must be non-negative, got stop {} abs_tol {}",
                self.stop, self.abs_tol
            )));
        }
        Ok(())
    }
}

fn check_lengths(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    Ok(())
}

/// `(1 - t) a + t b` componentwise. No angle wrapping is applied.
pub fn interpolate_dihedrals(a: &DihedralVector, b: &DihedralVector, t: f64) -> Result<DihedralVector> {
    check_lengths(a, b)?;
    Ok(DihedralVector(
        a.iter().zip(b.iter()).map(|(x, y)| lerp(*x, *y, t)).collect(),
    ))
}

/// Linear interpolation written so that `t = 0` and `t = 1` return the
/// endpoints bit for bit.
fn lerp(x: f64, y: f64, t: f64) -> f64 {
    (1.0 - t) * x + t * y
}

/// Componentwise interpolation of positive edge lengths.
pub fn interpolate_edge_lengths(a: &[f64], b: &[f64], t: f64, log_space: bool) -> Result<Vec<f64>> {
    check_lengths(a, b)?;
    if let Some(&x) = a.iter().chain(b).find(|&&x| !(x > 0.0 && x.is_finite())) {
        return Err(Error::InvalidArgument(format!("edge length {x} is not positive")));
    }
    Ok(a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            if log_space {
                lerp(x.ln(), y.ln(), t).exp()
            } else {
                lerp(x, y, t)
            }
        })
        .collect())
}

/// Euclidean distance between the mesh's dihedral vector and `target`.
pub fn dihedral_error(mesh: &TriMesh, target: &DihedralVector) -> Result<f64> {
    if target.len() != mesh.n_edges() {
        return Err(Error::LengthMismatch {
            expected: mesh.n_edges(),
            got: target.len(),
        });
    }
    dihedral_angles(mesh)?.distance(target)
}

/// Everything the initialization computed, for diagnostics and tests.
#[derive(Clone, Debug)]
pub struct Initialization {
    pub mesh: TriMesh,
    pub stars: Vec<StarLayout>,
    pub field: FrameField,
    /// Residual of the position solve.
    pub position_residual: f64,
}

impl Initialization {
    /// Largest star closure defect before correction, radians.
    pub fn max_closure_defect(&self) -> f64 {
        self.stars.iter().map(|s| s.closure_defect).fold(0.0, f64::max)
    }
}

fn check_faces_feasible(topology: &Topology, lengths: &[f64]) -> Result<()> {
    for (f, fe) in topology.face_edges().iter().enumerate() {
        let l = [lengths[fe[0]], lengths[fe[1]], lengths[fe[2]]];
        if law_of_cosines(l[0], l[1], l[2]).is_none() {
            return Err(Error::InfeasibleWedge { face: f, lengths: l });
        }
    }
    Ok(())
}

/// Initialization with all intermediate results.
pub fn initialize_detailed(topology: &Arc<Topology>, lengths: &[f64], dihedrals: &[f64]) -> Result<Initialization> {
    for (what, got) in [("lengths", lengths.len()), ("dihedrals", dihedrals.len())] {
        if got != topology.n_edges() {
            log::debug!("{what} has {got} entries");
            return Err(Error::LengthMismatch {
                expected: topology.n_edges(),
                got,
            });
        }
    }
    check_faces_feasible(topology, lengths)?;
    let stars = (0..topology.n_vertices())
        .map(|i| reconstruct_star(topology, i, lengths, dihedrals))
        .collect::<Result<Vec<_>>>()?;
    let frames: Vec<_> = stars.iter().map(canonical_frame).collect();
    let relative = relative_rotations(topology, &stars, &frames)?;
    let global = solve_global_rotations(topology, &relative)?;

    let mut offsets = Vec::with_capacity(2 * topology.n_edges());
    for (i, (star, frame)) in stars.iter().zip(&frames).enumerate() {
        for &j in &star.neighbors {
            let q = local_offset(star, frame, j).expect("neighbor is in its own star");
            offsets.push((i, j, q));
        }
    }
    let (positions, position_residual) = solve_vertex_positions(topology.n_vertices(), &global.rotations, &offsets)?;
    let raw = TriMesh::from_topology(Arc::clone(topology), positions)?;
    let mesh = normalize_pose(&raw, None)?;
    Ok(Initialization {
        mesh,
        stars,
        field: FrameField {
            frames,
            relative,
            global: global.rotations,
            residual: global.residual,
        },
        position_residual,
    })
}

/// Embedding whose edge lengths and dihedrals approximate the targets,
/// centered and scaled to unit RMS edge length.
pub fn initialize_embedding(topology: &Arc<Topology>, lengths: &[f64], dihedrals: &[f64]) -> Result<TriMesh> {
    initialize_detailed(topology, lengths, dihedrals).map(|i| i.mesh)
}

/// One reconstructed frame.
#[derive(Clone, Debug)]
pub struct Frame {
    pub mesh: TriMesh,
    pub init_error: f64,
    pub final_error: f64,
    pub iterations: usize,
    pub trace: Vec<f64>,
    pub stop: StopReason,
}

/// A frame position along the segment and its outcome.
#[derive(Clone, Debug)]
pub struct FrameOutcome {
    pub index: usize,
    pub t: f64,
    pub target: DihedralVector,
    pub result: std::result::Result<Frame, String>,
}

#[derive(Clone, Debug)]
pub struct MorphResult {
    /// Pose-normalized start mesh.
    pub a: TriMesh,
    /// Pose-normalized end mesh, aligned to `a`.
    pub b: TriMesh,
    pub frames: Vec<FrameOutcome>,
}

impl MorphResult {
    pub fn failures(&self) -> usize {
        self.frames.iter().filter(|f| f.result.is_err()).count()
    }
}

/// Sample parameter of frame `k` out of `n`.
pub fn frame_parameter(k: usize, n: usize) -> f64 {
    if k + 1 == n {
        1.0
    } else {
        k as f64 / (n - 1) as f64
    }
}

fn build_frame(
    a: &TriMesh,
    lengths: &[f64],
    target: &DihedralVector,
    config: &MorphConfig,
) -> Result<Frame> {
    let init = initialize_embedding(a.topology(), lengths, target)?;
    let refined = refine_embedding(&init, target, config)?;
    let mesh = normalize_pose(&refined.mesh, Some(a))?;
    Ok(Frame {
        mesh,
        init_error: refined.initial_error,
        final_error: refined.final_error,
        iterations: refined.iterations,
        trace: refined.trace,
        stop: refined.stop,
    })
}

/// Frames along the dihedral segment from `a` to `b`. Frames are computed
/// in parallel; a failing frame is reported in its outcome and the others
/// still run.
pub fn morph(a: &TriMesh, b: &TriMesh, config: &MorphConfig) -> Result<MorphResult> {
    config.validate()?;
    if !a.same_topology(b) {
        return Err(Error::TopologyMismatch("morph endpoints have different face lists".into()));
    }
    let a = normalize_pose(a, None)?;
    let b = normalize_pose(b, Some(&a))?;
    let (da, db) = (dihedral_angles(&a)?, dihedral_angles(&b)?);
    let (la, lb) = (edge_lengths(&a)?, edge_lengths(&b)?);
    let wide = da.iter().zip(db.iter()).filter(|(x, y)| (*x - *y).abs() > std::f64::consts::PI).count();
    if wide > 0 {
        log::warn!("{wide} edges change dihedral by more than π; interpolating without wrapping");
    }

    let frames = par::map_range(config.frames, |k| {
        let t = frame_parameter(k, config.frames);
        let target = interpolate_dihedrals(&da, &db, t).expect("same length");
        let result = interpolate_edge_lengths(&la, &lb, t, config.log_lengths)
            .and_then(|lengths| build_frame(&a, &lengths, &target, config))
            .map_err(|e| e.to_string());
        if let Err(msg) = &result {
            log::warn!("frame {k} (t = {t}) failed: {msg}");
        }
        FrameOutcome { index: k, t, target, result }
    });
    Ok(MorphResult { a, b, frames })
}

/// Vertices of `mesh` projected on an axis, `(min, max)`.
pub fn extent(mesh: &TriMesh, axis: &Vec3) -> (f64, f64) {
    mesh.vertices()
        .iter()
        .map(|p| p.dot(axis))
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(x), hi.max(x)))
}
