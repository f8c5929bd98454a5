//! Alternating refinement of normals and positions toward target dihedrals.
//!
//! The energy is
//!
//! ```text
//! E(n, p) = α Σ_edges |M_kl n_k - n_l|² + β Σ_(edge, face k) |L_ijk (p_i - p_j) - n_k|²
//! ```
//!
//! where `M_kl` turns the normal of face `k` about the edge axis by the
//! target fold and `L_ijk` turns the edge vector a quarter turn toward `n_k`
//! and rescales it to unit length. Both are rebuilt from the current mesh
//! each iteration; the normals step and the positions step are linear least
//! squares.

use std::f64::consts::FRAC_PI_2;

use nalgebra::Matrix3;

use crate::error::{Error, Result};
use crate::linalg::{axis_rotation, LeastSquares};
use crate::mesh::{dihedral_angles, face_normals, DihedralVector, TriMesh, Vec3};

use super::{dihedral_error, MorphConfig};

/// Why the iteration ended.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Converged,
    MaxIterations,
    /// A step produced a degenerate mesh or a failed solve; the best earlier
    /// iterate is kept.
    Breakdown,
}

#[derive(Clone, Debug)]
pub struct Refinement {
    /// Best iterate (lowest dihedral error, the initial mesh included).
    pub mesh: TriMesh,
    pub initial_error: f64,
    pub final_error: f64,
    /// Completed iterations.
    pub iterations: usize,
    /// Dihedral error after each iteration, starting with the initial mesh.
    pub trace: Vec<f64>,
    pub stop: StopReason,
}

/// `M_kl` for every edge: the rotation about the edge axis (first to second
/// endpoint) by `π - δ`, which maps `n_k` to `n_l` when the fold is `δ`.
fn fold_rotations(mesh: &TriMesh, target: &[f64]) -> Vec<Matrix3<f64>> {
    let p = mesh.vertices();
    mesh.edges()
        .iter()
        .zip(target)
        .map(|(e, &delta)| {
            let axis = (p[e.v[1]] - p[e.v[0]]).normalize();
            axis_rotation(&axis, std::f64::consts::PI - delta)
        })
        .collect()
}

/// `L_ijk` with `d = p_i - p_j` for the edge's endpoints, such that
/// `L d = n` on the mesh it was built from.
fn lift(d: &Vec3, n: &Vec3) -> Matrix3<f64> {
    let len = d.norm();
    let axis = d.cross(n).normalize();
    axis_rotation(&axis, FRAC_PI_2) / len
}

/// Value of the energy for `normals` on `mesh`.
pub fn refinement_energy(
    mesh: &TriMesh,
    normals: &[Vec3],
    target: &[f64],
    alpha: f64,
    beta: f64,
) -> Result<f64> {
    let current = face_normals(mesh)?;
    let m = fold_rotations(mesh, target);
    let p = mesh.vertices();
    let mut e_fold = 0.0;
    let mut e_lift = 0.0;
    for (e, mk) in mesh.edges().iter().zip(&m) {
        let (k, l) = (e.faces[0], e.faces[1]);
        e_fold += (mk * normals[k] - normals[l]).norm_squared();
        let d = p[e.v[0]] - p[e.v[1]];
        for &f in &e.faces {
            let lf = lift(&d, &current[f]);
            e_lift += (lf * d - normals[f]).norm_squared();
        }
    }
    Ok(alpha * e_fold + beta * e_lift)
}

fn solve_normals(mesh: &TriMesh, current: &[Vec3], target: &[f64], config: &MorphConfig) -> Result<Vec<Vec3>> {
    let (sa, sb) = (config.alpha.sqrt(), config.beta.sqrt());
    let p = mesh.vertices();
    let mut lsq = LeastSquares::new(3 * mesh.n_faces(), 1);
    for (e, mk) in mesh.edges().iter().zip(fold_rotations(mesh, target)) {
        let (k, l) = (e.faces[0], e.faces[1]);
        for d in 0..3 {
            let mut row: Vec<(usize, f64)> = (0..3).map(|a| (3 * k + a, sa * mk[(d, a)])).collect();
            row.push((3 * l + d, -sa));
            lsq.add_row(&row, &[0.0]);
        }
        let dv = p[e.v[0]] - p[e.v[1]];
        for &f in &e.faces {
            let goal = lift(&dv, &current[f]) * dv;
            for d in 0..3 {
                lsq.add_row(&[(3 * f + d, sb)], &[sb * goal[d]]);
            }
        }
    }
    let x = lsq.solve()?.x.swap_remove(0);
    let mut out = Vec::with_capacity(mesh.n_faces());
    for f in 0..mesh.n_faces() {
        let n = Vec3::new(x[3 * f], x[3 * f + 1], x[3 * f + 2]);
        let len = n.norm();
        if !(len > 1e-12) {
            return Err(Error::Solver(format!("normal of face {f} collapsed")));
        }
        out.push(n / len);
    }
    Ok(out)
}

fn solve_positions(mesh: &TriMesh, current: &[Vec3], normals: &[Vec3]) -> Result<TriMesh> {
    let p = mesh.vertices();
    let mut lsq = LeastSquares::new(3 * mesh.n_vertices(), 1);
    for a in 0..3 {
        lsq.fix(a, &[p[0][a]]);
    }
    for e in mesh.edges() {
        let (i, j) = (e.v[0], e.v[1]);
        let dv = p[i] - p[j];
        for &f in &e.faces {
            let l = lift(&dv, &current[f]);
            for d in 0..3 {
                let row: Vec<(usize, f64)> = (0..3)
                    .flat_map(|a| [(3 * i + a, l[(d, a)]), (3 * j + a, -l[(d, a)])])
                    .collect();
                lsq.add_row(&row, &[normals[f][d]]);
            }
        }
    }
    let x = lsq.solve()?.x.swap_remove(0);
    let mut q: Vec<Vec3> = (0..mesh.n_vertices())
        .map(|v| Vec3::new(x[3 * v], x[3 * v + 1], x[3 * v + 2]))
        .collect();
    let c = q.iter().sum::<Vec3>() / q.len() as f64;
    for v in &mut q {
        *v -= c;
    }
    mesh.with_vertices(q)
}

/// One normals step followed by one positions step.
pub fn refinement_step(mesh: &TriMesh, target: &[f64], config: &MorphConfig) -> Result<TriMesh> {
    let current = face_normals(mesh)?;
    let normals = solve_normals(mesh, &current, target, config)?;
    let next = solve_positions(mesh, &current, &normals)?;
    // Reject collapsed geometry before anyone measures angles on it.
    crate::mesh::edge_lengths(&next)?;
    crate::mesh::face_areas(&next)?;
    Ok(next)
}

/// Alternating minimization from `initial` toward `target`, returning the
/// best iterate seen.
pub fn refine_embedding(initial: &TriMesh, target: &DihedralVector, config: &MorphConfig) -> Result<Refinement> {
    config.validate()?;
    if target.len() != initial.n_edges() {
        return Err(Error::LengthMismatch {
            expected: initial.n_edges(),
            got: target.len(),
        });
    }
    dihedral_angles(initial)?;
    let initial_error = dihedral_error(initial, target)?;
    let mut trace = vec![initial_error];
    let mut best = (initial_error, initial.clone());
    let mut mesh = initial.clone();
    let mut prev = initial_error;
    let mut stop = StopReason::MaxIterations;
    let mut iterations = 0;
    for _ in 0..config.max_iters {
        if prev <= config.abs_tol {
            stop = StopReason::Converged;
            break;
        }
        let next = match refinement_step(&mesh, target, config).and_then(|m| {
            let err = dihedral_error(&m, target)?;
            Ok((m, err))
        }) {
            Ok(r) => r,
            Err(e) => {
                log::warn!("refinement stopped after {iterations} iterations: {e}");
                stop = StopReason::Breakdown;
                break;
            }
        };
        iterations += 1;
        let (m, err) = next;
        trace.push(err);
        if err < best.0 {
            best = (err, m.clone());
        }
        let improvement = (prev - err) / prev;
        mesh = m;
        prev = err;
        if improvement < config.stop {
            stop = StopReason::Converged;
            break;
        }
    }
    Ok(Refinement {
        mesh: best.1,
        initial_error,
        final_error: best.0,
        iterations,
        trace,
        stop,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::procrustes_rms;
    use crate::shapes;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn energy_vanishes_on_exact_data() {
        for mesh in [shapes::icosphere(2), shapes::perturbed_icosahedron(0.2, 8), shapes::cube()] {
            let d = dihedral_angles(&mesh).unwrap();
            let n = face_normals(&mesh).unwrap();
            let e = refinement_energy(&mesh, &n, &d, 0.6, 0.4).unwrap();
            assert!(e <= 1e-12, "energy {e}");
        }
    }

    #[test]
    fn energy_is_positive_off_target() {
        let mesh = shapes::icosphere(1);
        let mut d = dihedral_angles(&mesh).unwrap();
        d.0[3] += 0.1;
        let n = face_normals(&mesh).unwrap();
        assert!(refinement_energy(&mesh, &n, &d, 0.6, 0.4).unwrap() > 1e-4);
    }

    #[test]
    fn own_dihedrals_are_a_fixed_point() {
        let mesh = shapes::perturbed_icosahedron(0.2, 9);
        let d = dihedral_angles(&mesh).unwrap();
        let r = refine_embedding(&mesh, &d, &MorphConfig::default()).unwrap();
        assert!(r.final_error <= 1e-8);
        let step = refinement_step(&mesh, &d, &MorphConfig::default()).unwrap();
        assert!(procrustes_rms(&step, &mesh).unwrap() < 1e-9);
        assert!(dihedral_error(&step, &d).unwrap() <= 1e-8);
    }

    #[test]
    fn one_step_reduces_error_after_position_noise() {
        let mesh = shapes::icosphere(2);
        let d = dihedral_angles(&mesh).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let noisy = mesh.map_vertices(|p| {
            p + Vec3::new(rng.random_range(-1e-3..1e-3), rng.random_range(-1e-3..1e-3), rng.random_range(-1e-3..1e-3))
        });
        let before = dihedral_error(&noisy, &d).unwrap();
        let step = refinement_step(&noisy, &d, &MorphConfig::default()).unwrap();
        let after = dihedral_error(&step, &d).unwrap();
        assert!(after < before, "{after} !< {before}");
    }

    #[test]
    fn best_iterate_never_worse_than_start() {
        let a = shapes::icosphere(2);
        let b = shapes::stretched(&a, nalgebra::Vector3::new(1.0, 1.0, 1.6));
        let target = dihedral_angles(&b).unwrap();
        let r = refine_embedding(&a, &target, &MorphConfig::default()).unwrap();
        assert!(r.final_error <= r.initial_error);
        assert_eq!(r.trace.len(), r.iterations + 1);
        assert_eq!(r.final_error, r.trace.iter().copied().fold(f64::INFINITY, f64::min));
    }
}
