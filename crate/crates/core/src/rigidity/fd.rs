//! Finite-difference checks of the vertex and cotangent equations.
//!
//! Along the straight path `p(t) = p + t v` the dihedral rates `α'` and
//! corner rates `β'` are estimated by central differences at `t = 0`. With
//! interior dihedrals and outward normals the vertex equation reads
//! `Σ_j α'_ij (p_j - p_i)/|p_j - p_i| + Σ_f β'_{f,i} n_f = 0`.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::mesh::{corner_cotangents, dihedral_angles, face_normals, inner_angles, rms_edge_length, TriMesh, Vec3};

pub const DEFAULT_STEP: f64 = 1e-5;

/// Contract factor: residuals above `CONTRACT * |v|_max / rms_edge` trigger
/// a Richardson retry with steps `h` and `h / 2`.
const CONTRACT: f64 = 1e-5;

#[derive(Clone, Debug)]
pub struct FdRates {
    /// `α'` per canonical edge.
    pub dihedral: Vec<f64>,
    /// `β'` per corner slot `3 * face + corner`.
    pub corner: Vec<f64>,
}

fn check_inputs(mesh: &TriMesh, velocity: &[Vec3], h: f64) -> Result<()> {
    if velocity.len() != mesh.n_vertices() {
        return Err(Error::LengthMismatch {
            expected: mesh.n_vertices(),
            got: velocity.len(),
        });
    }
    if velocity.iter().any(|v| !v.iter().all(|x| x.is_finite())) {
        return Err(Error::InvalidArgument("velocity must be finite".into()));
    }
    if !(1e-7..=1e-3).contains(&h) {
        return Err(Error::InvalidArgument(format!("step {h} outside [1e-7, 1e-3]")));
    }
    Ok(())
}

fn displaced(mesh: &TriMesh, velocity: &[Vec3], t: f64) -> Result<TriMesh> {
    mesh.with_vertices(mesh.vertices().iter().zip(velocity).map(|(p, v)| p + v * t).collect())
}

/// Central-difference rates of dihedrals and inner angles.
pub fn finite_difference_rates(mesh: &TriMesh, velocity: &[Vec3], h: f64) -> Result<FdRates> {
    check_inputs(mesh, velocity, h)?;
    let (fwd, bwd) = (displaced(mesh, velocity, h)?, displaced(mesh, velocity, -h)?);
    let (a1, a0) = (dihedral_angles(&fwd)?, dihedral_angles(&bwd)?);
    let mut dihedral = Vec::with_capacity(a1.len());
    for (k, (x, y)) in a1.iter().zip(a0.iter()).enumerate() {
        let d = x - y;
        if d.abs() > PI {
            let e = mesh.edges()[k];
            return Err(Error::AngleWrap {
                location: format!("edge ({}, {})", e.v[0], e.v[1]),
            });
        }
        dihedral.push(d / (2.0 * h));
    }
    let (b1, b0) = (inner_angles(&fwd)?, inner_angles(&bwd)?);
    let corner = b1.iter().zip(b0.iter()).map(|(x, y)| (x - y) / (2.0 * h)).collect();
    Ok(FdRates { dihedral, corner })
}

fn richardson(mesh: &TriMesh, velocity: &[Vec3], h: f64) -> Result<FdRates> {
    let coarse = finite_difference_rates(mesh, velocity, h)?;
    let fine = finite_difference_rates(mesh, velocity, (h / 2.0).max(1e-7))?;
    let mix = |c: &[f64], f: &[f64]| -> Vec<f64> {
        c.iter().zip(f).map(|(c, f)| (4.0 * f - c) / 3.0).collect()
    };
    Ok(FdRates {
        dihedral: mix(&coarse.dihedral, &fine.dihedral),
        corner: mix(&coarse.corner, &fine.corner),
    })
}

fn contract(mesh: &TriMesh, velocity: &[Vec3]) -> f64 {
    let vmax = velocity.iter().map(|v| v.norm()).fold(0.0, f64::max);
    CONTRACT * vmax / rms_edge_length(mesh)
}

/// The edge contribution `Σ_j α'_ij (p_j - p_i)/|p_j - p_i|` at every vertex.
pub fn corner_rates_vertex_term(mesh: &TriMesh, dihedral_rates: &[f64]) -> Vec<Vec3> {
    let p = mesh.vertices();
    let mut out = vec![Vec3::zeros(); mesh.n_vertices()];
    for (e, &rate) in mesh.edges().iter().zip(dihedral_rates) {
        let (a, b) = (e.v[0], e.v[1]);
        let dir = (p[b] - p[a]).normalize();
        out[a] += dir * rate;
        out[b] -= dir * rate;
    }
    out
}

fn vertex_residual(mesh: &TriMesh, rates: &FdRates) -> Result<f64> {
    let normals = face_normals(mesh)?;
    let mut sums = corner_rates_vertex_term(mesh, &rates.dihedral);
    for (f, face) in mesh.faces().iter().enumerate() {
        for (c, &v) in face.iter().enumerate() {
            sums[v] += normals[f] * rates.corner[3 * f + c];
        }
    }
    Ok(sums.iter().map(|s| s.norm()).fold(0.0, f64::max))
}

fn cotangent_residual(mesh: &TriMesh, rates: &FdRates) -> Result<f64> {
    let cot = corner_cotangents(mesh)?;
    let angles = inner_angles(mesh)?;
    if let Some(slot) = angles.iter().position(|&a| !(1e-9..=PI - 1e-9).contains(&a)) {
        return Err(Error::SingularCorner {
            face: slot / 3,
            corner: slot % 3,
            angle: angles[slot],
        });
    }
    let mut sums = vec![0.0; mesh.n_vertices()];
    for (f, face) in mesh.faces().iter().enumerate() {
        for k in 0..3 {
            let (ca, cb) = (3 * f + (k + 1) % 3, 3 * f + (k + 2) % 3);
            sums[face[k]] += cot[ca] * rates.corner[ca] - cot[cb] * rates.corner[cb];
        }
    }
    Ok(sums.iter().map(|s| s.abs()).fold(0.0, f64::max))
}

fn validate(
    mesh: &TriMesh,
    velocity: &[Vec3],
    h: f64,
    residual: impl Fn(&TriMesh, &FdRates) -> Result<f64>,
) -> Result<f64> {
    let first = residual(mesh, &finite_difference_rates(mesh, velocity, h)?)?;
    if first <= contract(mesh, velocity) {
        return Ok(first);
    }
    let refined = residual(mesh, &richardson(mesh, velocity, h)?)?;
    Ok(first.min(refined))
}

/// Largest vertex-equation residual over all vertices along `p + t v`.
pub fn validate_vertex_equation(mesh: &TriMesh, velocity: &[Vec3], h: f64) -> Result<f64> {
    validate(mesh, velocity, h, vertex_residual)
}

/// Largest cotangent-equation residual over all vertices along `p + t v`.
pub fn validate_cotangent_equation(mesh: &TriMesh, velocity: &[Vec3], h: f64) -> Result<f64> {
    validate(mesh, velocity, h, cotangent_residual)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rigidity::assemble_rigidity_matrix;
    use crate::shapes;
    use nalgebra::Vector3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_velocity(n: usize, seed: u64) -> Vec<Vec3> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                Vector3::new(
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                )
            })
            .collect()
    }

    #[test]
    fn translation_has_zero_residual() {
        let m = shapes::perturbed_icosahedron(0.15, 1);
        let v = vec![Vector3::new(0.3, -1.0, 2.0); m.n_vertices()];
        assert!(validate_vertex_equation(&m, &v, DEFAULT_STEP).unwrap() <= 1e-9);
        assert!(validate_cotangent_equation(&m, &v, DEFAULT_STEP).unwrap() <= 1e-9);
    }

    #[test]
    fn rotation_field_has_zero_residual() {
        let m = shapes::perturbed_icosahedron(0.15, 2);
        let w = Vector3::new(0.2, -0.7, 0.4);
        let v: Vec<Vec3> = m.vertices().iter().map(|p| w.cross(p)).collect();
        assert!(validate_vertex_equation(&m, &v, DEFAULT_STEP).unwrap() <= 1e-9);
        assert!(validate_cotangent_equation(&m, &v, DEFAULT_STEP).unwrap() <= 1e-9);
    }

    #[test]
    fn scaling_field_keeps_angles() {
        let m = shapes::perturbed_icosahedron(0.15, 3);
        let v = m.vertices().to_vec();
        assert!(validate_cotangent_equation(&m, &v, DEFAULT_STEP).unwrap() <= 1e-9);
    }

    #[test]
    fn random_velocity_satisfies_both_equations() {
        let m = shapes::perturbed_icosahedron(0.15, 4);
        for seed in 0..5 {
            let v = random_velocity(m.n_vertices(), seed);
            let rv = validate_vertex_equation(&m, &v, DEFAULT_STEP).unwrap();
            let rc = validate_cotangent_equation(&m, &v, DEFAULT_STEP).unwrap();
            assert!(rv <= 1e-6, "vertex residual {rv}");
            assert!(rc <= 1e-6, "cotangent residual {rc}");
        }
    }

    #[test]
    fn matrix_rows_agree_with_finite_differences() {
        let m = shapes::perturbed_icosahedron(0.15, 5);
        let mat = assemble_rigidity_matrix(&m).unwrap();
        let v = random_velocity(m.n_vertices(), 42);
        let rates = finite_difference_rates(&m, &v, DEFAULT_STEP).unwrap();
        let y = mat.mul_vec(&rates.corner);
        for r in mat.face_rows().chain(mat.cotangent_rows()) {
            assert!(y[r].abs() <= 1e-8, "row {r}: {}", y[r]);
        }
        let edge_term = corner_rates_vertex_term(&m, &rates.dihedral);
        for (i, e) in edge_term.iter().enumerate() {
            for d in 0..3 {
                assert!((y[3 * i + d] + e[d]).abs() <= 1e-6);
            }
        }
    }

    #[test]
    fn step_outside_range_is_rejected() {
        let m = shapes::icosahedron();
        let v = vec![Vec3::zeros(); 12];
        assert!(validate_vertex_equation(&m, &v, 1e-2).is_err());
        assert!(validate_vertex_equation(&m, &v[..3], 1e-5).is_err());
    }
}
