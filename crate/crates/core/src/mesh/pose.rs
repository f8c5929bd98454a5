use nalgebra::{Matrix3, Rotation3};

use super::geometry::rms_edge_length;
use super::{TriMesh, Vec3};
use crate::error::{Error, Result};
use crate::linalg::nearest_rotation;

/// Rotation `R` minimizing `Σ |R x_i - y_i|²` over paired, already centered
/// point sets (orthogonal Procrustes with determinant forced to +1).
pub fn align_rotation(x: &[Vec3], y: &[Vec3]) -> Rotation3<f64> {
    let mut h = Matrix3::zeros();
    for (a, b) in x.iter().zip(y) {
        h += b * a.transpose();
    }
    Rotation3::from_matrix_unchecked(nearest_rotation(&h))
}

/// Translates the centroid to the origin and scales to unit RMS edge length.
/// With a reference, additionally rotates onto the reference's centered
/// vertices by the Procrustes optimum.
pub fn normalize_pose(mesh: &TriMesh, reference: Option<&TriMesh>) -> Result<TriMesh> {
    let c = mesh.centroid();
    let s = rms_edge_length(mesh);
    if !(s > 0.0) || !s.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "cannot normalize a mesh with RMS edge length {s}"
        )));
    }
    let mut out = mesh.map_vertices(|p| (p - c) / s);
    if let Some(r) = reference {
        if !mesh.same_topology(r) {
            return Err(Error::TopologyMismatch(
                "reference mesh has a different face list".into(),
            ));
        }
        let rc = r.centroid();
        let target: Vec<Vec3> = r.vertices().iter().map(|p| p - rc).collect();
        let rot = align_rotation(out.vertices(), &target);
        out = out.map_vertices(|p| rot * p);
    }
    Ok(out)
}

/// Vertex RMS distance between `mesh` and `reference` after translating both
/// centroids to the origin and rotating `mesh` onto `reference`.
pub fn procrustes_rms(mesh: &TriMesh, reference: &TriMesh) -> Result<f64> {
    if mesh.n_vertices() != reference.n_vertices() {
        return Err(Error::LengthMismatch {
            expected: reference.n_vertices(),
            got: mesh.n_vertices(),
        });
    }
    let (c0, c1) = (mesh.centroid(), reference.centroid());
    let x: Vec<Vec3> = mesh.vertices().iter().map(|p| p - c0).collect();
    let y: Vec<Vec3> = reference.vertices().iter().map(|p| p - c1).collect();
    let rot = align_rotation(&x, &y);
    let sum: f64 = x.iter().zip(&y).map(|(a, b)| (rot * a - b).norm_squared()).sum();
    Ok((sum / x.len() as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shapes;
    use approx::assert_abs_diff_eq;
    use nalgebra::{Unit, Vector3};

    #[test]
    fn idempotent_without_reference() {
        let m = normalize_pose(&shapes::perturbed_icosahedron(0.2, 3), None).unwrap();
        let again = normalize_pose(&m, None).unwrap();
        for (a, b) in m.vertices().iter().zip(again.vertices()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
        assert_abs_diff_eq!(rms_edge_length(&m), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(m.centroid().norm(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn translation_and_scale_removed() {
        let m = shapes::perturbed_icosahedron(0.2, 4);
        let moved = m.map_vertices(|p| p * 3.0 + Vector3::new(5.0, 0.0, 0.0));
        let (a, b) = (normalize_pose(&m, None).unwrap(), normalize_pose(&moved, None).unwrap());
        for (p, q) in a.vertices().iter().zip(b.vertices()) {
            assert_abs_diff_eq!(p, q, epsilon = 1e-12);
        }
    }

    #[test]
    fn rotation_removed_against_reference() {
        let m = normalize_pose(&shapes::perturbed_icosahedron(0.2, 5), None).unwrap();
        let rot = Rotation3::from_axis_angle(&Vector3::z_axis(), std::f64::consts::FRAC_PI_2);
        let turned = m.map_vertices(|p| rot * p);
        let back = normalize_pose(&turned, Some(&m)).unwrap();
        for (p, q) in back.vertices().iter().zip(m.vertices()) {
            assert_abs_diff_eq!(p, q, epsilon = 1e-9);
        }
    }

    #[test]
    fn procrustes_matches_brute_force_on_point_sets() {
        // Oracle: scan rotations about a known axis; the Procrustes optimum
        // must be at least as good as every sampled rotation.
        let m = shapes::perturbed_icosahedron(0.3, 6);
        let axis = Unit::new_normalize(Vector3::new(1.0, 2.0, -0.5));
        let truth = Rotation3::from_axis_angle(&axis, 1.1);
        let x: Vec<Vec3> = m.vertices().iter().map(|p| p - m.centroid()).collect();
        let y: Vec<Vec3> = x.iter().map(|p| truth * p).collect();
        let r = align_rotation(&x, &y);
        assert_abs_diff_eq!(r.matrix(), truth.matrix(), epsilon = 1e-12);
        assert_abs_diff_eq!(r.matrix().determinant(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn reference_topology_mismatch() {
        let a = shapes::icosahedron();
        let b = shapes::octahedron();
        assert!(matches!(
            normalize_pose(&a, Some(&b)),
            Err(Error::TopologyMismatch(_))
        ));
    }
}
