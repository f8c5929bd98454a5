//! Small dense helpers and the sparse least-squares solver.

mod sparse;

use nalgebra::{Matrix3, Rotation3, Unit, Vector3};

pub use sparse::{LeastSquares, LsqSolution};

/// Closest rotation to `m` in Frobenius norm, by SVD; a reflection is
/// avoided by negating the least singular direction.
pub fn nearest_rotation(m: &Matrix3<f64>) -> Matrix3<f64> {
    let svd = m.svd(true, true);
    let (u, v_t) = (svd.u.expect("u"), svd.v_t.expect("v_t"));
    let mut d = Matrix3::identity();
    if (u * v_t).determinant() < 0.0 {
        let k = svd.singular_values.imin();
        d[(k, k)] = -1.0;
    }
    u * d * v_t
}

/// Rotation by `angle` about unit `axis` (right-hand rule).
pub fn axis_rotation(axis: &Vector3<f64>, angle: f64) -> Matrix3<f64> {
    Rotation3::from_axis_angle(&Unit::new_unchecked(*axis), angle).into_inner()
}

/// Rotation vector (axis times angle) of a rotation matrix.
///
/// Uses `atan2` of the skew and symmetric parts, which stays accurate near
/// the identity where an `acos` of the trace loses half the digits.
pub fn rotation_log(m: &Matrix3<f64>) -> Vector3<f64> {
    let skew = Vector3::new(m[(2, 1)] - m[(1, 2)], m[(0, 2)] - m[(2, 0)], m[(1, 0)] - m[(0, 1)]) * 0.5;
    let (s, c) = (skew.norm(), (m.trace() - 1.0) * 0.5);
    if c < 0.0 && s < 1e-6 {
        // Near a half turn the skew part vanishes; take the axis from the matrix.
        return Rotation3::from_matrix_unchecked(*m).scaled_axis();
    }
    if s == 0.0 {
        return Vector3::zeros();
    }
    skew * (s.atan2(c) / s)
}

/// `|R^T R - I|_max` and `det R`, for orthonormality checks.
pub fn rotation_defect(m: &Matrix3<f64>) -> (f64, f64) {
    let e = m.transpose() * m - Matrix3::identity();
    (e.amax(), m.determinant())
}
