//! Per-edge, per-face and per-corner quantities of an embedding.

use std::f64::consts::PI;
use std::ops::Deref;

use super::{TriMesh, Vec3};
use crate::error::{Error, Result};

/// Relative threshold for degenerate faces (against RMS edge length squared)
/// and degenerate edges (against RMS edge length).
pub const DEGENERACY_TOL: f64 = 1e-12;

/// Per-edge interior dihedral angles in canonical edge order, radians in `(0, 2π)`.
#[derive(Clone, Debug, PartialEq)]
pub struct DihedralVector(pub Vec<f64>);

impl Deref for DihedralVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DihedralVector {
    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    /// Euclidean distance between two dihedral vectors.
    pub fn distance(&self, other: &DihedralVector) -> Result<f64> {
        if self.len() != other.len() {
            return Err(Error::LengthMismatch {
                expected: self.len(),
                got: other.len(),
            });
        }
        Ok(self
            .iter()
            .zip(other.iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt())
    }

    pub fn norm(&self) -> f64 {
        self.iter().map(|a| a * a).sum::<f64>().sqrt()
    }
}

/// Inner angle of every (face, corner) slot, indexed `3 * face + corner`.
#[derive(Clone, Debug, PartialEq)]
pub struct CornerAngles(pub Vec<f64>);

impl Deref for CornerAngles {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl CornerAngles {
    pub fn face(&self, f: usize) -> [f64; 3] {
        [self.0[3 * f], self.0[3 * f + 1], self.0[3 * f + 2]]
    }
}

pub fn rms_edge_length(mesh: &TriMesh) -> f64 {
    let p = mesh.vertices();
    let sum: f64 = mesh
        .edges()
        .iter()
        .map(|e| (p[e.v[1]] - p[e.v[0]]).norm_squared())
        .sum();
    (sum / mesh.n_edges() as f64).sqrt()
}

/// Edge lengths in canonical edge order.
pub fn edge_lengths(mesh: &TriMesh) -> Result<Vec<f64>> {
    let p = mesh.vertices();
    let lengths: Vec<f64> = mesh
        .edges()
        .iter()
        .map(|e| (p[e.v[1]] - p[e.v[0]]).norm())
        .collect();
    let rms = (lengths.iter().map(|l| l * l).sum::<f64>() / lengths.len() as f64).sqrt();
    for (e, &l) in mesh.edges().iter().zip(&lengths) {
        if !(l >= DEGENERACY_TOL * rms) || l == 0.0 {
            return Err(Error::DegenerateEdge {
                edge: (e.v[0], e.v[1]),
                length: l,
            });
        }
    }
    Ok(lengths)
}

fn raw_normal(mesh: &TriMesh, f: usize) -> Vec3 {
    let p = mesh.vertices();
    let [a, b, c] = mesh.faces()[f];
    (p[b] - p[a]).cross(&(p[c] - p[a]))
}

/// Face areas; errors on any face below the degeneracy threshold.
pub fn face_areas(mesh: &TriMesh) -> Result<Vec<f64>> {
    let rms = rms_edge_length(mesh);
    let tol = DEGENERACY_TOL * rms * rms;
    (0..mesh.n_faces())
        .map(|f| {
            let area = 0.5 * raw_normal(mesh, f).norm();
            if area.is_finite() && area >= tol && area > 0.0 {
                Ok(area)
            } else {
                Err(Error::DegenerateFace { face: f, area })
            }
        })
        .collect()
}

/// Unit face normals, oriented by counter-clockwise winding.
pub fn face_normals(mesh: &TriMesh) -> Result<Vec<Vec3>> {
    face_areas(mesh)?;
    Ok((0..mesh.n_faces())
        .map(|f| raw_normal(mesh, f).normalize())
        .collect())
}

fn angle_between(u: &Vec3, v: &Vec3) -> f64 {
    u.cross(v).norm().atan2(u.dot(v))
}

/// Inner angle at every corner, `3 * face + corner`.
pub fn inner_angles(mesh: &TriMesh) -> Result<CornerAngles> {
    face_areas(mesh)?;
    let p = mesh.vertices();
    let mut out = Vec::with_capacity(3 * mesh.n_faces());
    for face in mesh.faces() {
        for c in 0..3 {
            let (i, j, k) = (face[c], face[(c + 1) % 3], face[(c + 2) % 3]);
            out.push(angle_between(&(p[j] - p[i]), &(p[k] - p[i])));
        }
    }
    Ok(CornerAngles(out))
}

/// Cotangent of every inner angle, `3 * face + corner`, computed as
/// `dot / |cross|` so it stays exact for right angles.
pub fn corner_cotangents(mesh: &TriMesh) -> Result<Vec<f64>> {
    face_areas(mesh)?;
    let p = mesh.vertices();
    let mut out = Vec::with_capacity(3 * mesh.n_faces());
    for face in mesh.faces() {
        for c in 0..3 {
            let (i, j, k) = (face[c], face[(c + 1) % 3], face[(c + 2) % 3]);
            let (u, v) = (p[j] - p[i], p[k] - p[i]);
            out.push(u.dot(&v) / u.cross(&v).norm());
        }
    }
    Ok(out)
}

/// Interior dihedral angle at every edge.
///
/// For edge `(a, b)` with `a < b`, let `k` be the face traversing `a -> b`
/// and `l` the other one. With `θ` the signed angle from `n_k` to `n_l`
/// about the unit axis `(p_b - p_a) / |p_b - p_a|`, the dihedral is `π - θ`.
/// Convex edges come out below `π`, reflex edges above, coplanar ones at `π`.
pub fn dihedral_angles(mesh: &TriMesh) -> Result<DihedralVector> {
    let normals = face_normals(mesh)?;
    Ok(dihedrals_from_normals(mesh, &normals))
}

pub(crate) fn dihedrals_from_normals(mesh: &TriMesh, normals: &[Vec3]) -> DihedralVector {
    let p = mesh.vertices();
    DihedralVector(
        mesh.edges()
            .iter()
            .map(|e| {
                let axis = (p[e.v[1]] - p[e.v[0]]).normalize();
                let (nk, nl) = (&normals[e.faces[0]], &normals[e.faces[1]]);
                PI - signed_angle(nk, nl, &axis)
            })
            .collect(),
    )
}

/// Signed angle rotating `from` onto `to` about unit `axis`, in `(-π, π]`.
pub(crate) fn signed_angle(from: &Vec3, to: &Vec3, axis: &Vec3) -> f64 {
    axis.dot(&from.cross(to)).atan2(from.dot(to))
}

/// Largest residual of `[(p_i - p_j) × (p_i - p_k)] cot β = [(p_i - p_j)·(p_i - p_k)] n`
/// over all corners, each divided by `|p_i - p_j| |p_i - p_k|`.
pub fn normal_cotangent_residual(mesh: &TriMesh) -> Result<f64> {
    let normals = face_normals(mesh)?;
    let angles = inner_angles(mesh)?;
    let p = mesh.vertices();
    let mut worst: f64 = 0.0;
    for (f, face) in mesh.faces().iter().enumerate() {
        for c in 0..3 {
            let (i, j, k) = (face[c], face[(c + 1) % 3], face[(c + 2) % 3]);
            let (u, v) = (p[i] - p[j], p[i] - p[k]);
            let cot = 1.0 / angles[3 * f + c].tan();
            let lhs = u.cross(&v) * cot;
            let rhs = normals[f] * u.dot(&v);
            let scale = u.norm() * v.norm();
            worst = worst.max((lhs - rhs).norm() / scale);
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shapes;
    use approx::assert_abs_diff_eq;
    use nalgebra::{Rotation3, Vector3};
    use proptest::prelude::*;

    fn single_tet(p: [Vec3; 4]) -> TriMesh {
        TriMesh::new(p.to_vec(), vec![[0, 2, 1], [0, 1, 3], [1, 2, 3], [2, 0, 3]]).unwrap()
    }

    #[test]
    fn regular_tetrahedron_lengths() {
        let m = shapes::tetrahedron();
        for l in edge_lengths(&m).unwrap() {
            assert_abs_diff_eq!(l, 8f64.sqrt(), epsilon = 1e-12);
        }
    }

    #[test]
    fn scaled_lengths_scale() {
        let m = shapes::icosahedron();
        let k = 3.7;
        let scaled = m.map_vertices(|p| p * k);
        for (a, b) in edge_lengths(&m).unwrap().iter().zip(edge_lengths(&scaled).unwrap()) {
            assert_abs_diff_eq!(a * k, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn cube_corner_triangle() {
        // The corner triangle of a unit cube has edges 1, 1, √2.
        let m = shapes::cube();
        let l = edge_lengths(&m).unwrap();
        let mut sorted = l.clone();
        sorted.sort_by(f64::total_cmp);
        assert_abs_diff_eq!(sorted[0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(sorted[sorted.len() - 1], 2f64.sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn equilateral_and_right_isoceles_angles() {
        let m = shapes::tetrahedron();
        for a in inner_angles(&m).unwrap().iter() {
            assert_abs_diff_eq!(*a, PI / 3.0, epsilon = 1e-12);
        }
        let t = single_tet([
            Vector3::new(0.0, 0.0, 0.0),
            Vector3::new(1.0, 0.0, 0.0),
            Vector3::new(0.0, 1.0, 0.0),
            Vector3::new(0.0, 0.0, 1.0),
        ]);
        // face [0, 2, 1] has legs of length 1 at vertex 0.
        let a = inner_angles(&t).unwrap().face(0);
        assert_abs_diff_eq!(a[0], PI / 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(a[1], PI / 4.0, epsilon = 1e-12);
        assert_abs_diff_eq!(a[2], PI / 4.0, epsilon = 1e-12);
    }

    #[test]
    fn normals_of_axis_face() {
        let t = single_tet([
            Vector3::new(0.0, 0.0, 0.0),
            Vector3::new(0.0, 1.0, 0.0),
            Vector3::new(1.0, 0.0, 0.0),
            Vector3::new(0.3, 0.3, -1.0),
        ]);
        // face [0, 2, 1] = (0,0,0), (1,0,0), (0,1,0)
        let n = face_normals(&t).unwrap();
        assert_abs_diff_eq!(n[0], Vector3::new(0.0, 0.0, 1.0), epsilon = 1e-15);
        let flipped = TriMesh::new(
            t.vertices().to_vec(),
            vec![[0, 1, 2], [0, 3, 1], [1, 3, 2], [2, 3, 0]],
        )
        .unwrap();
        assert_abs_diff_eq!(
            face_normals(&flipped).unwrap()[0],
            Vector3::new(0.0, 0.0, -1.0),
            epsilon = 1e-15
        );
    }

    #[test]
    fn regular_tetrahedron_dihedral() {
        // Oracle: outward normals of a regular tetrahedron meet at arccos(-1/3);
        // the interior wedge is the complement.
        let m = shapes::tetrahedron();
        let n = face_normals(&m).unwrap();
        let e = m.edges()[0];
        let between = n[e.faces[0]].dot(&n[e.faces[1]]).acos();
        assert_abs_diff_eq!(between, (-1.0f64 / 3.0).acos(), epsilon = 1e-12);
        for a in dihedral_angles(&m).unwrap().iter() {
            assert_abs_diff_eq!(*a, PI - between, epsilon = 1e-12);
            assert_abs_diff_eq!(*a, 1.230_959_417_340_774_6, epsilon = 1e-12);
        }
    }

    #[test]
    fn cube_dihedrals() {
        let m = shapes::cube();
        let l = edge_lengths(&m).unwrap();
        let d = dihedral_angles(&m).unwrap();
        for (len, a) in l.iter().zip(d.iter()) {
            if (len - 1.0).abs() < 1e-9 {
                assert_abs_diff_eq!(*a, PI / 2.0, epsilon = 1e-12);
            } else {
                assert_abs_diff_eq!(*a, PI, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn reflex_edge_exceeds_pi() {
        // Push one octahedron apex through the equator: its four edges turn reflex.
        let m = shapes::octahedron();
        let dented = m.map_vertices(|p| {
            if (p.z - 1.0).abs() < 1e-12 {
                Vector3::new(0.0, 0.0, -0.5)
            } else {
                *p
            }
        });
        let apex = m.vertices().iter().position(|p| (p.z - 1.0).abs() < 1e-12).unwrap();
        let d = dihedral_angles(&dented).unwrap();
        for (e, a) in dented.edges().iter().zip(d.iter()) {
            if e.v.contains(&apex) {
                assert!(*a > PI, "spoke dihedral {a}");
            }
        }
    }

    #[test]
    fn degenerate_face_rejected() {
        let v = vec![
            Vector3::new(0.0, 0.0, 0.0),
            Vector3::new(1.0, 0.0, 0.0),
            Vector3::new(2.0, 0.0, 0.0),
            Vector3::new(0.0, 1.0, 1.0),
        ];
        let r = TriMesh::new(v, vec![[0, 2, 1], [0, 1, 3], [1, 2, 3], [2, 0, 3]]);
        assert!(matches!(r, Err(Error::DegenerateFace { face: 0, .. })));
    }

    #[test]
    fn right_angle_corner_identity() {
        let t = single_tet([
            Vector3::new(0.0, 0.0, 0.0),
            Vector3::new(1.0, 0.0, 0.0),
            Vector3::new(0.0, 1.0, 0.0),
            Vector3::new(0.0, 0.0, 1.0),
        ]);
        assert!(normal_cotangent_residual(&t).unwrap() < 1e-15);
    }

    #[test]
    fn equilateral_corner_identity_by_hand() {
        // Direct evaluation: cross = (√3/2) n, dot = 1/2, cot = 1/√3.
        let (pi, pj, pk) = (
            Vector3::new(0.0, 0.0, 0.0),
            Vector3::new(1.0, 0.0, 0.0),
            Vector3::new(0.5, 3f64.sqrt() / 2.0, 0.0),
        );
        let (u, v) = (pi - pj, pi - pk);
        let lhs = u.cross(&v) * (1.0 / 3f64.sqrt());
        let rhs = Vector3::new(0.0, 0.0, 1.0) * u.dot(&v);
        assert_abs_diff_eq!(lhs, rhs, epsilon = 1e-15);
        assert_abs_diff_eq!(u.dot(&v), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn law_of_cosines_oracle() {
        let m = shapes::random_convex_hull(40, 11);
        let a = inner_angles(&m).unwrap();
        let p = m.vertices();
        for (f, face) in m.faces().iter().enumerate() {
            for c in 0..3 {
                let (i, j, k) = (face[c], face[(c + 1) % 3], face[(c + 2) % 3]);
                let (a2, b2, c2) = (
                    (p[j] - p[i]).norm_squared(),
                    (p[k] - p[i]).norm_squared(),
                    (p[j] - p[k]).norm_squared(),
                );
                let oracle = ((a2 + b2 - c2) / (2.0 * (a2 * b2).sqrt())).acos();
                assert_abs_diff_eq!(a[3 * f + c], oracle, epsilon = 1e-12);
            }
            let sum: f64 = a.face(f).iter().sum();
            assert_abs_diff_eq!(sum, PI, epsilon = 1e-9);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn rigid_and_scale_invariance(seed in 0u64..1000, ax in -1.0f64..1.0, ay in -1.0f64..1.0,
                                      angle in -3.0f64..3.0, k in 0.2f64..5.0,
                                      tx in -10.0f64..10.0) {
            let m = shapes::perturbed_icosahedron(0.15, seed);
            let rot = Rotation3::from_axis_angle(
                &nalgebra::Unit::new_normalize(Vector3::new(ax, ay, 0.7)), angle);
            let moved = m.map_vertices(|p| rot * p * k + Vector3::new(tx, 1.0, -2.0));
            let (d0, d1) = (dihedral_angles(&m).unwrap(), dihedral_angles(&moved).unwrap());
            for (a, b) in d0.iter().zip(d1.iter()) {
                prop_assert!((a - b).abs() < 1e-10);
            }
            let (b0, b1) = (inner_angles(&m).unwrap(), inner_angles(&moved).unwrap());
            for (a, b) in b0.iter().zip(b1.iter()) {
                prop_assert!((a - b).abs() < 1e-10);
            }
        }

        #[test]
        fn identities_hold_on_random_meshes(n in 8usize..60, seed in 0u64..10_000) {
            let m = shapes::random_convex_hull(n, seed);
            prop_assert_eq!(m.n_edges(), 3 * m.n_vertices() - 6);
            prop_assert_eq!(m.n_faces(), 2 * m.n_vertices() - 4);
            for nrm in face_normals(&m).unwrap() {
                prop_assert!((nrm.norm() - 1.0).abs() <= 1e-12);
            }
            prop_assert!(normal_cotangent_residual(&m).unwrap() <= 1e-10);
            let d = dihedral_angles(&m).unwrap();
            prop_assert!(d.iter().all(|&a| a > 0.0 && a < PI + 1e-9));
        }
    }
}
