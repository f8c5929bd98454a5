//! Deterministic test shapes: platonic solids, convex hulls of point clouds,
//! and the smooth synthetic families used for morphing and PCA corpora.

use std::collections::HashMap;
use std::f64::consts::PI;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::mesh::{TriMesh, Vec3};

/// Flips faces whose normal points toward the centroid. Only valid for
/// star-shaped meshes around their vertex centroid.
fn orient_outward(vertices: &[Vec3], faces: &mut [[usize; 3]]) {
    let c = vertices.iter().sum::<Vec3>() / vertices.len() as f64;
    for f in faces.iter_mut() {
        let (a, b, d) = (vertices[f[0]], vertices[f[1]], vertices[f[2]]);
        let n = (b - a).cross(&(d - a));
        if n.dot(&((a + b + d) / 3.0 - c)) < 0.0 {
            f.swap(1, 2);
        }
    }
}

fn build(vertices: Vec<Vec3>, mut faces: Vec<[usize; 3]>) -> TriMesh {
    orient_outward(&vertices, &mut faces);
    TriMesh::new(vertices, faces).expect("generated shape is a valid closed mesh")
}

/// Regular tetrahedron with vertices `(1,1,1), (1,-1,-1), (-1,1,-1), (-1,-1,1)`.
pub fn tetrahedron() -> TriMesh {
    let v = vec![
        Vector3::new(1.0, 1.0, 1.0),
        Vector3::new(1.0, -1.0, -1.0),
        Vector3::new(-1.0, 1.0, -1.0),
        Vector3::new(-1.0, -1.0, 1.0),
    ];
    build(v, vec![[0, 1, 2], [0, 1, 3], [0, 2, 3], [1, 2, 3]])
}

pub fn octahedron() -> TriMesh {
    let v = vec![
        Vector3::new(1.0, 0.0, 0.0),
        Vector3::new(-1.0, 0.0, 0.0),
        Vector3::new(0.0, 1.0, 0.0),
        Vector3::new(0.0, -1.0, 0.0),
        Vector3::new(0.0, 0.0, 1.0),
        Vector3::new(0.0, 0.0, -1.0),
    ];
    let mut faces = Vec::new();
    for &x in &[0, 1] {
        for &y in &[2, 3] {
            for &z in &[4, 5] {
                faces.push([x, y, z]);
            }
        }
    }
    build(v, faces)
}

/// Unit cube `[0,1]^3`, each square split along a diagonal.
pub fn cube() -> TriMesh {
    let v: Vec<Vec3> = (0..8)
        .map(|i| Vector3::new((i & 1) as f64, ((i >> 1) & 1) as f64, ((i >> 2) & 1) as f64))
        .collect();
    let quads = [
        [0, 1, 3, 2],
        [4, 5, 7, 6],
        [0, 1, 5, 4],
        [2, 3, 7, 6],
        [0, 2, 6, 4],
        [1, 3, 7, 5],
    ];
    let faces = quads
        .iter()
        .flat_map(|q| [[q[0], q[1], q[2]], [q[0], q[2], q[3]]])
        .collect();
    build(v, faces)
}

pub fn icosahedron() -> TriMesh {
    let g = (1.0 + 5f64.sqrt()) / 2.0;
    let mut v = Vec::new();
    for &a in &[-1.0, 1.0] {
        for &b in &[-g, g] {
            v.push(Vector3::new(0.0, a, b));
            v.push(Vector3::new(a, b, 0.0));
            v.push(Vector3::new(b, 0.0, a));
        }
    }
    convex_hull(&v).expect("icosahedron hull")
}

/// Icosahedron subdivided `level` times with vertices projected to the unit
/// sphere (`10 * 4^level + 2` vertices).
pub fn icosphere(level: usize) -> TriMesh {
    let base = icosahedron();
    let mut v: Vec<Vec3> = base.vertices().iter().map(|p| p.normalize()).collect();
    let mut faces = base.faces().to_vec();
    for _ in 0..level {
        let mut mid: HashMap<(usize, usize), usize> = HashMap::new();
        let mut next = Vec::with_capacity(faces.len() * 4);
        for f in &faces {
            let mut m = [0; 3];
            for c in 0..3 {
                let (a, b) = (f[c], f[(c + 1) % 3]);
                m[c] = *mid.entry((a.min(b), a.max(b))).or_insert_with(|| {
                    v.push(((v[a] + v[b]) * 0.5).normalize());
                    v.len() - 1
                });
            }
            next.push([f[0], m[0], m[2]]);
            next.push([f[1], m[1], m[0]]);
            next.push([f[2], m[2], m[1]]);
            next.push([m[0], m[1], m[2]]);
        }
        faces = next;
    }
    TriMesh::new(v, faces).expect("icosphere")
}

/// `n` points of a Fibonacci lattice on the unit sphere.
pub fn fibonacci_points(n: usize) -> Vec<Vec3> {
    let golden = PI * (3.0 - 5f64.sqrt());
    (0..n)
        .map(|i| {
            let z = 1.0 - (2.0 * i as f64 + 1.0) / n as f64;
            let r = (1.0 - z * z).sqrt();
            let t = golden * i as f64;
            Vector3::new(r * t.cos(), r * t.sin(), z)
        })
        .collect()
}

/// Convex hull of a near-uniform `n`-point Fibonacci lattice on the unit sphere.
pub fn fibonacci_sphere(n: usize) -> TriMesh {
    convex_hull(&fibonacci_points(n)).expect("fibonacci sphere hull")
}

/// `n` points drawn uniformly on the unit sphere.
pub fn random_sphere_points(n: usize, seed: u64) -> Vec<Vec3> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let z: f64 = rng.random_range(-1.0..1.0);
            let t: f64 = rng.random_range(0.0..2.0 * PI);
            let r = (1.0 - z * z).sqrt();
            Vector3::new(r * t.cos(), r * t.sin(), z)
        })
        .collect()
}

/// Convex hull of `n` uniform random points on the unit sphere.
pub fn random_convex_hull(n: usize, seed: u64) -> TriMesh {
    convex_hull(&random_sphere_points(n.max(4), seed)).expect("random hull")
}

/// Icosahedron with every vertex displaced by a uniform random offset of
/// at most `amount` per coordinate.
pub fn perturbed_icosahedron(amount: f64, seed: u64) -> TriMesh {
    let m = icosahedron();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    m.map_vertices(|p| {
        p + Vector3::new(
            rng.random_range(-amount..=amount),
            rng.random_range(-amount..=amount),
            rng.random_range(-amount..=amount),
        )
    })
}

/// Axis-aligned stretch of every vertex.
pub fn stretched(mesh: &TriMesh, s: Vec3) -> TriMesh {
    mesh.map_vertices(|p| p.component_mul(&s))
}

/// Bends a mesh around the z axis: a point at abscissa `x` is carried onto a
/// circular arc of radius `radius`, the y coordinate becoming the offset
/// from that arc.
pub fn bent(mesh: &TriMesh, radius: f64) -> TriMesh {
    mesh.map_vertices(|p| {
        let theta = p.x / radius;
        let r = radius - p.y;
        Vector3::new(r * theta.sin(), radius - r * theta.cos(), p.z)
    })
}

/// Vertex count and faces of an `n x m` torus grid (Euler characteristic 0).
pub fn torus_faces(n: usize, m: usize) -> (usize, Vec<[usize; 3]>) {
    let idx = |i: usize, j: usize| (i % n) * m + (j % m);
    let mut faces = Vec::new();
    for i in 0..n {
        for j in 0..m {
            faces.push([idx(i, j), idx(i + 1, j), idx(i + 1, j + 1)]);
            faces.push([idx(i, j), idx(i + 1, j + 1), idx(i, j + 1)]);
        }
    }
    (n * m, faces)
}

/// Convex hull by incremental insertion. Points strictly inside the hull are
/// dropped and the remaining vertices renumbered in input order.
pub fn convex_hull(points: &[Vec3]) -> Option<TriMesh> {
    let n = points.len();
    if n < 4 {
        return None;
    }
    let scale = points.iter().map(|p| p.norm()).fold(0.0, f64::max).max(1e-300);
    let eps = 1e-10 * scale;

    let i0 = 0;
    let i1 = (0..n).max_by(|&a, &b| {
        (points[a] - points[i0]).norm().total_cmp(&(points[b] - points[i0]).norm())
    })?;
    let dir = (points[i1] - points[i0]).normalize();
    let line_dist = |p: &Vec3| {
        let d = p - points[i0];
        (d - dir * d.dot(&dir)).norm()
    };
    let i2 = (0..n).max_by(|&a, &b| line_dist(&points[a]).total_cmp(&line_dist(&points[b])))?;
    let normal = (points[i1] - points[i0]).cross(&(points[i2] - points[i0])).normalize();
    let plane_dist = |p: &Vec3| (p - points[i0]).dot(&normal).abs();
    let i3 = (0..n).max_by(|&a, &b| plane_dist(&points[a]).total_cmp(&plane_dist(&points[b])))?;
    if line_dist(&points[i2]) < eps || plane_dist(&points[i3]) < eps {
        return None;
    }

    let mut faces: Vec<[usize; 3]> = vec![[i0, i1, i2], [i0, i1, i3], [i0, i2, i3], [i1, i2, i3]];
    let inner = (points[i0] + points[i1] + points[i2] + points[i3]) / 4.0;
    for f in faces.iter_mut() {
        let nrm = (points[f[1]] - points[f[0]]).cross(&(points[f[2]] - points[f[0]]));
        if nrm.dot(&(points[f[0]] - inner)) < 0.0 {
            f.swap(1, 2);
        }
    }
    let mut alive = vec![true; 4];
    let mut half: HashMap<(usize, usize), usize> = HashMap::new();
    for (fi, f) in faces.iter().enumerate() {
        for c in 0..3 {
            half.insert((f[c], f[(c + 1) % 3]), fi);
        }
    }

    let distance = |f: &[usize; 3], p: &Vec3| {
        let nrm = (points[f[1]] - points[f[0]]).cross(&(points[f[2]] - points[f[0]]));
        nrm.normalize().dot(&(p - points[f[0]]))
    };

    for (pi, p) in points.iter().enumerate() {
        if [i0, i1, i2, i3].contains(&pi) {
            continue;
        }
        let visible: Vec<usize> = (0..faces.len())
            .filter(|&fi| alive[fi] && distance(&faces[fi], p) > eps)
            .collect();
        if visible.is_empty() {
            continue;
        }
        let mut horizon = Vec::new();
        for &fi in &visible {
            let f = faces[fi];
            for c in 0..3 {
                let (a, b) = (f[c], f[(c + 1) % 3]);
                let twin = half[&(b, a)];
                if !visible.contains(&twin) {
                    horizon.push((a, b));
                }
            }
        }
        for &fi in &visible {
            alive[fi] = false;
            let f = faces[fi];
            for c in 0..3 {
                half.remove(&(f[c], f[(c + 1) % 3]));
            }
        }
        for (a, b) in horizon {
            let fi = faces.len();
            faces.push([a, b, pi]);
            alive.push(true);
            half.insert((a, b), fi);
            half.insert((b, pi), fi);
            half.insert((pi, a), fi);
        }
    }

    let kept: Vec<[usize; 3]> = faces
        .iter()
        .zip(&alive)
        .filter(|(_, &a)| a)
        .map(|(f, _)| *f)
        .collect();
    let mut remap = vec![usize::MAX; n];
    let mut used: Vec<usize> = kept.iter().flatten().copied().collect();
    used.sort_unstable();
    used.dedup();
    let mut vertices = Vec::with_capacity(used.len());
    for (new, &old) in used.iter().enumerate() {
        remap[old] = new;
        vertices.push(points[old]);
    }
    let faces = kept
        .iter()
        .map(|f| [remap[f[0]], remap[f[1]], remap[f[2]]])
        .collect();
    TriMesh::new(vertices, faces).ok()
}

/// A same-topology ellipsoid family: the base sphere stretched by `(1, 1, s)`.
pub fn ellipsoid_corpus(base: &TriMesh, stretches: &[f64]) -> Vec<TriMesh> {
    stretches
        .iter()
        .map(|&s| stretched(base, Vector3::new(1.0, 1.0, s)))
        .collect()
}
