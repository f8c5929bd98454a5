//! Principal component analysis of same-topology corpora in dihedral space.

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};
use std::path::Path;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::fmt::g17;
use crate::mesh::{dihedral_angles, edge_lengths, DihedralVector, Topology, TriMesh};
use crate::morph::initialize_embedding;
use crate::par;

/// Hash of the vertex count and face list, identifying a topology.
pub fn topology_hash(topology: &Topology) -> u64 {
    let mut h = DefaultHasher::new();
    topology.n_vertices().hash(&mut h);
    topology.faces().hash(&mut h);
    h.finish()
}

/// Dihedral and edge-length vectors of meshes that share one topology.
#[derive(Clone, Debug)]
pub struct Corpus {
    pub topology: Arc<Topology>,
    pub topology_hash: u64,
    /// One row per mesh, one column per canonical edge.
    pub dihedrals: DMatrix<f64>,
    pub lengths: DMatrix<f64>,
    pub labels: Vec<String>,
    /// Columnwise mean of `lengths`.
    pub average_lengths: Vec<f64>,
}

impl Corpus {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn row(&self, k: usize) -> DihedralVector {
        DihedralVector(self.dihedrals.row(k).iter().copied().collect())
    }
}

/// Measures every mesh (in parallel) and stacks the results.
pub fn build_corpus(meshes: &[TriMesh], labels: &[String]) -> Result<Corpus> {
    let first = meshes
        .first()
        .ok_or_else(|| Error::InvalidArgument("empty corpus".into()))?;
    if labels.len() != meshes.len() {
        return Err(Error::LengthMismatch {
            expected: meshes.len(),
            got: labels.len(),
        });
    }
    if let Some(k) = meshes.iter().position(|m| !m.same_topology(first)) {
        return Err(Error::TopologyMismatch(format!(
            "corpus member {:?} has a different face list than {:?}",
            labels[k], labels[0]
        )));
    }
    let rows = par::map(meshes, |m| -> Result<(Vec<f64>, Vec<f64>)> {
        Ok((dihedral_angles(m)?.into_inner(), edge_lengths(m)?))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let (n, e) = (meshes.len(), first.n_edges());
    let dihedrals = DMatrix::from_fn(n, e, |r, c| rows[r].0[c]);
    let lengths = DMatrix::from_fn(n, e, |r, c| rows[r].1[c]);
    let average_lengths = (0..e).map(|c| lengths.column(c).mean()).collect();
    Ok(Corpus {
        topology: Arc::clone(first.topology()),
        topology_hash: topology_hash(first.topology()),
        dihedrals,
        lengths,
        labels: labels.to_vec(),
        average_lengths,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    /// Unit principal directions as columns, `edges x k`.
    pub directions: DMatrix<f64>,
    /// Variance along each direction (population, divided by the row count).
    pub variances: Vec<f64>,
    pub singular_values: Vec<f64>,
}

impl PcaModel {
    pub fn components(&self) -> usize {
        self.directions.ncols()
    }

    pub fn dimension(&self) -> usize {
        self.mean.len()
    }

    pub fn direction(&self, m: usize) -> Vec<f64> {
        self.directions.column(m).iter().copied().collect()
    }
}

/// PCA of the corpus dihedrals by SVD of the centered row matrix, keeping
/// `k` components. Each direction is signed so its largest-magnitude entry
/// is positive.
pub fn fit_pca(corpus: &Corpus, k: usize) -> Result<PcaModel> {
    let (n, e) = corpus.dihedrals.shape();
    if n < 2 {
        return Err(Error::InvalidArgument(format!("PCA needs at least 2 meshes, got {n}")));
    }
    if k == 0 || k > (n - 1).min(e) {
        return Err(Error::InvalidArgument(format!(
            "cannot keep {k} components from {n} meshes with {e} edges (max {})",
            (n - 1).min(e)
        )));
    }
    let mean: DVector<f64> = corpus.dihedrals.row_mean().transpose();
    let mut centered = corpus.dihedrals.clone();
    for mut row in centered.row_iter_mut() {
        row -= mean.transpose();
    }
    // Work on the small side: with n rows the right singular vectors are the
    // left singular vectors of the transpose.
    let svd = centered
        .transpose()
        .try_svd(true, false, f64::EPSILON, 0)
        .ok_or_else(|| Error::Solver("PCA singular value decomposition did not converge".into()))?;
    let u = svd.u.expect("u requested");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]).then(a.cmp(&b)));

    let mut directions = DMatrix::zeros(e, k);
    let mut singular_values = Vec::with_capacity(k);
    for (m, &src) in order.iter().take(k).enumerate() {
        let mut col = u.column(src).into_owned();
        let imax = col.iamax();
        if col[imax] < 0.0 {
            col.neg_mut();
        }
        directions.set_column(m, &col);
        singular_values.push(svd.singular_values[src]);
    }
    let variances = singular_values.iter().map(|s| s * s / n as f64).collect();
    Ok(PcaModel {
        mean: mean.iter().copied().collect(),
        directions,
        variances,
        singular_values,
    })
}

fn check_dimension(model: &PcaModel, got: usize) -> Result<()> {
    if got != model.dimension() {
        return Err(Error::LengthMismatch {
            expected: model.dimension(),
            got,
        });
    }
    Ok(())
}

/// Coordinates `Dᵀ (x - mean)`.
pub fn project(model: &PcaModel, x: &[f64]) -> Result<Vec<f64>> {
    check_dimension(model, x.len())?;
    let centered = DVector::from_iterator(x.len(), x.iter().zip(&model.mean).map(|(a, m)| a - m));
    Ok((model.directions.transpose() * centered).iter().copied().collect())
}

/// `mean + Σ c_m d_m`; missing trailing coordinates count as zero.
pub fn synthesize(model: &PcaModel, coords: &[f64]) -> Result<DihedralVector> {
    if coords.len() > model.components() {
        return Err(Error::InvalidArgument(format!(
            "{} coordinates for a {}-component model",
            coords.len(),
            model.components()
        )));
    }
    let mut out = model.mean.clone();
    for (m, &c) in coords.iter().enumerate() {
        for (o, d) in out.iter_mut().zip(model.directions.column(m).iter()) {
            *o += c * d;
        }
    }
    Ok(DihedralVector(out))
}

/// Initialization-only reconstruction of a synthesized dihedral vector.
pub fn reconstruct_from_pca(topology: &Arc<Topology>, dihedrals: &DihedralVector, lengths: &[f64]) -> Result<TriMesh> {
    initialize_embedding(topology, lengths, dihedrals)
}

fn csv_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Csv(format!("{}: {e}", path.display()))
}

/// Writes the model as CSV with columns `row,variance,<edge i-j>...`: a
/// `mean` row, one `pcN` row per component and an `avg_length` row.
pub fn write_model_csv(path: impl AsRef<Path>, model: &PcaModel, topology: &Topology, average_lengths: &[f64]) -> Result<()> {
    let path = path.as_ref();
    check_dimension(model, average_lengths.len())?;
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    let mut header = vec!["row".to_string(), "variance".to_string()];
    header.extend(topology.edges().iter().map(|e| format!("{}-{}", e.v[0], e.v[1])));
    w.write_record(&header).map_err(|e| csv_err(path, e))?;
    let mut emit = |name: String, variance: String, values: &mut dyn Iterator<Item = f64>| {
        let mut rec = vec![name, variance];
        rec.extend(values.map(g17));
        w.write_record(&rec).map_err(|e| csv_err(path, e))
    };
    emit("mean".into(), String::new(), &mut model.mean.iter().copied())?;
    for m in 0..model.components() {
        emit(format!("pc{}", m + 1), g17(model.variances[m]), &mut model.directions.column(m).iter().copied())?;
    }
    emit("avg_length".into(), String::new(), &mut average_lengths.iter().copied())?;
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads a model written by [`write_model_csv`], returning it with the
/// average edge lengths. Singular values are rebuilt as unavailable (NaN);
/// they are not needed after fitting.
pub fn read_model_csv(path: impl AsRef<Path>) -> Result<(PcaModel, Vec<f64>)> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let mut mean = None;
    let mut avg = None;
    let mut comps: Vec<(f64, Vec<f64>)> = Vec::new();
    for (n, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let parse = |s: &str| -> Result<f64> {
            s.trim().parse().map_err(|_| csv_err(path, format!("row {}: bad number {s:?}", n + 2)))
        };
        let values = rec.iter().skip(2).map(parse).collect::<Result<Vec<f64>>>()?;
        match rec.get(0).unwrap_or("") {
            "mean" => mean = Some(values),
            "avg_length" => avg = Some(values),
            name if name.starts_with("pc") => comps.push((parse(rec.get(1).unwrap_or(""))?, values)),
            other => return Err(csv_err(path, format!("unknown row {other:?}"))),
        }
    }
    let mean = mean.ok_or_else(|| csv_err(path, "missing mean row"))?;
    let avg = avg.ok_or_else(|| csv_err(path, "missing avg_length row"))?;
    if comps.iter().any(|(_, v)| v.len() != mean.len()) || avg.len() != mean.len() {
        return Err(csv_err(path, "rows have different lengths"));
    }
    let directions = DMatrix::from_fn(mean.len(), comps.len(), |r, c| comps[c].1[r]);
    let variances = comps.iter().map(|(v, _)| *v).collect();
    let singular_values = vec![f64::NAN; comps.len()];
    Ok((
        PcaModel {
            mean,
            directions,
            variances,
            singular_values,
        },
        avg,
    ))
}

/// `label,pc1,...,pck`, one row per corpus member.
pub fn write_scores_csv(path: impl AsRef<Path>, labels: &[String], scores: &[Vec<f64>]) -> Result<()> {
    let path = path.as_ref();
    let k = scores.first().map_or(0, Vec::len);
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    let mut header = vec!["label".to_string()];
    header.extend((1..=k).map(|m| format!("pc{m}")));
    w.write_record(&header).map_err(|e| csv_err(path, e))?;
    for (label, s) in labels.iter().zip(scores) {
        let mut rec = vec![label.clone()];
        rec.extend(s.iter().copied().map(g17));
        w.write_record(&rec).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Pearson correlation of two equally long samples.
pub fn correlation(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    sxy / (sxx * syy).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{normalize_pose, procrustes_rms};
    use crate::shapes;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn labels(n: usize) -> Vec<String> {
        (0..n).map(|k| format!("m{k}")).collect()
    }

    /// A corpus with arbitrary dihedral rows; only the matrices matter.
    fn synthetic(rows: DMatrix<f64>) -> Corpus {
        let mesh = shapes::icosahedron();
        let n = rows.nrows();
        Corpus {
            topology: Arc::clone(mesh.topology()),
            topology_hash: topology_hash(mesh.topology()),
            lengths: DMatrix::from_element(n, rows.ncols(), 1.0),
            dihedrals: rows,
            labels: labels(n),
            average_lengths: vec![1.0; 30],
        }
    }

    fn ellipsoids(stretches: &[f64]) -> Corpus {
        let meshes = shapes::ellipsoid_corpus(&shapes::icosphere(2), stretches);
        build_corpus(&meshes, &labels(meshes.len())).unwrap()
    }

    #[test]
    fn copies_give_identical_rows() {
        let m = shapes::perturbed_icosahedron(0.2, 1);
        let c = build_corpus(&[m.clone(), m.clone(), m], &labels(3)).unwrap();
        assert_eq!(c.dihedrals.row(0), c.dihedrals.row(1));
        assert_eq!(c.dihedrals.row(1), c.dihedrals.row(2));
        let model = fit_pca(&c, 2).unwrap();
        assert!(model.variances.iter().all(|&v| v < 1e-28));
        assert_eq!(model.mean, c.row(0).0);
    }

    #[test]
    fn ellipsoid_rows_and_average_lengths() {
        let c = ellipsoids(&[0.8, 1.0, 1.2]);
        assert_ne!(c.dihedrals.row(0), c.dihedrals.row(2));
        for col in 0..c.lengths.ncols() {
            let mean = (c.lengths[(0, col)] + c.lengths[(1, col)] + c.lengths[(2, col)]) / 3.0;
            assert_abs_diff_eq!(c.average_lengths[col], mean, epsilon = 1e-12);
        }
    }

    #[test]
    fn mixed_topologies_are_rejected() {
        let err = build_corpus(&[shapes::icosahedron(), shapes::octahedron()], &labels(2)).unwrap_err();
        assert!(matches!(err, Error::TopologyMismatch(ref m) if m.contains("m1")));
    }

    #[test]
    fn plus_minus_v_gives_one_component() {
        let mean = DVector::from_fn(30, |i, _| 1.0 + 0.01 * i as f64);
        let v = DVector::from_fn(30, |i, _| ((i * 7) % 5) as f64 - 2.0) * 0.1;
        let rows = DMatrix::from_fn(2, 30, |r, c| mean[c] + if r == 0 { v[c] } else { -v[c] });
        let model = fit_pca(&synthetic(rows), 1).unwrap();
        assert_abs_diff_eq!(model.variances[0], v.norm_squared(), epsilon = 1e-12);
        let d = model.directions.column(0);
        assert_abs_diff_eq!(d.dot(&v).abs(), v.norm(), epsilon = 1e-12);
        for (m, x) in model.mean.iter().zip(mean.iter()) {
            assert_abs_diff_eq!(m, x, epsilon = 1e-15);
        }
    }

    fn random_corpus(seed: u64) -> Corpus {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        synthetic(DMatrix::from_fn(10, 30, |_, _| rng.random_range(0.5..3.0)))
    }

    #[test]
    fn full_rank_round_trip() {
        let c = random_corpus(3);
        let model = fit_pca(&c, 9).unwrap();
        // orthonormal, sorted
        let gram = model.directions.transpose() * &model.directions;
        assert!((gram - DMatrix::identity(9, 9)).amax() < 1e-10);
        assert!(model.variances.windows(2).all(|w| w[0] >= w[1]));
        for k in 0..c.len() {
            let row = c.row(k);
            let back = synthesize(&model, &project(&model, &row).unwrap()).unwrap();
            for (a, b) in back.iter().zip(row.iter()) {
                assert_abs_diff_eq!(a, b, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn projection_examples() {
        let c = random_corpus(4);
        let model = fit_pca(&c, 4).unwrap();
        assert!(project(&model, &model.mean).unwrap().iter().all(|x| x.abs() < 1e-14));
        let x: Vec<f64> = model.mean.iter().zip(model.directions.column(0).iter()).map(|(m, d)| m + 2.0 * d).collect();
        let p = project(&model, &x).unwrap();
        assert_abs_diff_eq!(p[0], 2.0, epsilon = 1e-12);
        assert!(p[1..].iter().all(|x| x.abs() < 1e-12));
        assert!(project(&model, &[1.0]).is_err());
        // score variances equal model variances
        let scores: Vec<Vec<f64>> = (0..c.len()).map(|k| project(&model, &c.row(k)).unwrap()).collect();
        for m in 0..4 {
            let var = scores.iter().map(|s| s[m] * s[m]).sum::<f64>() / c.len() as f64;
            assert_abs_diff_eq!(var, model.variances[m], epsilon = 1e-9);
        }
    }

    #[test]
    fn synthesis_is_affine() {
        let model = fit_pca(&random_corpus(5), 3).unwrap();
        assert_eq!(synthesize(&model, &[]).unwrap().0, model.mean);
        let (c1, c2) = ([0.3, -1.0, 0.2], [1.1, 0.4, -0.7]);
        let sum: Vec<f64> = c1.iter().zip(&c2).map(|(a, b)| a + b).collect();
        let (s1, s2, s12) = (
            synthesize(&model, &c1).unwrap(),
            synthesize(&model, &c2).unwrap(),
            synthesize(&model, &sum).unwrap(),
        );
        for i in 0..model.dimension() {
            assert_abs_diff_eq!(s1[i] + s2[i] - model.mean[i], s12[i], epsilon = 1e-10);
        }
        assert!(synthesize(&model, &[0.0; 4]).is_err());
    }

    #[test]
    fn row_order_does_not_matter() {
        let c = random_corpus(6);
        let mut rev = c.clone();
        for k in 0..c.len() {
            rev.dihedrals.set_row(k, &c.dihedrals.row(c.len() - 1 - k));
        }
        let (a, b) = (fit_pca(&c, 5).unwrap(), fit_pca(&rev, 5).unwrap());
        assert!((a.directions - b.directions).amax() < 1e-10);
        for (x, y) in a.variances.iter().zip(&b.variances) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-12);
        }
    }

    #[test]
    fn too_many_components() {
        let c = random_corpus(7);
        assert!(fit_pca(&c, 10).is_err());
        assert!(fit_pca(&c, 0).is_err());
    }

    #[test]
    fn mean_of_copies_reconstructs_the_copy() {
        let m = shapes::perturbed_icosahedron(0.2, 2);
        let c = build_corpus(&[m.clone(), m.clone()], &labels(2)).unwrap();
        let model = fit_pca(&c, 1).unwrap();
        let out = reconstruct_from_pca(&c.topology, &synthesize(&model, &[]).unwrap(), &c.average_lengths).unwrap();
        assert!(procrustes_rms(&out, &normalize_pose(&m, None).unwrap()).unwrap() <= 1e-6);
    }

    /// RMS z over RMS of the in-plane coordinates; 1 for a round shape.
    fn z_stretch(m: &TriMesh) -> f64 {
        let z2: f64 = m.vertices().iter().map(|p| p.z * p.z).sum();
        let xy2: f64 = m.vertices().iter().map(|p| p.x * p.x + p.y * p.y).sum();
        (2.0 * z2 / xy2).sqrt()
    }

    #[test]
    fn sigma_steps_stretch_monotonically() {
        // Reconstruction keeps the corpus-average lengths, so large +σ steps
        // saturate on wide corpora; this one stays monotone over ±3σ.
        let stretches: Vec<f64> = (0..12).map(|k| 0.85 + 0.025 * k as f64).collect();
        let c = ellipsoids(&stretches);
        let model = fit_pca(&c, 2).unwrap();
        let sigma = model.variances[0].sqrt();
        let scores: Vec<f64> = (0..c.len()).map(|k| project(&model, &c.row(k)).unwrap()[0]).collect();
        let sign = correlation(&scores, &stretches).signum();
        let stretch: Vec<f64> = [-3.0, -1.0, 0.0, 1.0, 3.0]
            .iter()
            .map(|s| {
                let d = synthesize(&model, &[sign * s * sigma]).unwrap();
                z_stretch(&reconstruct_from_pca(&c.topology, &d, &c.average_lengths).unwrap())
            })
            .collect();
        assert!(stretch.windows(2).all(|w| w[1] > w[0]), "{stretch:?}");
        // Observed 0.949 .. 1.015 with identical input lengths.
        assert!(stretch[4] - stretch[0] > 0.05, "{stretch:?}");
    }

    #[test]
    fn infeasible_lengths_are_reported() {
        let c = ellipsoids(&[0.9, 1.1]);
        let model = fit_pca(&c, 1).unwrap();
        let mut l = c.average_lengths.clone();
        l[0] = 100.0;
        let err = reconstruct_from_pca(&c.topology, &synthesize(&model, &[]).unwrap(), &l).unwrap_err();
        assert!(matches!(err, Error::InfeasibleWedge { .. }));
    }

    #[test]
    fn model_csv_round_trip() {
        let c = ellipsoids(&[0.8, 1.0, 1.3]);
        let model = fit_pca(&c, 2).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.csv");
        write_model_csv(&path, &model, &c.topology, &c.average_lengths).unwrap();
        let (back, avg) = read_model_csv(&path).unwrap();
        assert_eq!(back.mean, model.mean);
        assert_eq!(back.directions, model.directions);
        assert_eq!(back.variances, model.variances);
        assert_eq!(avg, c.average_lengths);

        let scores = vec![vec![1.0, 2.0]; 3];
        let names = vec!["a,b".to_string(), "c".into(), "d".into()];
        let sp = dir.path().join("scores.csv");
        write_scores_csv(&sp, &names, &scores).unwrap();
        let mut r = csv::Reader::from_path(&sp).unwrap();
        let first = r.records().next().unwrap().unwrap();
        assert_eq!(&first[0], "a,b");
    }
}
