//! The `dihedra` command line.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::analysis::{build_corpus, fit_pca, project, read_model_csv, reconstruct_from_pca, synthesize, write_model_csv, write_scores_csv};
use crate::error::{Error, Result};
use crate::fmt::g17;
use crate::mesh::{dihedral_angles, load_obj, normalize_pose, read_dihedral_csv, read_obj_raw, write_dihedral_csv, write_obj, TriMesh, Vec3};
use crate::morph::{morph, MorphConfig};
use crate::rigidity::{is_dihedral_inf_rigid, validate_cotangent_equation, validate_vertex_equation, RigidityVerdict, DEFAULT_STEP};

#[derive(Parser, Debug)]
#[command(name = "dihedra", version, about = "Dihedral-angle tools for closed triangle meshes")]
struct Cli {
    /// More log output on stderr (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Print counts, topology checks and the dihedral range of a mesh.
    Inspect(InspectArgs),
    /// Dihedral infinitesimal rigidity test by numeric rank.
    Rigidity(RigidityArgs),
    /// Morph between two meshes along a straight dihedral segment.
    Morph(MorphArgs),
    /// Fit a PCA model to a directory of same-topology meshes.
    Pca(PcaArgs),
    /// Synthesize meshes along one principal component.
    Synth(SynthArgs),
}

#[derive(Args, Debug)]
struct InspectArgs {
    mesh: PathBuf,
    /// Write per-edge dihedrals as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct RigidityArgs {
    #[arg(required = true)]
    meshes: Vec<PathBuf>,
    /// Relative singular value tolerance (default 1e-10 * max(rows, cols)).
    #[arg(long)]
    tol: Option<f64>,
    /// Write verdicts as JSON.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Write kernel vectors of a single mesh as CSV.
    #[arg(long)]
    kernel: Option<PathBuf>,
    /// Refuse meshes larger than this (the dense SVD grows cubically).
    #[arg(long, default_value_t = 2000)]
    max_vertices: usize,
    /// Also check the vertex and cotangent equations by finite differences.
    #[arg(long)]
    fd_check: bool,
    /// Seed for the random velocity of the finite-difference check.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug)]
struct MorphArgs {
    a: PathBuf,
    b: PathBuf,
    /// Frames including both endpoints.
    #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(u64).range(2..))]
    frames: u64,
    #[arg(long, default_value_t = 0.6)]
    alpha: f64,
    #[arg(long, default_value_t = 0.4)]
    beta: f64,
    #[arg(long, default_value_t = 50)]
    max_iters: usize,
    /// Relative improvement below which refinement stops.
    #[arg(long, default_value_t = 1e-4)]
    stop: f64,
    /// Interpolate edge lengths in log space.
    #[arg(long)]
    log_lengths: bool,
    #[arg(long)]
    out: PathBuf,
    /// Worker threads for frames (default: all cores).
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Args, Debug)]
struct PcaArgs {
    /// Directory of OBJ files sharing one face list.
    dir: PathBuf,
    #[arg(long, default_value_t = 2)]
    components: usize,
    /// Model CSV; the topology template is written next to it.
    #[arg(long)]
    out: PathBuf,
    /// Per-mesh component scores.
    #[arg(long)]
    scores: Option<PathBuf>,
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Args, Debug)]
struct SynthArgs {
    model: PathBuf,
    /// Component number, starting at 1.
    #[arg(long, default_value_t = 1)]
    component: usize,
    /// Range `lo:hi` in standard deviations of the component.
    #[arg(long, default_value = "-2:2", value_parser = parse_range, allow_hyphen_values = true)]
    range: (f64, f64),
    #[arg(long, default_value_t = 5)]
    steps: usize,
    /// `avg` for the corpus-average lengths, or a per-edge CSV.
    #[arg(long, default_value = "avg")]
    lengths: String,
    /// Topology template (default: the one written beside the model).
    #[arg(long)]
    template: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

fn parse_range(s: &str) -> std::result::Result<(f64, f64), String> {
    let (lo, hi) = s.split_once(':').ok_or_else(|| format!("expected lo:hi, got {s:?}"))?;
    let parse = |x: &str| x.trim().parse::<f64>().map_err(|e| format!("{x:?}: {e}"));
    let (lo, hi) = (parse(lo)?, parse(hi)?);
    if !(lo.is_finite() && hi.is_finite()) {
        return Err("range ends must be finite".into());
    }
    Ok((lo, hi))
}

/// Runs the command line and returns the process exit status: 0 on
/// success, 1 when any item failed, 2 on usage errors.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new().filter_level(level).parse_default_env().try_init();

    let outcome = match cli.command {
        Command::Inspect(a) => inspect(&a),
        Command::Rigidity(a) => rigidity(&a),
        Command::Morph(a) => run_morph(&a),
        Command::Pca(a) => pca(&a),
        Command::Synth(a) => synth(&a),
    };
    match outcome {
        Ok(code) => code,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            2
        }
        Err(Failure::Run(e)) => {
            eprintln!("error: {e}");
            1
        }
    }
}

enum Failure {
    Usage(String),
    Run(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Run(e)
    }
}

type CmdResult = std::result::Result<i32, Failure>;

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn inspect(args: &InspectArgs) -> CmdResult {
    let raw = read_obj_raw(&args.mesh)?;
    let report = raw.validate();
    println!("vertices {}", report.vertices);
    println!("edges {}", report.edges);
    println!("faces {}", report.faces);
    println!("euler {}", report.euler);
    println!("closed {}", report.closed);
    println!("manifold {}", report.manifold);
    println!("oriented {}", report.oriented);
    if !report.is_valid() {
        for issue in &report.issues {
            println!("issue {issue}");
        }
        let err = report.first_error().expect("invalid report has an error");
        return Err(err.into());
    }
    let mesh = raw.into_mesh()?;
    let d = dihedral_angles(&mesh)?;
    let (lo, hi) = d.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)));
    println!("min_dihedral {}", g17(lo));
    println!("max_dihedral {}", g17(hi));
    if let Some(path) = &args.csv {
        write_dihedral_csv(path, &mesh, &d)?;
    }
    Ok(0)
}

#[derive(Serialize)]
struct FdReport {
    seed: u64,
    vertex_residual: f64,
    cotangent_residual: f64,
}

#[derive(Serialize)]
struct RigidityEntry {
    path: String,
    #[serde(flatten)]
    verdict: Option<RigidityVerdict>,
    #[serde(skip_serializing_if = "Option::is_none")]
    fd: Option<FdReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

fn seeded_velocity(n: usize, seed: u64) -> Vec<Vec3> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
        .collect()
}

fn rigidity_one(path: &Path, args: &RigidityArgs) -> Result<(RigidityVerdict, Option<FdReport>)> {
    let mesh = load_obj(path)?;
    if mesh.n_vertices() > args.max_vertices {
        return Err(Error::InvalidArgument(format!(
            "{} vertices exceeds --max-vertices {}",
            mesh.n_vertices(),
            args.max_vertices
        )));
    }
    let verdict = is_dihedral_inf_rigid(&mesh, args.tol)?;
    let fd = if args.fd_check {
        let v = seeded_velocity(mesh.n_vertices(), args.seed);
        Some(FdReport {
            seed: args.seed,
            vertex_residual: validate_vertex_equation(&mesh, &v, DEFAULT_STEP)?,
            cotangent_residual: validate_cotangent_equation(&mesh, &v, DEFAULT_STEP)?,
        })
    } else {
        None
    };
    Ok((verdict, fd))
}

fn rigidity(args: &RigidityArgs) -> CmdResult {
    if args.kernel.is_some() && args.meshes.len() != 1 {
        return Err(Failure::Usage("--kernel needs exactly one mesh".into()));
    }
    let mut entries = Vec::new();
    let mut failed = 0;
    for path in &args.meshes {
        let name = path.display().to_string();
        match rigidity_one(path, args) {
            Ok((v, fd)) => {
                println!(
                    "{name}: {} rank {}/{} sigma_min {} margin {}",
                    if v.rigid { "rigid" } else { "not rigid" },
                    v.rank,
                    v.cols,
                    g17(v.sigma_min),
                    g17(v.margin)
                );
                if let Some(fd) = &fd {
                    println!(
                        "{name}: fd vertex {} cotangent {}",
                        g17(fd.vertex_residual),
                        g17(fd.cotangent_residual)
                    );
                }
                if let Some(kpath) = &args.kernel {
                    write_kernel(kpath, &v.kernel)?;
                }
                entries.push(RigidityEntry { path: name, verdict: Some(v), fd, error: None });
            }
            Err(e) => {
                eprintln!("{name}: error: {e}");
                failed += 1;
                entries.push(RigidityEntry { path: name, verdict: None, fd: None, error: Some(e.to_string()) });
            }
        }
    }
    if let Some(report) = &args.report {
        let json = serde_json::to_string_pretty(&entries).expect("plain data serializes");
        fs::write(report, json + "\n").map_err(|e| Error::io(report, e))?;
    }
    Ok(if failed > 0 { 1 } else { 0 })
}

fn write_kernel(path: &Path, kernel: &[Vec<f64>]) -> Result<()> {
    let err = |e: csv::Error| Error::Csv(format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(err)?;
    if let Some(first) = kernel.first() {
        let header: Vec<String> = (0..first.len()).map(|s| format!("f{}c{}", s / 3, s % 3)).collect();
        w.write_record(&header).map_err(err)?;
    }
    for v in kernel {
        w.write_record(v.iter().map(|x| g17(*x))).map_err(err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn with_jobs<R: Send>(jobs: Option<usize>, f: impl FnOnce() -> R + Send) -> R {
    match jobs {
        Some(n) => crate::par::with_jobs(n, f),
        None => f(),
    }
}

fn run_morph(args: &MorphArgs) -> CmdResult {
    if args.jobs == Some(0) {
        return Err(Failure::Usage("--jobs must be at least 1".into()));
    }
    let config = MorphConfig {
        frames: args.frames as usize,
        alpha: args.alpha,
        beta: args.beta,
        max_iters: args.max_iters,
        stop: args.stop,
        log_lengths: args.log_lengths,
        ..Default::default()
    };
    config.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    let (a, b) = (load_obj(&args.a)?, load_obj(&args.b)?);
    let result = with_jobs(args.jobs, || morph(&a, &b, &config))?;
    create_dir(&args.out)?;

    let trace_path = args.out.join("trace.csv");
    let err = |e: csv::Error| Error::Csv(format!("{}: {e}", trace_path.display()));
    let mut trace = csv::Writer::from_path(&trace_path).map_err(err)?;
    trace
        .write_record(["frame", "t", "init_error", "final_error", "iterations", "status"])
        .map_err(err)?;
    for f in &result.frames {
        let index = f.index.to_string();
        let t = g17(f.t);
        match &f.result {
            Ok(fr) => {
                write_obj(args.out.join(format!("frame_{:03}.obj", f.index)), &fr.mesh)?;
                let status = serde_json::to_value(fr.stop).expect("enum serializes");
                trace
                    .write_record([
                        index,
                        t,
                        g17(fr.init_error),
                        g17(fr.final_error),
                        fr.iterations.to_string(),
                        status.as_str().unwrap_or("ok").to_string(),
                    ])
                    .map_err(err)?;
            }
            Err(msg) => {
                eprintln!("frame {}: {msg}", f.index);
                trace
                    .write_record([index, t, String::new(), String::new(), String::new(), "failed".to_string()])
                    .map_err(err)?;
            }
        }
    }
    trace.flush().map_err(|e| Error::io(&trace_path, e))?;
    let failures = result.failures();
    log::info!("{} frames written, {failures} failed", result.frames.len() - failures);
    Ok(if failures > 0 { 1 } else { 0 })
}

/// Path of the topology template stored beside a model CSV.
pub fn template_path(model: &Path) -> PathBuf {
    let stem = model.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "model".into());
    model.with_file_name(format!("{stem}_template.obj"))
}

fn obj_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("obj")))
        .collect();
    files.sort();
    Ok(files)
}

fn pca(args: &PcaArgs) -> CmdResult {
    if args.jobs == Some(0) {
        return Err(Failure::Usage("--jobs must be at least 1".into()));
    }
    let files = obj_files(&args.dir)?;
    if files.len() < 2 {
        return Err(Error::InvalidArgument(format!("{} holds {} OBJ files; need at least 2", args.dir.display(), files.len())).into());
    }
    let meshes = files.iter().map(load_obj).collect::<Result<Vec<TriMesh>>>()?;
    let labels: Vec<String> = files
        .iter()
        .map(|p| p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default())
        .collect();
    let corpus = with_jobs(args.jobs, || build_corpus(&meshes, &labels))?;
    let model = fit_pca(&corpus, args.components).map_err(|e| Failure::Usage(e.to_string()))?;
    write_model_csv(&args.out, &model, &corpus.topology, &corpus.average_lengths)?;
    write_obj(template_path(&args.out), &normalize_pose(&meshes[0], None)?)?;
    for (m, v) in model.variances.iter().enumerate() {
        println!("pc{} variance {}", m + 1, g17(*v));
    }
    if let Some(path) = &args.scores {
        let scores = (0..corpus.len())
            .map(|k| project(&model, &corpus.row(k)))
            .collect::<Result<Vec<_>>>()?;
        write_scores_csv(path, &corpus.labels, &scores)?;
    }
    Ok(0)
}

fn synth(args: &SynthArgs) -> CmdResult {
    let (model, avg) = read_model_csv(&args.model)?;
    if args.component == 0 || args.component > model.components() {
        return Err(Failure::Usage(format!(
            "--component {} outside 1..={}",
            args.component,
            model.components()
        )));
    }
    if args.steps == 0 {
        return Err(Failure::Usage("--steps must be at least 1".into()));
    }
    let template_file = args.template.clone().unwrap_or_else(|| template_path(&args.model));
    let template = load_obj(&template_file)?;
    if template.n_edges() != model.dimension() {
        return Err(Error::LengthMismatch {
            expected: model.dimension(),
            got: template.n_edges(),
        }
        .into());
    }
    let lengths = match args.lengths.as_str() {
        "avg" => avg,
        file => read_dihedral_csv(file, &template)?,
    };
    create_dir(&args.out)?;

    let m = args.component - 1;
    let sigma = model.variances[m].max(0.0).sqrt();
    let (lo, hi) = args.range;
    let index_path = args.out.join("synth.csv");
    let err = |e: csv::Error| Error::Csv(format!("{}: {e}", index_path.display()));
    let mut index = csv::Writer::from_path(&index_path).map_err(err)?;
    index.write_record(["step", "sigma", "coordinate", "status"]).map_err(err)?;
    let mut failed = 0;
    for step in 0..args.steps {
        let s = if args.steps == 1 { lo } else { lo + (hi - lo) * step as f64 / (args.steps - 1) as f64 };
        let mut coords = vec![0.0; m + 1];
        coords[m] = s * sigma;
        let built = synthesize(&model, &coords)
            .and_then(|d| reconstruct_from_pca(template.topology(), &d, &lengths));
        let status = match built {
            Ok(mesh) => {
                write_obj(args.out.join(format!("synth_{step:03}.obj")), &mesh)?;
                "ok".to_string()
            }
            Err(e) => {
                eprintln!("step {step}: {e}");
                failed += 1;
                "failed".to_string()
            }
        };
        index
            .write_record([step.to_string(), g17(s), g17(coords[m]), status])
            .map_err(err)?;
    }
    index.flush().map_err(|e| Error::io(&index_path, e))?;
    Ok(if failed > 0 { 1 } else { 0 })
}
