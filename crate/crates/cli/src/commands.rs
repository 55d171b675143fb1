use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use lbbp_core::eigen::{solve_eigs, solve_weighted_eigs, EigOptions};
use lbbp_core::evaluation::{geodesic_errors, ground_truth_conformal, pearson, ErrorSummary};
use lbbp_core::fem::{assemble_mass, assemble_stiffness};
use lbbp_core::lbbp::write_trace_csv;
use lbbp_core::mesh::io::{format_pairs, load_mesh, read_pairs, write_off, MeshFormat};
use lbbp_core::mesh::{farthest_point_sample, shapes};
use lbbp_core::{Correspondence, LbbpConfig, TriangleMesh};
use log::info;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{self, FlagOverrides};
use crate::error::{require_file, CliError, CliResult};
use crate::manifest::{FileDigest, OutputDir, RunManifest, RunStatus};

pub const CORRESPONDENCE_FILE: &str = "correspondence.txt";
pub const W_FILE: &str = "w.txt";
pub const BASIS_FILE: &str = "basis.bin";
pub const TRACE_FILE: &str = "trace.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const CONFIG_FILE: &str = "config.toml";

fn load_any_mesh(path: &Path) -> CliResult<TriangleMesh> {
    require_file(path, "mesh")?;
    let format = MeshFormat::from_path(path)
        .ok_or_else(|| CliError::Usage(format!("{}: unknown mesh format (expected .off, .obj or .ply)", path.display())))?;
    Ok(load_mesh(path, format)?)
}

/// One number per line; blank lines and `#` comments are skipped.
fn read_values(path: &Path) -> CliResult<Vec<f64>> {
    require_file(path, "values")?;
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    text.lines()
        .enumerate()
        .map(|(i, l)| (i, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
        .map(|(i, l)| {
            l.parse::<f64>()
                .map_err(|_| CliError::Runtime(format!("{}:{}: expected a number, got {l:?}", path.display(), i + 1)))
        })
        .collect()
}

fn format_values(values: impl IntoIterator<Item = f64>) -> String {
    let mut out = String::new();
    for v in values {
        let _ = writeln!(out, "{v:.16e}");
    }
    out
}

fn write_file(path: &Path, data: impl AsRef<[u8]>) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    std::fs::write(path, data).map_err(|e| CliError::io(path, e))
}

pub struct EigsArgs {
    pub mesh: PathBuf,
    pub k: usize,
    pub weights: Option<PathBuf>,
    pub seed: u64,
    pub tolerance: f64,
    pub out: PathBuf,
    pub csv: Option<PathBuf>,
}

pub fn eigs(args: &EigsArgs) -> CliResult<()> {
    let mesh = load_any_mesh(&args.mesh)?;
    let (m, s) = (assemble_mass(&mesh), assemble_stiffness(&mesh));
    let options = EigOptions {
        tolerance: args.tolerance,
        seed: args.seed,
        ..Default::default()
    };
    let e = match &args.weights {
        Some(path) => {
            let w2 = read_values(path)?;
            if w2.len() != mesh.num_vertices() {
                return Err(CliError::Runtime(format!(
                    "{} has {} values for {} vertices",
                    path.display(),
                    w2.len(),
                    mesh.num_vertices()
                )));
            }
            solve_weighted_eigs(&s, &m, &w2, args.k, &options)?
        }
        None => solve_eigs(&s, &m, args.k, &options)?,
    };
    write_file(&args.out, e.to_bytes())?;
    if let Some(csv) = &args.csv {
        write_file(csv, e.to_csv())?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegisterArgs {
    pub source: PathBuf,
    pub target: PathBuf,
    pub landmarks: PathBuf,
    pub config: PathBuf,
    pub out: PathBuf,
}

/// Runs the pipeline and writes its outputs plus a manifest. On failure
/// after the output directory exists, the manifest is still written with
/// status `partial`.
pub fn register(args: &RegisterArgs, flags: &FlagOverrides) -> CliResult<RunManifest> {
    for (p, what) in [
        (&args.source, "source mesh"),
        (&args.target, "target mesh"),
        (&args.landmarks, "landmark"),
        (&args.config, "config"),
    ] {
        require_file(p, what)?;
    }
    let config = config::load(&args.config, flags)?;
    let mut out = OutputDir::create(&args.out)?;
    let mut manifest = RunManifest {
        tool: "lbbp".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        command: "register".into(),
        status: RunStatus::Partial,
        error: None,
        start: Some(if config.warm_start.enabled { "warm" } else { "cold" }.into()),
        config: Some(config.clone()),
        inputs: Vec::new(),
        outputs: Vec::new(),
        timings: serde_json::Value::Null,
    };
    let result = run_register(args, &config, &mut out, &mut manifest);
    manifest.outputs = out.digests()?;
    match result {
        Ok(()) => {
            manifest.status = RunStatus::Complete;
            out.write_manifest(&manifest)?;
            Ok(manifest)
        }
        Err(e) => {
            manifest.error = Some(e.to_string());
            out.write_manifest(&manifest)?;
            Err(e)
        }
    }
}

fn run_register(args: &RegisterArgs, config: &LbbpConfig, out: &mut OutputDir, manifest: &mut RunManifest) -> CliResult<()> {
    let clock = Instant::now();
    manifest.inputs = [&args.source, &args.target, &args.landmarks, &args.config]
        .iter()
        .map(|p| FileDigest::of(p, p.display().to_string()))
        .collect::<CliResult<_>>()?;
    out.write(CONFIG_FILE, config::echo(config))?;
    let source = load_any_mesh(&args.source)?;
    let target = load_any_mesh(&args.target)?;
    let landmarks = read_pairs(&args.landmarks)?;
    info!(
        "registering {} ({} vertices) onto {} ({} vertices) with {} landmarks",
        args.source.display(),
        source.num_vertices(),
        args.target.display(),
        target.num_vertices(),
        landmarks.len()
    );
    let reg = lbbp_core::register(&source, &target, &landmarks, config)?;

    out.write(CORRESPONDENCE_FILE, reg.correspondence.to_text())?;
    out.write(W_FILE, format_values(reg.w.iter().copied()))?;
    out.write(BASIS_FILE, reg.basis.to_bytes())?;
    let mut trace = Vec::new();
    write_trace_csv(&reg.outcome.trace, &mut trace).expect("writing to memory");
    out.write(TRACE_FILE, trace)?;
    let summary = reg.summary();
    out.write(SUMMARY_FILE, serde_json::to_string_pretty(&summary).expect("summary serializes") + "\n")?;
    let mut timings = serde_json::to_value(&summary.timings).expect("timings serialize");
    timings["total"] = clock.elapsed().as_secs_f64().into();
    manifest.timings = timings;
    Ok(())
}

pub struct EvaluateArgs {
    pub corr: PathBuf,
    pub truth: PathBuf,
    pub target: PathBuf,
    pub out: PathBuf,
    /// With `w`, also correlate the recovered log conformal factor with the
    /// first-ring reference.
    pub source: Option<PathBuf>,
    pub w: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationSummary {
    #[serde(flatten)]
    pub errors: ErrorSummary,
    pub conformal_pearson: Option<f64>,
}

pub const CURVE_FILE: &str = "curve.csv";
pub const ERRORS_FILE: &str = "errors.csv";

pub fn evaluate(args: &EvaluateArgs) -> CliResult<EvaluationSummary> {
    require_file(&args.corr, "correspondence")?;
    require_file(&args.truth, "ground-truth")?;
    if args.source.is_some() != args.w.is_some() {
        return Err(CliError::Usage("--source and --w must be given together".into()));
    }
    let target = load_any_mesh(&args.target)?;
    let n = target.num_vertices();
    let corr = Correspondence::read(&args.corr, n)?;
    let truth = Correspondence::read(&args.truth, n)?;
    let report = geodesic_errors(&corr, &truth, &target)?;
    let conformal_pearson = match (&args.source, &args.w) {
        (Some(src), Some(w)) => {
            let source = load_any_mesh(src)?;
            let w = read_values(w)?;
            if w.len() != n {
                return Err(CliError::Runtime(format!("w has {} values for {n} target vertices", w.len())));
            }
            let u_true = ground_truth_conformal(&source, &target, &truth)?;
            let u: Vec<f64> = w.iter().map(|v| v.ln()).collect();
            Some(pearson(&u, &u_true)?)
        }
        _ => None,
    };
    let summary = EvaluationSummary {
        errors: report.summary.clone(),
        conformal_pearson,
    };
    let mut out = OutputDir::create(&args.out)?;
    out.write(CURVE_FILE, report.curve_csv())?;
    out.write(ERRORS_FILE, report.errors_csv())?;
    out.write(SUMMARY_FILE, serde_json::to_string_pretty(&summary).expect("summary serializes") + "\n")?;
    Ok(summary)
}

#[derive(Debug, Serialize)]
struct SampleOutput<'a> {
    seed: u64,
    /// Coarser levels in order; level 0 (all vertices) is omitted.
    levels: &'a [Vec<usize>],
}

pub fn sample(mesh: &Path, counts: &[usize], seed: u64, out: &Path) -> CliResult<()> {
    let mesh = load_any_mesh(mesh)?;
    let mut all = vec![mesh.num_vertices()];
    all.extend_from_slice(counts);
    let h = farthest_point_sample(&mesh, &all, seed)?;
    let doc = SampleOutput {
        seed,
        levels: &h.levels()[1..],
    };
    write_file(out, serde_json::to_string(&doc).expect("levels serialize") + "\n")
}

/// Writes the stretched-sphere test pair with its ground truth and
/// `landmarks` randomly chosen corresponding vertices.
pub fn fixture(frequency: usize, amplitude: f64, landmarks: usize, seed: u64, out: &Path) -> CliResult<()> {
    if frequency == 0 {
        return Err(CliError::Usage("frequency must be at least 1".into()));
    }
    let (source, target) = shapes::stretched_sphere_pair(frequency, amplitude);
    let n = source.num_vertices();
    if landmarks == 0 || landmarks > n {
        return Err(CliError::Usage(format!("landmark count must be in 1..={n}")));
    }
    std::fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    write_off(&source, out.join("source.off"))?;
    write_off(&target, out.join("target.off"))?;
    write_file(&out.join("truth.txt"), Correspondence::identity(n).to_text())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picks: Vec<(usize, usize)> = rand::seq::index::sample(&mut rng, n, landmarks)
        .into_iter()
        .map(|i| (i, i))
        .collect();
    write_file(&out.join("landmarks.txt"), format_pairs(&picks))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct BatchFile {
    run: Vec<RegisterArgs>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BatchResult {
    pub out: PathBuf,
    pub error: Option<String>,
}

/// Independent registrations listed as `[[run]]` tables, `jobs` at a time.
/// Relative paths are taken from the batch file's directory.
pub fn batch(file: &Path, jobs: usize, flags: &FlagOverrides) -> CliResult<Vec<BatchResult>> {
    require_file(file, "batch")?;
    let text = std::fs::read_to_string(file).map_err(|e| CliError::io(file, e))?;
    let parsed: BatchFile =
        toml::from_str(&text).map_err(|e| CliError::Usage(format!("cannot parse batch file {}: {e}", file.display())))?;
    let base = file.parent().unwrap_or(Path::new("."));
    let runs: Vec<RegisterArgs> = parsed
        .run
        .into_iter()
        .map(|r| RegisterArgs {
            source: base.join(r.source),
            target: base.join(r.target),
            landmarks: base.join(r.landmarks),
            config: base.join(r.config),
            out: base.join(r.out),
        })
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    Ok(pool.install(|| {
        runs.par_iter()
            .map(|r| BatchResult {
                out: r.out.clone(),
                error: register(r, flags).err().map(|e| e.to_string()),
            })
            .collect()
    }))
}
