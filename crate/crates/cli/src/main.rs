//! `sograb`: score grasps, align clouds, run batches, generate test data.

mod config;

use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use sograb::alignment::{apply_transform, icp_align};
use sograb::pipeline::{
    aggregate, evaluate_pair, export_results, load_manifest, prepare_cloud, run_batch, AlignmentMode, PipelineError,
};
use sograb::pointcloud::{load_cloud, save_cloud, PlyFormat};
use sograb::synth::{generate_pair, DeformSpec, HalfSpace, Shape, ShapeSpec, SynthError, SynthRecord};
use sograb::{grasp_score, AlignError, CloudError, GraspOutcome, MetricError, RigidTransform};
use thiserror::Error;

use config::{ConfigArgs, IcpArgs};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io { path: String, source: io::Error },
    #[error(transparent)]
    Cloud(#[from] CloudError),
    #[error(transparent)]
    Align(#[from] AlignError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error("{failed} of {total} trials failed")]
    PartialBatch { failed: usize, total: usize },
}

impl CliError {
    fn io(path: &Path, source: io::Error) -> Self {
        CliError::Io {
            path: path.display().to_string(),
            source,
        }
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::PartialBatch { .. } => 2,
            _ => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "sograb", version, about = "Soft-grasp benchmarking from before/during-grasp point clouds")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Align a pre-grasp cloud onto a grasp cloud and score the attempt
    Score(ScoreArgs),
    /// Rigidly register one cloud onto another with ICP
    Align(AlignArgs),
    /// Score every trial of a manifest and write tables and a heatmap
    Batch(BatchArgs),
    /// Generate a synthetic pre/grasp cloud pair with known motion
    Synth(SynthArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum OutcomeArg {
    Successful,
    Partial,
    Unsuccessful,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    Icp,
    Pca,
}

impl From<ModeArg> for AlignmentMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Icp => AlignmentMode::Icp,
            ModeArg::Pca => AlignmentMode::Pca,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FormatArg {
    Ascii,
    Binary,
}

impl From<FormatArg> for PlyFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Ascii => PlyFormat::Ascii,
            FormatArg::Binary => PlyFormat::BinaryLittleEndian,
        }
    }
}

#[derive(Debug, clap::Args)]
struct ScoreArgs {
    /// Cloud captured before the grasp; not needed for unsuccessful grasps
    #[arg(long)]
    pre: Option<PathBuf>,
    /// Cloud captured in hand; not needed for unsuccessful grasps
    #[arg(long)]
    grasp: Option<PathBuf>,
    #[arg(long, value_enum)]
    outcome: OutcomeArg,
    /// Seconds until the object was dropped (partial grasps)
    #[arg(long)]
    t_dropped: Option<f64>,
    /// Length of the manipulation cycle in seconds (partial grasps)
    #[arg(long)]
    t_cycle: Option<f64>,
    #[arg(long, value_enum, default_value = "icp")]
    mode: ModeArg,
    /// Initial pre-to-grasp transform: a transform JSON or a synth sidecar
    #[arg(long)]
    init: Option<PathBuf>,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Debug, clap::Args)]
struct AlignArgs {
    #[arg(long)]
    source: PathBuf,
    #[arg(long)]
    target: PathBuf,
    /// Initial transform: a transform JSON or a synth sidecar
    #[arg(long)]
    init: Option<PathBuf>,
    #[command(flatten)]
    icp: IcpArgs,
    /// Directory for aligned.ply and transform.json
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    #[arg(long, value_enum, default_value = "binary")]
    format: FormatArg,
}

#[derive(Debug, clap::Args)]
struct BatchArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Output directory [default: current directory]
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Worker threads [default: number of processors]
    #[arg(long)]
    parallel: Option<usize>,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ShapeArg {
    Box,
    Cylinder,
    Sphere,
    ExtrudedSpline,
}

#[derive(Debug, clap::Args)]
struct SynthArgs {
    #[arg(long, value_enum)]
    shape: ShapeArg,
    /// Comma-separated dimensions in m: box x,y,z; cylinder r,h; sphere r;
    /// extruded-spline w,h,d
    #[arg(long, value_delimiter = ',')]
    dims: Option<Vec<f64>>,
    /// Spline control points per half profile
    #[arg(long, default_value_t = 4)]
    lobes: usize,
    #[arg(long, default_value_t = 2000)]
    n_points: usize,
    /// Scale along the squash axis, in (0, 1]
    #[arg(long, default_value_t = 1.0)]
    squash: f64,
    #[arg(long, value_delimiter = ',', default_value = "0,0,1")]
    squash_axis: Vec<f64>,
    /// Rotation of the grasp cloud in degrees
    #[arg(long, default_value_t = 0.0)]
    rotate_deg: f64,
    #[arg(long, value_delimiter = ',', default_value = "0,0,1")]
    rotate_axis: Vec<f64>,
    /// Translation of the grasp cloud in m
    #[arg(long, value_delimiter = ',', default_value = "0,0,0")]
    translate: Vec<f64>,
    /// Fraction of grasp points removed by a half-space
    #[arg(long)]
    occlude: Option<f64>,
    #[arg(long, value_delimiter = ',', default_value = "1,0,0")]
    occlude_normal: Vec<f64>,
    /// Gaussian noise standard deviation in m
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    #[arg(long, value_enum, default_value = "binary")]
    format: FormatArg,
}

/// Rounds to 9 significant digits for display.
fn sig9(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{x:.8e}").parse().expect("formatted float parses")
}

fn emit(fields: Vec<(&str, Value)>) {
    let obj: Map<String, Value> = fields.into_iter().map(|(k, v)| (k.to_string(), v)).collect();
    println!("{}", Value::Object(obj));
}

fn num(x: f64) -> Value {
    Value::from(sig9(x))
}

#[derive(Deserialize)]
#[serde(untagged)]
enum TransformFile {
    Plain(RigidTransform),
    Sidecar(Box<SynthRecord>),
}

fn load_transform(path: Option<&Path>) -> Result<RigidTransform, CliError> {
    let Some(path) = path else {
        return Ok(RigidTransform::identity());
    };
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    match serde_json::from_str(&text) {
        Ok(TransformFile::Plain(t)) => Ok(t),
        Ok(TransformFile::Sidecar(r)) => Ok(r.ground_truth),
        Err(e) => Err(CliError::Usage(format!("{}: not a transform: {e}", path.display()))),
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).expect("serialisable");
    fs::write(path, text + "\n").map_err(|e| CliError::io(path, e))
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn outcome(args: &ScoreArgs) -> Result<GraspOutcome, CliError> {
    let o = match args.outcome {
        OutcomeArg::Successful => GraspOutcome::Successful,
        OutcomeArg::Unsuccessful => GraspOutcome::Unsuccessful,
        OutcomeArg::Partial => match (args.t_dropped, args.t_cycle) {
            (Some(t_dropped), Some(t_cycle)) => GraspOutcome::Partial { t_dropped, t_cycle },
            _ => return Err(CliError::Usage("--outcome partial requires --t-dropped and --t-cycle".into())),
        },
    };
    if !matches!(o, GraspOutcome::Partial { .. }) && (args.t_dropped.is_some() || args.t_cycle.is_some()) {
        return Err(CliError::Usage("--t-dropped and --t-cycle apply only to partial grasps".into()));
    }
    o.validate()?;
    Ok(o)
}

fn cmd_score(args: ScoreArgs) -> Result<(), CliError> {
    let outcome = outcome(&args)?;
    let config = args.config.resolve(&args.config.file()?, None)?;
    if outcome == GraspOutcome::Unsuccessful {
        let score = grasp_score(&outcome, None)?;
        emit(vec![("score", num(score.value()))]);
        return Ok(());
    }
    let (Some(pre), Some(grasp)) = (&args.pre, &args.grasp) else {
        return Err(CliError::Usage(format!(
            "--pre and --grasp are required for a {} grasp",
            outcome.label()
        )));
    };
    let init = load_transform(args.init.as_deref())?;
    let pre = prepare_cloud(load_cloud(pre)?, &config)?;
    let grasp = prepare_cloud(load_cloud(grasp)?, &config)?;
    let eval = evaluate_pair(&pre, &grasp, &init, args.mode.into(), &config).map_err(CliError::Usage)?;
    let score = grasp_score(&outcome, Some(eval.dcd))?;
    emit(vec![
        ("dcd", num(eval.dcd)),
        ("score", num(score.value())),
        ("alignment_rmse", num(eval.rmse)),
        ("alpha", num(config.alpha)),
        ("mode", Value::from(eval.mode.as_str())),
    ]);
    Ok(())
}

fn cmd_align(args: AlignArgs) -> Result<(), CliError> {
    let params = args.icp.resolve()?;
    let init = load_transform(args.init.as_deref())?;
    let source = load_cloud(&args.source)?;
    let target = load_cloud(&args.target)?;
    let result = icp_align(&source, &target, &init, &params)?;
    create_dir(&args.out_dir)?;
    save_cloud(
        &apply_transform(&source, &result.transform),
        args.out_dir.join("aligned.ply"),
        args.format.into(),
    )?;
    write_json(&args.out_dir.join("transform.json"), &result.transform)?;
    emit(vec![
        ("rmse", num(result.rmse)),
        ("iterations", Value::from(result.iterations)),
        ("converged", Value::from(result.converged)),
    ]);
    Ok(())
}

fn cmd_batch(args: BatchArgs) -> Result<(), CliError> {
    let file = args.config.file()?;
    let manifest = load_manifest(&args.manifest)?;
    let config = args.config.resolve(&file, manifest.alpha)?;
    let out_dir = args.out_dir.or(file.out_dir).unwrap_or_else(|| PathBuf::from("."));
    let threads = args.parallel.or(file.parallel).unwrap_or(0);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let out = pool.install(|| run_batch(&manifest.trials, &config));
    let cells = aggregate(&out.records, &manifest.trials)?;
    export_results(&out, &cells, &config, &out_dir)?;
    for e in &out.errors {
        eprintln!("trial {}: {}", e.trial_id, e.message);
    }
    emit(vec![
        ("trials", Value::from(manifest.trials.len())),
        ("scored", Value::from(out.records.len())),
        ("failed", Value::from(out.errors.len())),
        ("cells", Value::from(cells.len())),
        ("alpha", num(config.alpha)),
        ("out_dir", Value::from(out_dir.display().to_string())),
    ]);
    if out.errors.is_empty() {
        Ok(())
    } else {
        Err(CliError::PartialBatch {
            failed: out.errors.len(),
            total: manifest.trials.len(),
        })
    }
}

fn vec3(name: &str, v: &[f64]) -> Result<[f64; 3], CliError> {
    <[f64; 3]>::try_from(v).map_err(|_| CliError::Usage(format!("--{name} takes three comma-separated values")))
}

fn shape(args: &SynthArgs) -> Result<Shape, CliError> {
    let dims = |default: &[f64]| -> Result<Vec<f64>, CliError> {
        let d = args.dims.clone().unwrap_or_else(|| default.to_vec());
        if d.len() == default.len() {
            Ok(d)
        } else {
            Err(CliError::Usage(format!("--dims for this shape takes {} values", default.len())))
        }
    };
    Ok(match args.shape {
        ShapeArg::Box => {
            let d = dims(&[0.055, 0.045, 0.035])?;
            Shape::Box { size: [d[0], d[1], d[2]] }
        }
        ShapeArg::Cylinder => {
            let d = dims(&[0.025, 0.055])?;
            Shape::Cylinder { radius: d[0], height: d[1] }
        }
        ShapeArg::Sphere => Shape::Sphere { radius: dims(&[0.0275])?[0] },
        ShapeArg::ExtrudedSpline => {
            let d = dims(&[0.055, 0.055, 0.03])?;
            Shape::ExtrudedSpline {
                width: d[0],
                height: d[1],
                depth: d[2],
                lobes: args.lobes,
            }
        }
    })
}

fn cmd_synth(args: SynthArgs) -> Result<(), CliError> {
    let shape_spec = ShapeSpec {
        shape: shape(&args)?,
        n_points: args.n_points,
        seed: args.seed,
    };
    let motion = RigidTransform::from_axis_angle(
        Vector3::from(vec3("rotate-axis", &args.rotate_axis)?),
        args.rotate_deg.to_radians(),
        Vector3::from(vec3("translate", &args.translate)?),
    );
    let mut deform = DeformSpec {
        squash_axis: vec3("squash-axis", &args.squash_axis)?,
        squash_ratio: args.squash,
        rigid_motion: motion,
        occlusion: None,
        noise_sigma: args.noise,
        seed: args.seed.wrapping_add(1),
    };
    if let Some(frac) = args.occlude {
        if !(0.0..1.0).contains(&frac) {
            return Err(CliError::Usage(format!("--occlude {frac} not in [0, 1)")));
        }
        // fit the half-space to the moved, unoccluded cloud
        let (_, moved, _) = generate_pair(&shape_spec, &DeformSpec { noise_sigma: 0.0, ..deform })?;
        deform.occlusion = Some(HalfSpace::dropping_fraction(
            &moved,
            vec3("occlude-normal", &args.occlude_normal)?,
            frac,
        ));
    }
    let (pre, grasp, record) = generate_pair(&shape_spec, &deform)?;
    create_dir(&args.out_dir)?;
    save_cloud(&pre, args.out_dir.join("pre.ply"), args.format.into())?;
    save_cloud(&grasp, args.out_dir.join("grasp.ply"), args.format.into())?;
    write_json(&args.out_dir.join("truth.json"), &record)?;
    emit(vec![
        ("pre_points", Value::from(pre.len())),
        ("grasp_points", Value::from(grasp.len())),
        ("out_dir", Value::from(args.out_dir.display().to_string())),
    ]);
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let result = match cli.command {
        Command::Score(a) => cmd_score(a),
        Command::Align(a) => cmd_align(a),
        Command::Batch(a) => cmd_batch(a),
        Command::Synth(a) => cmd_synth(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
