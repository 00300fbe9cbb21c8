//! Batch command line: `calibrate`, `evaluate`, `synth` and `selftest`.

use crate::eval::{evaluate, EvalError};
use crate::formats::{
    export_ply, load_feature_dir, load_ground_truth, load_intrinsics, read_estimates, write_dataset, write_estimates,
    FormatError, GroundTruthFormat,
};
use crate::pipeline::{run_sequence, PipelineConfig, PipelineError};
use crate::selftest;
use crate::synth::{generate_ring, generate_wall, WallConfig};
use clap::{Parser, Subcommand, ValueEnum};
use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use thiserror::Error;

pub const EXIT_RUNTIME: u8 = 1;
pub const EXIT_USAGE: u8 = 2;

#[derive(Debug, Parser)]
#[command(name = "extcal", version, about = "Recover camera extrinsics from feature correspondences and score them against ground truth")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Reconstruct camera poses from a directory of keypoint files.
    Calibrate(CalibrateArgs),
    /// Compare estimated poses with ground-truth camera files.
    Evaluate(EvaluateArgs),
    /// Write a synthetic dataset with ground truth.
    Synth(SynthArgs),
    /// Run the built-in oracle checks.
    Selftest,
}

#[derive(Debug, clap::Args)]
pub struct CalibrateArgs {
    /// Directory of `.key` / `.key.gz` files, processed in name order.
    #[arg(long)]
    pub features: PathBuf,
    /// K as three rows, optionally followed by `k1 k2 p1 p2`.
    #[arg(long)]
    pub intrinsics: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Sampson-distance threshold of the relative-pose RANSAC (normalized units).
    #[arg(long, default_value_t = 1e-3)]
    pub relative_threshold: f64,
    /// Reprojection threshold of the absolute-pose RANSAC (normalized units).
    #[arg(long, default_value_t = 1e-3)]
    pub absolute_threshold: f64,
    #[arg(long, default_value_t = 2000)]
    pub ransac_iterations: usize,
    #[arg(long, default_value_t = 0.999)]
    pub confidence: f64,
    /// Reprojection bound for geometric compatibility (normalized units).
    #[arg(long, default_value_t = 2e-3)]
    pub tau_reproj: f64,
    /// Descriptor distance bound; defaults to 0.35 × the mean descriptor norm.
    #[arg(long)]
    pub tau_desc: Option<f64>,
    /// Ratio-test factor: second-nearest must be at least theta × nearest.
    #[arg(long, default_value_t = 1.25)]
    pub theta: f64,
    #[arg(long, default_value_t = 20)]
    pub guided_k: usize,
    #[arg(long, default_value_t = 5)]
    pub window: usize,
    #[arg(long, default_value_t = 50)]
    pub ba_iterations: usize,
    /// Optimize only the newest camera during registration.
    #[arg(long)]
    pub freeze_old_cameras: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum FormatArg {
    Middlebury,
    Strecha,
}

#[derive(Debug, clap::Args)]
pub struct EvaluateArgs {
    /// Output directory of `calibrate`.
    #[arg(long)]
    pub est: PathBuf,
    /// Directory with a `.par` file or `.camera` files.
    #[arg(long)]
    pub gt: PathBuf,
    #[arg(long, value_enum)]
    pub format: FormatArg,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SceneKind {
    Ring,
    Wall,
}

#[derive(Debug, clap::Args)]
pub struct SynthArgs {
    #[arg(long, value_enum)]
    pub kind: SceneKind,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub cameras: usize,
    #[arg(long, default_value_t = 500)]
    pub points: usize,
    /// Gaussian keypoint noise in pixels.
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    /// Fraction of features per image that are outliers.
    #[arg(long, default_value_t = 0.0)]
    pub outliers: f64,
    /// Ring step in degrees.
    #[arg(long, default_value_t = 7.5)]
    pub step: f64,
    /// Wall relief half-range (world units).
    #[arg(long, default_value_t = 0.0)]
    pub relief: f64,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("InvalidArgument: {0}")]
    InvalidArgument(String),
    #[error("{}: {}", if .0.is_parse() { "ParseError" } else { "IoError" }, .0)]
    Format(#[from] FormatError),
    #[error("InitFailed: {0}")]
    Pipeline(#[from] PipelineError),
    #[error("{}: {}", eval_class(.0), .0)]
    Eval(#[from] EvalError),
    #[error("IoError: {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("SelftestFailed: {0} check(s) failed")]
    Selftest(usize),
}

fn eval_class(e: &EvalError) -> &'static str {
    match e {
        EvalError::MissingGroundTruth { .. } => "MissingGroundTruth",
        EvalError::DegenerateBaseline => "DegenerateBaseline",
        EvalError::DegenerateCloud => "DegenerateCloud",
        _ => "EvaluationError",
    }
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|source| CliError::Io { path: path.to_path_buf(), source })
}

impl CalibrateArgs {
    pub fn config(&self) -> PipelineConfig {
        let mut cfg = PipelineConfig::default().with_seed(self.seed);
        for (params, threshold) in [
            (&mut cfg.relative_ransac, self.relative_threshold),
            (&mut cfg.absolute_ransac, self.absolute_threshold),
        ] {
            params.inlier_threshold = threshold;
            params.max_iterations = self.ransac_iterations;
            params.confidence = self.confidence;
        }
        cfg.tau_reproj = self.tau_reproj;
        cfg.tau_desc = self.tau_desc;
        cfg.theta = self.theta;
        cfg.guided_k = self.guided_k;
        cfg.window = self.window;
        cfg.ba_max_iters = self.ba_iterations;
        cfg.freeze_old_cameras = self.freeze_old_cameras;
        cfg
    }
}

pub fn calibrate(args: &CalibrateArgs) -> Result<String, CliError> {
    let cfg = args.config();
    cfg.validate().map_err(CliError::InvalidArgument)?;
    let intr = load_intrinsics(&args.intrinsics)?;
    let (names, features) = load_feature_dir(&args.features, &intr)?;
    let rec = run_sequence(&features, &cfg)?;
    write_estimates(&args.out, &rec.registered_poses(), &names)?;
    export_ply(&rec, &args.out.join("model.ply"))?;

    let mut log = String::new();
    let _ = writeln!(log, "images {}", features.len());
    let _ = writeln!(log, "registered {}", rec.registered.len());
    for id in &rec.registered {
        let _ = writeln!(log, "  registered {} {}", id, names[*id]);
    }
    for (id, reason) in &rec.failed {
        let _ = writeln!(log, "  failed {} {}: {}", id, names[*id], reason);
    }
    let _ = writeln!(log, "points {}", rec.points.len());
    for (i, r) in rec.ba_reports.iter().enumerate() {
        let _ = writeln!(
            log,
            "ba {} iterations {} accepted {} rmse {:e} -> {:e} converged {}",
            i, r.iterations, r.accepted_steps, r.initial_rmse, r.final_rmse, r.converged
        );
    }
    write_file(&args.out.join("calibrate.log"), &log)?;
    Ok(format!(
        "registered {}/{} images, {} points, output in {}",
        rec.registered.len(),
        features.len(),
        rec.points.len(),
        args.out.display()
    ))
}

pub fn evaluate_cmd(args: &EvaluateArgs) -> Result<String, CliError> {
    let format = match args.format {
        FormatArg::Middlebury => GroundTruthFormat::Middlebury,
        FormatArg::Strecha => GroundTruthFormat::Strecha,
    };
    let gt: Vec<_> = load_ground_truth(&args.gt, format)?.into_iter().map(|c| c.pose).collect();
    let est: Vec<_> = read_estimates(&args.est)?.into_iter().map(|e| (e.image_id, e.pose)).collect();
    if est.len() > gt.len() {
        let image_id = est.iter().map(|(id, _)| *id).find(|id| *id >= gt.len()).unwrap_or(gt.len());
        return Err(EvalError::MissingGroundTruth { image_id }.into());
    }
    let report = evaluate(&est, &gt)?;
    write_file(&args.out, &report.to_csv())?;
    Ok(format!(
        "{} cameras, scale {}, max R_err {:e}°, max T_err {:e}°, max C_err {:e}",
        report.rows.len(),
        report.scale,
        report.max_rotation_error(),
        report.max_translation_error(),
        report.max_center_error()
    ))
}

pub fn synth(args: &SynthArgs) -> Result<String, CliError> {
    if args.cameras < 2 {
        return Err(CliError::InvalidArgument("at least two cameras are required".into()));
    }
    if !(0.0..1.0).contains(&args.outliers) {
        return Err(CliError::InvalidArgument("outliers must lie in [0, 1)".into()));
    }
    if !(args.noise >= 0.0) {
        return Err(CliError::InvalidArgument("noise must be non-negative".into()));
    }
    let scene = match args.kind {
        SceneKind::Ring => generate_ring(args.cameras, args.step, args.points, args.noise, args.outliers, args.seed),
        SceneKind::Wall => generate_wall(&WallConfig {
            n_cameras: args.cameras,
            n_points: args.points,
            relief: args.relief,
            noise_sigma: args.noise,
            outlier_rate: args.outliers,
            seed: args.seed,
            ..WallConfig::default()
        }),
    };
    let layout = write_dataset(&args.out, &scene)?;
    Ok(format!(
        "wrote {} images to {} (intrinsics {}, ground truth {})",
        scene.features.len(),
        layout.features.display(),
        layout.intrinsics.display(),
        layout.ground_truth.display()
    ))
}

pub fn selftest_cmd(out: &mut impl Write) -> Result<String, CliError> {
    let results = selftest::run_all();
    for r in &results {
        let _ = writeln!(out, "{} {}: {}", if r.passed { "PASS" } else { "FAIL" }, r.name, r.detail);
    }
    let failed = results.iter().filter(|r| !r.passed).count();
    if failed > 0 {
        return Err(CliError::Selftest(failed));
    }
    Ok(format!("{} checks passed", results.len()))
}

/// Parses `argv` and runs the command. Usage errors exit with 2, runtime
/// failures with 1.
pub fn run<I, T>(argv: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return ExitCode::from(if code == 0 { 0 } else { EXIT_USAGE });
        }
    };
    let outcome = match &cli.command {
        Command::Calibrate(a) => calibrate(a),
        Command::Evaluate(a) => evaluate_cmd(a),
        Command::Synth(a) => synth(a),
        Command::Selftest => selftest_cmd(&mut std::io::stdout()),
    };
    match outcome {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_RUNTIME)
        }
    }
}
