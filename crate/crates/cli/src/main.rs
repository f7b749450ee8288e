use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use log::info;

use dynsplat::init::{filter_by_instance, InstanceSelection};
use dynsplat::io::{read_gaussians_ply, read_pfm, read_rgb_png, write_gaussians_ply};
use dynsplat::losses::{combined_loss, l1_loss, psnr, ssim_loss};
use dynsplat::pipeline::{
    read_config, run_pipeline, run_stage, verify, write_config, OutputLayout, PipelineConfig, PipelineError, Stage,
};
use dynsplat::synthetic::{demo_scene, write_dataset, SceneSpec};

#[derive(Parser)]
#[command(name = "dynsplat", version, about = "Motion initialization for dynamic Gaussian scenes")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render a synthetic dataset with full ground truth.
    Synth(SynthArgs),
    /// Epipolar dynamic-region detection.
    Detect(StageArgs),
    /// Prompted instance tracking.
    Track(StageArgs),
    /// Track lifting and rigid scene-flow refinement.
    Flow(StageArgs),
    /// Poly-Fourier trajectory fitting.
    Encode(StageArgs),
    /// Static and dynamic Gaussian initialization.
    Init(StageArgs),
    /// Run every stage in order.
    Run(StageArgs),
    /// Compare outputs with a synthetic dataset's ground truth.
    Verify(VerifyArgs),
    /// Keep or remove dynamic instances in a Gaussian PLY.
    Edit(EditArgs),
    /// Evaluate the photometric and depth objective on one view.
    EvalLoss(LossArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// Dataset directory to create.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 80)]
    frames: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Number of sampled object tracks.
    #[arg(long, default_value_t = 10_000)]
    tracks: usize,
    /// Scene spec JSON to render instead of the built-in demo scene.
    #[arg(long)]
    spec: Option<PathBuf>,
}

#[derive(Args)]
struct StageArgs {
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Config TOML. Defaults to `<out>/config.toml` when present.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the configured dataset directory.
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Print the report as JSON.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct EditArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
    /// Instance IDs to keep (comma separated).
    #[arg(long, value_delimiter = ',', conflicts_with = "remove")]
    keep: Vec<u16>,
    /// Instance IDs to remove (comma separated).
    #[arg(long, value_delimiter = ',')]
    remove: Vec<u16>,
    /// Drop static Gaussians.
    #[arg(long)]
    drop_static: bool,
}

#[derive(Args)]
struct LossArgs {
    #[arg(long)]
    image: PathBuf,
    #[arg(long)]
    reference: PathBuf,
    #[arg(long, requires = "reference_depth")]
    depth: Option<PathBuf>,
    #[arg(long, requires = "depth")]
    reference_depth: Option<PathBuf>,
    /// Config TOML providing the loss weights.
    #[arg(long)]
    config: Option<PathBuf>,
}

/// Failures that map to exit code 2.
#[derive(Debug)]
struct ValidationFailure(String);

impl std::fmt::Display for ValidationFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ValidationFailure {}

fn pipeline(e: PipelineError) -> anyhow::Error {
    match e {
        PipelineError::Config(m) => ValidationFailure(format!("invalid configuration: {m}")).into(),
        other => other.into(),
    }
}

fn resolve_config(out: &Path, config: Option<&Path>, dataset: Option<&Path>, seed: Option<u64>) -> Result<PipelineConfig> {
    let layout = OutputLayout::new(out);
    let mut cfg = match config {
        Some(p) => read_config(p).map_err(pipeline)?,
        None if layout.config().exists() => read_config(&layout.config()).map_err(pipeline)?,
        None => PipelineConfig::default(),
    };
    if let Some(d) = dataset {
        cfg.dataset = d.to_path_buf();
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if cfg.dataset.as_os_str().is_empty() {
        return Err(ValidationFailure("no dataset directory: pass --dataset or set `dataset` in the config".into()).into());
    }
    cfg.validate().map_err(pipeline)?;
    Ok(cfg)
}

fn synth(a: &SynthArgs) -> Result<()> {
    let spec = match &a.spec {
        Some(p) => {
            let text = std::fs::read(p).with_context(|| format!("reading {}", p.display()))?;
            serde_json::from_slice::<SceneSpec>(&text).with_context(|| format!("parsing {}", p.display()))?
        }
        None => demo_scene(a.frames, a.seed),
    };
    let scene = spec.build().map_err(|e| ValidationFailure(e.to_string()))?;
    let gt = write_dataset(&scene, &a.out, a.tracks)?;
    println!(
        "wrote {} frames, {} tracks, {} instances to {}",
        scene.frame_count(),
        gt.trajectories.len(),
        gt.motions.len(),
        a.out.display()
    );
    Ok(())
}

fn stage(s: Stage, a: &StageArgs) -> Result<()> {
    let cfg = resolve_config(&a.out, a.config.as_deref(), a.dataset.as_deref(), a.seed)?;
    let layout = OutputLayout::new(&a.out);
    write_config(&cfg, &layout).map_err(pipeline)?;
    run_stage(s, &cfg, &layout).map_err(pipeline)?;
    Ok(())
}

fn run(a: &StageArgs) -> Result<()> {
    let cfg = resolve_config(&a.out, a.config.as_deref(), a.dataset.as_deref(), a.seed)?;
    let start = Instant::now();
    run_pipeline(&cfg, &OutputLayout::new(&a.out)).map_err(pipeline)?;
    info!("pipeline finished in {:.2?}", start.elapsed());
    Ok(())
}

fn verify_cmd(a: &VerifyArgs) -> Result<()> {
    let cfg = resolve_config(&a.out, a.config.as_deref(), a.dataset.as_deref(), None)?;
    let report = verify(&cfg, &OutputLayout::new(&a.out)).map_err(pipeline)?;
    if a.json {
        println!("{}", serde_json::to_string_pretty(&report)?);
    } else {
        print!("{}", report.render());
    }
    if !report.passed {
        return Err(ValidationFailure("outputs do not match ground truth".into()).into());
    }
    Ok(())
}

fn edit(a: &EditArgs) -> Result<()> {
    let records = read_gaussians_ply(&a.input)?;
    let selection = if !a.keep.is_empty() {
        InstanceSelection::Keep(a.keep.iter().copied().collect::<BTreeSet<_>>())
    } else if !a.remove.is_empty() {
        InstanceSelection::Remove(a.remove.iter().copied().collect())
    } else {
        InstanceSelection::All
    };
    let kept = filter_by_instance(&records, &selection, !a.drop_static);
    write_gaussians_ply(&a.output, &kept)?;
    println!("kept {} of {} Gaussians", kept.len(), records.len());
    Ok(())
}

fn eval_loss(a: &LossArgs) -> Result<()> {
    let weights = match &a.config {
        Some(p) => read_config(p).map_err(pipeline)?.loss,
        None => PipelineConfig::default().loss,
    };
    let img = read_rgb_png(&a.image)?;
    let reference = read_rgb_png(&a.reference)?;
    let invalid = |e: dynsplat::losses::LossError| anyhow::Error::from(ValidationFailure(e.to_string()));
    let report = match (&a.depth, &a.reference_depth) {
        (Some(d), Some(rd)) => {
            let d = read_pfm(d)?.map(|v| *v as f64);
            let rd = read_pfm(rd)?.map(|v| *v as f64);
            let valid = d.map(|v| *v > 0.0);
            let b = combined_loss(&img, &reference, &d, &rd, Some(&valid), &weights).map_err(invalid)?;
            serde_json::json!({ "l1": b.l1, "ssim": b.ssim, "depth": b.depth, "total": b.total })
        }
        _ => {
            weights.validate().map_err(invalid)?;
            let l1 = l1_loss(&img, &reference, None).map_err(invalid)?;
            let ssim = ssim_loss(&img, &reference).map_err(invalid)?;
            let total = (1.0 - weights.lambda_ssim) * l1 + weights.lambda_ssim * ssim;
            serde_json::json!({ "l1": l1, "ssim": ssim, "total": total })
        }
    };
    let mut report = report;
    report["psnr"] = serde_json::json!(psnr(&img, &reference).map_err(invalid)?);
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

fn dispatch(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Synth(a) => synth(a),
        Command::Detect(a) => stage(Stage::Detect, a),
        Command::Track(a) => stage(Stage::Track, a),
        Command::Flow(a) => stage(Stage::Flow, a),
        Command::Encode(a) => stage(Stage::Encode, a),
        Command::Init(a) => stage(Stage::Init, a),
        Command::Run(a) => run(a),
        Command::Verify(a) => verify_cmd(a),
        Command::Edit(a) => edit(a),
        Command::EvalLoss(a) => eval_loss(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            eprintln!("error: --jobs must be at least 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<ValidationFailure>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
