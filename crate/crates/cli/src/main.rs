use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, Result};
use clap::{Parser, Subcommand};

use lift3d_cli::commands;
use lift3d_cli::config::RunConfig;
use lift3d_core::evalkit::ApMode;
use lift3d_core::nettrain::Precision;

#[derive(Parser)]
#[command(
    name = "lift3d",
    about = "Lift 2D detections to 3D boxes from organized point clouds: synthetic data, training, inference, and KITTI-style evaluation"
)]
struct Cli {
    /// Key=value run configuration file; defaults apply per key.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset (depth, semantics, labels, calib).
    SynthGen {
        /// Output dataset directory.
        #[arg(long)]
        out: PathBuf,
        /// Number of scenes to render.
        #[arg(long)]
        scenes: usize,
    },
    /// Train the lifting network on a dataset.
    Train {
        /// Dataset directory from synth-gen.
        #[arg(long)]
        dataset: PathBuf,
        /// Output checkpoint path; priors and loss log land next to it.
        #[arg(long)]
        out: PathBuf,
        /// Disable the 2D-box jitter augmentation.
        #[arg(long)]
        no_augment: bool,
        /// Numeric precision of the network.
        #[arg(long, default_value = "f32", value_parser = parse_precision)]
        precision: Precision,
        /// Continue training from the existing checkpoint at --out.
        #[arg(long)]
        resume: bool,
        /// Override the configured epoch count.
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Lift each frame's 2D boxes into 3D detection files.
    Lift {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        /// Output directory of per-frame KITTI detection files.
        #[arg(long)]
        out: PathBuf,
        /// Dimension-priors table; defaults to <checkpoint>.priors.txt.
        #[arg(long)]
        priors: Option<PathBuf>,
    },
    /// Evaluate detections against ground truth.
    Eval {
        /// Ground-truth dataset directory (or a bare label directory).
        #[arg(long)]
        gt: PathBuf,
        /// Directory of detection label files.
        #[arg(long)]
        det: PathBuf,
        /// Write the machine-readable key=value report here.
        #[arg(long)]
        out: Option<PathBuf>,
        /// AP interpolation mode.
        #[arg(long, value_parser = parse_mode)]
        mode: Option<ApMode>,
    },
    /// AP over a list of IoU thresholds.
    Sweep {
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        det: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_parser = parse_mode)]
        mode: Option<ApMode>,
    },
    /// Render one frame's boxes as a bird's-eye-view SVG.
    PlotBev {
        /// Ground-truth label file.
        #[arg(long)]
        gt: PathBuf,
        /// Optional detection label file.
        #[arg(long)]
        det: Option<PathBuf>,
        /// Output SVG path.
        #[arg(long)]
        out: PathBuf,
        /// Plot content size in pixels.
        #[arg(long, default_value_t = 480.0)]
        size: f64,
    },
}

fn parse_precision(s: &str) -> Result<Precision, String> {
    match s {
        "f32" => Ok(Precision::F32),
        "f64" => Ok(Precision::F64),
        other => Err(format!("expected f32 or f64, got {other:?}")),
    }
}

fn parse_mode(s: &str) -> Result<ApMode, String> {
    ApMode::parse(s).map_err(|e| e.to_string())
}

fn init_thread_pool() -> Result<()> {
    if let Ok(value) = std::env::var("LIFT3D_THREADS") {
        let threads: usize = value
            .parse()
            .map_err(|_| anyhow!("LIFT3D_THREADS: bad thread count {value:?}"))?;
        if threads > 0 {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build_global()
                .map_err(|e| anyhow!("thread pool: {e}"))?;
        }
    }
    Ok(())
}

fn run() -> Result<()> {
    let cli = Cli::parse();
    init_thread_pool()?;
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::from_file(path)?,
        None => RunConfig::default_config(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
        cfg.scene.seed = seed;
    }
    match cli.command {
        Command::SynthGen { out, scenes } => {
            commands::cmd_synth_gen(&cfg, scenes, &out)?;
            println!("generated {scenes} scenes under {}", out.display());
        }
        Command::Train {
            dataset,
            out,
            no_augment,
            precision,
            resume,
            epochs,
        } => {
            if let Some(e) = epochs {
                cfg.train.epochs = e;
            }
            let summary = commands::cmd_train(&cfg, &dataset, &out, precision, no_augment, resume)?;
            println!(
                "trained {} steps (augment: {}), loss {:.4} -> {:.4}, checkpoint {}",
                summary.steps,
                summary.augmented,
                summary.initial_loss,
                summary.final_loss,
                out.display()
            );
        }
        Command::Lift {
            checkpoint,
            dataset,
            out,
            priors,
        } => {
            commands::cmd_lift(&cfg, &checkpoint, &dataset, &out, priors.as_deref())?;
            println!("lifted detections written to {}", out.display());
        }
        Command::Eval { gt, det, out, mode } => {
            let report = commands::cmd_eval(&cfg, &gt, &det, out.as_deref(), mode)?;
            print!("{}", report.to_table());
        }
        Command::Sweep { gt, det, out, mode } => {
            let curve = commands::cmd_sweep(&cfg, &gt, &det, out.as_deref(), mode)?;
            println!(
                "# iou ap_{} class={} difficulty={}",
                cfg.sweep.metric,
                cfg.sweep.class,
                cfg.sweep.difficulty.name()
            );
            for (iou, ap) in curve {
                println!("{iou} {ap:.4}");
            }
        }
        Command::PlotBev { gt, det, out, size } => {
            commands::cmd_plot_bev(&gt, det.as_deref(), &out, size)?;
            println!("wrote {}", out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}
