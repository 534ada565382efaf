//! The six pipeline commands behind the `lift3d` binary.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};

use lift3d_core::atomic_write;
use lift3d_core::boxes::Detection2D;
use lift3d_core::encoding::{ClassPriors, OrientationBins};
use lift3d_core::evalkit::{
    evaluate, iou_sweep, read_label_file, ApMode, EvalReport, LabelRecord, MatchGeometry,
};
use lift3d_core::nettrain::{
    config_hash, load_checkpoint, read_checkpoint_config, save_checkpoint, train, LiftNet,
    LiftNetConfig, OptimConfig, Precision, Scalar, TrainHistory,
};
use lift3d_core::pipeline::{
    detections_from_labels, lift_detections, lifted_to_label, load_frame, priors_from_dataset,
    SceneBatchSource,
};
use lift3d_core::roipipe::AugmentConfig;
use lift3d_core::synthdata::{generate_dataset, load_dataset_index, DatasetIndex};

use crate::config::RunConfig;
use crate::svgplot::{render_bev, PlotBox};

/// Generate a synthetic dataset under `out_dir`.
pub fn cmd_synth_gen(cfg: &RunConfig, n_scenes: usize, out_dir: &Path) -> Result<()> {
    generate_dataset(&cfg.scene, n_scenes, out_dir)
        .with_context(|| format!("generating {n_scenes} scenes under {}", out_dir.display()))?;
    Ok(())
}

/// Companion file paths derived from a checkpoint path.
pub fn priors_path_for(checkpoint: &Path) -> PathBuf {
    let mut p = checkpoint.as_os_str().to_owned();
    p.push(".priors.txt");
    PathBuf::from(p)
}

pub fn loss_log_path_for(checkpoint: &Path) -> PathBuf {
    let mut p = checkpoint.as_os_str().to_owned();
    p.push(".loss.txt");
    PathBuf::from(p)
}

fn net_config(cfg: &RunConfig, precision: Precision) -> LiftNetConfig {
    LiftNetConfig {
        input_channels: cfg.classes.len() + 3,
        stage_channels: cfg.net.stage_channels.clone(),
        blocks_per_stage: cfg.net.blocks_per_stage,
        mlp_hidden: cfg.net.mlp_hidden,
        num_classes: cfg.classes.len(),
        bins: cfg.net.bins,
        precision,
    }
}

/// Outcome of a training run, for logging and tests.
pub struct TrainSummary {
    pub steps: usize,
    pub initial_loss: f64,
    pub final_loss: f64,
    pub augmented: bool,
}

/// Train a lifting network on a dataset directory and write the checkpoint,
/// dimension priors, and loss log next to each other.
pub fn cmd_train(
    cfg: &RunConfig,
    dataset: &Path,
    out_checkpoint: &Path,
    precision: Precision,
    no_augment: bool,
    resume: bool,
) -> Result<TrainSummary> {
    match precision {
        Precision::F32 => run_train::<f32>(cfg, dataset, out_checkpoint, no_augment, resume),
        Precision::F64 => run_train::<f64>(cfg, dataset, out_checkpoint, no_augment, resume),
    }
}

fn run_train<T: Scalar>(
    cfg: &RunConfig,
    dataset: &Path,
    out_checkpoint: &Path,
    no_augment: bool,
    resume: bool,
) -> Result<TrainSummary> {
    let index = load_dataset_index(dataset)?;
    let priors = priors_from_dataset(&index, &cfg.classes)?;
    let bins = OrientationBins::new(cfg.net.bins)?;
    let augmented = cfg.train.augment && !no_augment;
    let augment = if augmented {
        Some(AugmentConfig::new(cfg.train.jitter_fraction, cfg.seed)?)
    } else {
        None
    };
    let net_cfg = net_config(cfg, T::PRECISION);
    let mut net: LiftNet<T> = if resume {
        let stored = read_checkpoint_config(out_checkpoint)?;
        if config_hash(&stored) != config_hash(&net_cfg) {
            bail!(
                "cannot resume: checkpoint config hash {:016x} differs from run config {:016x}",
                config_hash(&stored),
                config_hash(&net_cfg)
            );
        }
        load_checkpoint(out_checkpoint)?
    } else {
        LiftNet::new(&net_cfg, cfg.seed)?
    };
    let mut source = SceneBatchSource::new(
        index,
        cfg.classes.clone(),
        priors.clone(),
        bins,
        augment,
    )?;
    let optim = OptimConfig {
        learning_rate: cfg.train.learning_rate,
        grad_clip_norm: cfg.train.grad_clip,
        batch_size: cfg.train.batch_size,
        ..Default::default()
    };
    let history = train(
        &mut net,
        &mut source,
        &optim,
        &cfg.loss,
        cfg.train.epochs,
        cfg.seed,
    )?;
    save_checkpoint(&net, out_checkpoint)?;
    priors.write_table(&priors_path_for(out_checkpoint))?;
    write_loss_log(&loss_log_path_for(out_checkpoint), &history)?;
    Ok(TrainSummary {
        steps: history.steps.len(),
        initial_loss: history.initial_total().unwrap_or(0.0),
        final_loss: history.final_total().unwrap_or(0.0),
        augmented,
    })
}

fn write_loss_log(path: &Path, history: &TrainHistory) -> Result<()> {
    let mut text = String::from("# step total loc dim theta cls\n");
    for (i, b) in history.steps.iter().enumerate() {
        text.push_str(&format!(
            "{i} {:.6} {:.6} {:.6} {:.6} {:.6}\n",
            b.total, b.loc, b.dim, b.theta, b.cls
        ));
    }
    atomic_write(path, text.as_bytes())?;
    Ok(())
}

/// Lift the 2D boxes of every dataset frame into 3D detections, one KITTI
/// detection file per frame.
pub fn cmd_lift(
    cfg: &RunConfig,
    checkpoint: &Path,
    dataset: &Path,
    out_dir: &Path,
    priors_override: Option<&Path>,
) -> Result<()> {
    let stored = read_checkpoint_config(checkpoint)?;
    match stored.precision {
        Precision::F32 => run_lift::<f32>(cfg, checkpoint, dataset, out_dir, priors_override),
        Precision::F64 => run_lift::<f64>(cfg, checkpoint, dataset, out_dir, priors_override),
    }
}

fn run_lift<T: Scalar>(
    cfg: &RunConfig,
    checkpoint: &Path,
    dataset: &Path,
    out_dir: &Path,
    priors_override: Option<&Path>,
) -> Result<()> {
    let net: LiftNet<T> = load_checkpoint(checkpoint)?;
    if net.config.num_classes != cfg.classes.len() {
        bail!(
            "checkpoint was trained with {} classes, run config names {}",
            net.config.num_classes,
            cfg.classes.len()
        );
    }
    let priors_path = priors_override
        .map(Path::to_path_buf)
        .unwrap_or_else(|| priors_path_for(checkpoint));
    let priors = ClassPriors::read_table(&priors_path)
        .with_context(|| format!("loading dimension priors {}", priors_path.display()))?;
    let bins = OrientationBins::new(net.config.bins)?;
    let index = load_dataset_index(dataset)?;
    std::fs::create_dir_all(out_dir)
        .with_context(|| format!("creating {}", out_dir.display()))?;
    for entry in &index.frames {
        let frame = load_frame(entry, &index, cfg.classes.len())?;
        let pairs = detections_from_labels(&frame.labels, &cfg.classes);
        let dets: Vec<Detection2D> = pairs.iter().map(|(d, _)| *d).collect();
        let lifted = lift_detections(
            &net,
            &frame.cloud,
            &frame.semantic,
            &dets,
            &priors,
            &bins,
            cfg.classes.len(),
        )?;
        let records: Vec<LabelRecord> = dets
            .iter()
            .zip(lifted.iter())
            .map(|(det, l)| lifted_to_label(det, l, &cfg.classes))
            .collect();
        let out_path = out_dir.join(format!("{:06}.txt", entry.index));
        lift3d_core::evalkit::write_label_file(&out_path, &records)?;
    }
    Ok(())
}

/// A directory of label files keyed by file stem.
fn read_label_dir(dir: &Path) -> Result<Vec<(String, Vec<LabelRecord>)>> {
    let label_dir = if dir.join("label").is_dir() {
        dir.join("label")
    } else {
        dir.to_path_buf()
    };
    let mut names = Vec::new();
    for entry in std::fs::read_dir(&label_dir)
        .with_context(|| format!("reading {}", label_dir.display()))?
    {
        let entry = entry?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if let Some(stem) = name.strip_suffix(".txt") {
            names.push(stem.to_string());
        }
    }
    if names.is_empty() {
        bail!("{}: no label files found", label_dir.display());
    }
    names.sort();
    names
        .into_iter()
        .map(|stem| {
            let records = read_label_file(&label_dir.join(format!("{stem}.txt")))?;
            Ok((stem, records))
        })
        .collect()
}

/// Load aligned gt/detection frames. Detections missing a score field are
/// treated as confidence 1.0 so plain label files evaluate directly.
pub fn load_eval_frames(
    gt_dir: &Path,
    det_dir: &Path,
) -> Result<(Vec<Vec<LabelRecord>>, Vec<Vec<LabelRecord>>)> {
    let gt = read_label_dir(gt_dir)?;
    let det_map: std::collections::BTreeMap<String, Vec<LabelRecord>> =
        read_label_dir(det_dir)?.into_iter().collect();
    let mut gt_frames = Vec::with_capacity(gt.len());
    let mut det_frames = Vec::with_capacity(gt.len());
    for (stem, gts) in gt {
        let dets = det_map
            .get(&stem)
            .cloned()
            .unwrap_or_default()
            .into_iter()
            .map(|mut d| {
                if d.score.is_none() {
                    d.score = Some(1.0);
                }
                d
            })
            .collect();
        gt_frames.push(gts);
        det_frames.push(dets);
    }
    Ok((gt_frames, det_frames))
}

/// Evaluate detections against ground truth and emit the report.
pub fn cmd_eval(
    cfg: &RunConfig,
    gt_dir: &Path,
    det_dir: &Path,
    out: Option<&Path>,
    mode_override: Option<ApMode>,
) -> Result<EvalReport> {
    let (gt_frames, det_frames) = load_eval_frames(gt_dir, det_dir)?;
    let mode = mode_override.unwrap_or(cfg.eval_mode);
    let report = evaluate(&gt_frames, &det_frames, &cfg.eval_specs, mode)?;
    if let Some(path) = out {
        atomic_write(path, report.to_key_values().as_bytes())?;
    }
    Ok(report)
}

/// AP over the configured IoU thresholds.
pub fn cmd_sweep(
    cfg: &RunConfig,
    gt_dir: &Path,
    det_dir: &Path,
    out: Option<&Path>,
    mode_override: Option<ApMode>,
) -> Result<Vec<(f64, f64)>> {
    let (gt_frames, det_frames) = load_eval_frames(gt_dir, det_dir)?;
    let mode = mode_override.unwrap_or(cfg.eval_mode);
    let geometry = if cfg.sweep.metric == "bev" {
        MatchGeometry::Bev
    } else {
        MatchGeometry::ThreeD
    };
    let curve = iou_sweep(
        &gt_frames,
        &det_frames,
        &cfg.sweep.class,
        cfg.sweep.difficulty,
        geometry,
        &cfg.sweep.thresholds,
        mode,
    )?;
    if let Some(path) = out {
        let mut text = format!(
            "# iou ap_{} class={} difficulty={} mode={}\n",
            cfg.sweep.metric,
            cfg.sweep.class,
            cfg.sweep.difficulty.name(),
            mode.name()
        );
        for (iou, ap) in &curve {
            text.push_str(&format!("{iou} {ap:.6}\n"));
        }
        atomic_write(path, text.as_bytes())?;
    }
    Ok(curve)
}

/// Render ground-truth (green) and detection (blue) boxes of one frame as a
/// BEV SVG with red heading lines.
pub fn cmd_plot_bev(
    gt_labels: &Path,
    det_labels: Option<&Path>,
    out: &Path,
    target_px: f64,
) -> Result<()> {
    let mut boxes = Vec::new();
    for rec in read_label_file(gt_labels)? {
        if rec.is_dontcare() {
            continue;
        }
        let b = rec
            .box3d()
            .map_err(|e| anyhow!("{}: {e}", gt_labels.display()))?;
        boxes.push(PlotBox {
            box3d: b,
            color: "green".into(),
            label: Some(rec.type_name.clone()),
        });
    }
    if let Some(det_path) = det_labels {
        for rec in read_label_file(det_path)? {
            let b = rec
                .box3d()
                .map_err(|e| anyhow!("{}: {e}", det_path.display()))?;
            let label = rec
                .score
                .map(|s| format!("{} {s:.2}", rec.type_name))
                .unwrap_or_else(|| rec.type_name.clone());
            boxes.push(PlotBox {
                box3d: b,
                color: "blue".into(),
                label: Some(label),
            });
        }
    }
    let svg = render_bev(&boxes, target_px);
    atomic_write(out, svg.as_bytes())?;
    Ok(())
}

/// Shared helper for tests and the binary: a dataset index for a directory.
pub fn open_dataset(dir: &Path) -> Result<DatasetIndex> {
    Ok(load_dataset_index(dir)?)
}
