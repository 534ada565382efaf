//! End-to-end composition of the modules: loading dataset frames, building
//! training batches straight from disk with online jitter, lifting 2D
//! detections into 3D boxes with a trained network, and turning lifted
//! detections back into label records.

use ndarray::{Array2, Array4};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::boxes::{Box3D, Detection2D, LiftedDetection};
use crate::encoding::{
    decode_prediction, ClassPriors, OrientationBins, PredictionOutputs, TargetVector,
};
use crate::error::{Error, Result};
use crate::evalkit::LabelRecord;
use crate::geometry::{backproject, read_depth_file, CameraIntrinsics, OrganizedPointCloud};
use crate::nettrain::{
    batch_from_samples, softmax_row, BatchInputs, BatchSource, LiftNet, Scalar, TrainBatch,
};
use crate::roipipe::{
    build_sample, jitter_box, read_pgm, sample_prior, AugmentConfig, ModelInput, SemanticMask,
    ROI_SIZE,
};
use crate::synthdata::{DatasetIndex, FrameEntry};
use crate::wrap_angle;

/// A dataset frame loaded into memory.
pub struct LoadedFrame {
    pub cloud: OrganizedPointCloud,
    pub semantic: SemanticMask,
    pub labels: Vec<LabelRecord>,
    pub intrinsics: CameraIntrinsics,
}

/// Load one frame: depth grid to organized cloud, semantic mask, labels.
pub fn load_frame(
    entry: &FrameEntry,
    index: &DatasetIndex,
    num_classes: usize,
) -> Result<LoadedFrame> {
    let depth = read_depth_file(&entry.depth_path)?;
    let intrinsics = index
        .calib
        .intrinsics(depth.width(), depth.height())?;
    let cloud = backproject(&depth, &intrinsics)?;
    let semantic = read_pgm(&entry.semantic_path, num_classes)?;
    let labels = crate::evalkit::read_label_file(&entry.label_path)?;
    Ok(LoadedFrame {
        cloud,
        semantic,
        labels,
        intrinsics,
    })
}

/// Resolve a class name to its id in the configured class list.
pub fn class_id_of(name: &str, class_names: &[String]) -> Option<usize> {
    class_names.iter().position(|c| c == name)
}

/// Ground-truth detections for training/lifting: the label's 2D box with the
/// label's 3D box attached. DontCare and unknown classes are skipped.
pub fn detections_from_labels(
    labels: &[LabelRecord],
    class_names: &[String],
) -> Vec<(Detection2D, Box3D)> {
    labels
        .iter()
        .filter(|l| !l.is_dontcare())
        .filter_map(|l| {
            let class_id = class_id_of(&l.type_name, class_names)?;
            let box2d = l.box2d().ok()?;
            let box3d = l.box3d().ok()?;
            let det = Detection2D::new(class_id, l.score.unwrap_or(1.0), box2d).ok()?;
            Some((det, box3d))
        })
        .collect()
}

/// Per-class mean dimensions over every label in the dataset.
pub fn priors_from_dataset(index: &DatasetIndex, class_names: &[String]) -> Result<ClassPriors> {
    let mut samples = Vec::new();
    for frame in &index.frames {
        let labels = crate::evalkit::read_label_file(&frame.label_path)?;
        for l in &labels {
            if let Some(class_id) = class_id_of(&l.type_name, class_names) {
                samples.push((class_id, l.dims));
            }
        }
    }
    if samples.is_empty() {
        return Err(Error::Config(
            "dataset contains no labels of the configured classes".into(),
        ));
    }
    Ok(ClassPriors::from_labels(samples))
}

/// Lift scored 2D detections into 3D boxes with a trained network.
///
/// The lifted score is the 2D score scaled by the orientation-bin softmax
/// confidence, giving the evaluator a usable ranking signal.
pub fn lift_detections<T: Scalar>(
    net: &LiftNet<T>,
    cloud: &OrganizedPointCloud,
    semantic: &SemanticMask,
    dets: &[Detection2D],
    priors: &ClassPriors,
    bins: &OrientationBins,
    num_classes: usize,
) -> Result<Vec<LiftedDetection>> {
    if dets.is_empty() {
        return Ok(Vec::new());
    }
    let mut inputs = Vec::with_capacity(dets.len());
    let mut det_priors = Vec::with_capacity(dets.len());
    for det in dets {
        let (input, _) = build_sample(cloud, semantic, det, priors, bins, num_classes, None)?;
        let prior = sample_prior(cloud, det)?;
        inputs.push(input);
        det_priors.push(prior);
    }
    let batch = inputs_to_batch::<T>(&inputs);
    let (outputs, _) = net.forward(&batch)?;
    let mut lifted = Vec::with_capacity(dets.len());
    for (i, det) in dets.iter().enumerate() {
        let b = bins.count();
        let pred = PredictionOutputs {
            delta_p: [
                outputs.delta_p[(i, 0)].as_f64(),
                outputs.delta_p[(i, 1)].as_f64(),
                outputs.delta_p[(i, 2)].as_f64(),
            ],
            delta_d: [
                outputs.delta_d[(i, 0)].as_f64(),
                outputs.delta_d[(i, 1)].as_f64(),
                outputs.delta_d[(i, 2)].as_f64(),
            ],
            bin_logits: (0..b).map(|j| outputs.bin_logits[(i, j)].as_f64()).collect(),
            theta_reg: (0..b).map(|j| outputs.theta_reg[(i, j)].as_f64()).collect(),
        };
        let box3d = decode_prediction(&pred, &det_priors[i], det.class_id, priors, bins)?;
        let confidence = softmax_row(&outputs.bin_logits, i)
            .into_iter()
            .fold(0.0f64, f64::max);
        lifted.push(LiftedDetection {
            class_id: det.class_id,
            score: (det.score * confidence).clamp(0.0, 1.0),
            box3d,
        });
    }
    Ok(lifted)
}

/// Pack assembled model inputs into batch tensors without targets.
pub fn inputs_to_batch<T: Scalar>(inputs: &[ModelInput]) -> BatchInputs<T> {
    let n = inputs.len();
    let channels = inputs.first().map(|m| m.tensor.channels()).unwrap_or(0);
    let num_classes = inputs.first().map(|m| m.class_onehot.len()).unwrap_or(0);
    let mut roi = Array4::zeros((n, channels, ROI_SIZE, ROI_SIZE));
    let mut p_m = Array2::zeros((n, 3));
    let mut d_prior = Array2::zeros((n, 3));
    let mut class_onehot = Array2::zeros((n, num_classes));
    for (i, input) in inputs.iter().enumerate() {
        for r in 0..ROI_SIZE {
            for c in 0..ROI_SIZE {
                for k in 0..channels {
                    roi[(i, k, r, c)] = T::from_f64(input.tensor.data[(r, c, k)]);
                }
            }
        }
        for j in 0..3 {
            p_m[(i, j)] = T::from_f64(input.p_m[j]);
            d_prior[(i, j)] = T::from_f64(input.d_prior[j]);
        }
        for (j, &v) in input.class_onehot.iter().enumerate() {
            class_onehot[(i, j)] = T::from_f64(v);
        }
    }
    BatchInputs {
        roi,
        p_m,
        d_prior,
        class_onehot,
    }
}

/// A lifted detection as a 16-field KITTI record. The 2D box is the input
/// detection's; alpha derives from yaw and position.
pub fn lifted_to_label(
    det: &Detection2D,
    lifted: &LiftedDetection,
    class_names: &[String],
) -> LabelRecord {
    let b = &lifted.box3d;
    LabelRecord {
        type_name: class_names
            .get(lifted.class_id)
            .cloned()
            .unwrap_or_else(|| format!("Class{}", lifted.class_id)),
        truncated: 0.0,
        occluded: 0,
        alpha: wrap_angle(b.yaw - b.center[0].atan2(b.center[2])),
        bbox: [det.box2d.u1, det.box2d.v1, det.box2d.u2, det.box2d.v2],
        dims: b.dims,
        location: b.center,
        rotation_y: b.yaw,
        score: Some(lifted.score),
    }
}

/// Streams training batches from a dataset directory, rebuilding samples
/// every epoch so the jitter augmentation stays online.
pub struct SceneBatchSource {
    index: DatasetIndex,
    class_names: Vec<String>,
    priors: ClassPriors,
    bins: OrientationBins,
    augment: Option<AugmentConfig>,
    num_samples: usize,
}

impl SceneBatchSource {
    pub fn new(
        index: DatasetIndex,
        class_names: Vec<String>,
        priors: ClassPriors,
        bins: OrientationBins,
        augment: Option<AugmentConfig>,
    ) -> Result<Self> {
        let mut num_samples = 0usize;
        for frame in &index.frames {
            let labels = crate::evalkit::read_label_file(&frame.label_path)?;
            num_samples += detections_from_labels(&labels, &class_names).len();
        }
        Ok(Self {
            index,
            class_names,
            priors,
            bins,
            augment,
            num_samples,
        })
    }

    fn frame_samples(
        &self,
        entry: &FrameEntry,
        frame_seed: u64,
    ) -> Result<Vec<(ModelInput, TargetVector)>> {
        let frame = load_frame(entry, &self.index, self.class_names.len())?;
        let mut rng = ChaCha8Rng::seed_from_u64(frame_seed);
        let mut samples = Vec::new();
        for (det, gt) in detections_from_labels(&frame.labels, &self.class_names) {
            let roi = match &self.augment {
                Some(cfg) => {
                    let jittered = jitter_box(
                        &det.box2d,
                        frame.intrinsics.width,
                        frame.intrinsics.height,
                        cfg,
                        &mut rng,
                    );
                    Detection2D::new(det.class_id, det.score, jittered)?
                }
                None => det,
            };
            match build_sample(
                &frame.cloud,
                &frame.semantic,
                &roi,
                &self.priors,
                &self.bins,
                self.class_names.len(),
                Some(&gt),
            ) {
                Ok((input, Some(target))) => samples.push((input, target)),
                Ok((_, None)) => unreachable!("gt provided"),
                // jitter can push an ROI onto a depth hole; skip the sample
                Err(Error::EmptyRoi) => continue,
                Err(e) => return Err(e),
            }
        }
        Ok(samples)
    }
}

impl<T: Scalar> BatchSource<T> for SceneBatchSource {
    fn num_samples(&self) -> usize {
        self.num_samples
    }

    fn batches_for_epoch(
        &mut self,
        _epoch: usize,
        batch_size: usize,
        rng: &mut ChaCha8Rng,
    ) -> Box<dyn Iterator<Item = Result<TrainBatch<T>>> + '_> {
        let mut order: Vec<usize> = (0..self.index.frames.len()).collect();
        order.shuffle(rng);
        let frame_seeds: Vec<u64> = order.iter().map(|_| rng.random()).collect();
        Box::new(SceneBatchIter::<T> {
            source: self,
            order,
            frame_seeds,
            next_frame: 0,
            pending: Vec::new(),
            batch_size: batch_size.max(1),
            failed: false,
            _scalar: std::marker::PhantomData,
        })
    }
}

struct SceneBatchIter<'a, T> {
    source: &'a SceneBatchSource,
    order: Vec<usize>,
    frame_seeds: Vec<u64>,
    next_frame: usize,
    pending: Vec<(ModelInput, TargetVector)>,
    batch_size: usize,
    failed: bool,
    _scalar: std::marker::PhantomData<T>,
}

impl<'a, T> SceneBatchIter<'a, T> {
    fn fill(&mut self) -> Result<()> {
        while self.pending.len() < self.batch_size && self.next_frame < self.order.len() {
            let fi = self.order[self.next_frame];
            let seed = self.frame_seeds[self.next_frame];
            self.next_frame += 1;
            let entry = &self.source.index.frames[fi];
            let mut samples = self.source.frame_samples(entry, seed)?;
            self.pending.append(&mut samples);
        }
        Ok(())
    }
}

impl<'a, T: Scalar> Iterator for SceneBatchIter<'a, T> {
    type Item = Result<TrainBatch<T>>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.failed {
            return None;
        }
        if let Err(e) = self.fill() {
            self.failed = true;
            return Some(Err(e));
        }
        if self.pending.is_empty() {
            return None;
        }
        let take = self.batch_size.min(self.pending.len());
        let chunk: Vec<(ModelInput, TargetVector)> = self.pending.drain(0..take).collect();
        Some(Ok(batch_from_samples(&chunk)))
    }
}

/// Targets assembled without jitter for a whole frame, paired with each
/// ground-truth box. Used by evaluation-style probes.
pub fn frame_eval_samples(
    frame: &LoadedFrame,
    class_names: &[String],
    priors: &ClassPriors,
    bins: &OrientationBins,
) -> Result<Vec<(Detection2D, Box3D, ModelInput, TargetVector)>> {
    let mut out = Vec::new();
    for (det, gt) in detections_from_labels(&frame.labels, class_names) {
        match build_sample(
            &frame.cloud,
            &frame.semantic,
            &det,
            priors,
            bins,
            class_names.len(),
            Some(&gt),
        ) {
            Ok((input, Some(target))) => out.push((det, gt, input, target)),
            Ok((_, None)) => unreachable!("gt provided"),
            Err(Error::EmptyRoi) => continue,
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}
