//! The optimizer loop over a batch source.
//!
//! Training mutates the network and runs strictly serially over batches;
//! batch assembly may parallelize internally as long as emitted batches are
//! deterministic for a given seed.

use ndarray::{Array1, Array2, Array4};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::loss::{total_loss, total_loss_grads, BatchTargets, LossBreakdown, LossWeights, Reduction};
use super::net::{BatchInputs, LiftNet};
use super::optim::{Adam, OptimConfig};
use super::scalar::Scalar;
use crate::encoding::TargetVector;
use crate::error::{Error, Result};
use crate::roipipe::{ModelInput, ROI_SIZE};

/// One training batch: inputs plus targets.
pub struct TrainBatch<T> {
    pub inputs: BatchInputs<T>,
    pub targets: BatchTargets<T>,
}

/// Yields batches once per epoch. Implementations own shuffling and any
/// on-the-fly augmentation, driven only by the rng handed in.
pub trait BatchSource<T: Scalar> {
    fn num_samples(&self) -> usize;

    fn batches_for_epoch(
        &mut self,
        epoch: usize,
        batch_size: usize,
        rng: &mut ChaCha8Rng,
    ) -> Box<dyn Iterator<Item = Result<TrainBatch<T>>> + '_>;
}

/// Convert assembled samples into batch tensors (HWC tensor to NCHW).
pub fn batch_from_samples<T: Scalar>(samples: &[(ModelInput, TargetVector)]) -> TrainBatch<T> {
    let n = samples.len();
    let channels = samples
        .first()
        .map(|(m, _)| m.tensor.channels())
        .unwrap_or(0);
    let num_classes = samples
        .first()
        .map(|(m, _)| m.class_onehot.len())
        .unwrap_or(0);
    let bins = samples.first().map(|(_, t)| t.bin_onehot.len()).unwrap_or(0);
    let mut roi = Array4::zeros((n, channels, ROI_SIZE, ROI_SIZE));
    let mut p_m = Array2::zeros((n, 3));
    let mut d_prior = Array2::zeros((n, 3));
    let mut class_onehot = Array2::zeros((n, num_classes));
    let mut delta_p = Array2::zeros((n, 3));
    let mut delta_d = Array2::zeros((n, 3));
    let mut bin_targets = Vec::with_capacity(n);
    let mut theta_reg = Array1::zeros(n);
    let _ = bins;
    for (i, (input, target)) in samples.iter().enumerate() {
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
            delta_p[(i, j)] = T::from_f64(target.delta_p[j]);
            delta_d[(i, j)] = T::from_f64(target.delta_d[j]);
        }
        for (j, &v) in input.class_onehot.iter().enumerate() {
            class_onehot[(i, j)] = T::from_f64(v);
        }
        bin_targets.push(target.bin);
        theta_reg[i] = T::from_f64(target.theta_reg);
    }
    TrainBatch {
        inputs: BatchInputs {
            roi,
            p_m,
            d_prior,
            class_onehot,
        },
        targets: BatchTargets {
            delta_p,
            delta_d,
            bins: bin_targets,
            theta_reg,
        },
    }
}

/// A fully materialized dataset, shuffled per epoch.
pub struct InMemoryDataset {
    pub samples: Vec<(ModelInput, TargetVector)>,
}

impl<T: Scalar> BatchSource<T> for InMemoryDataset {
    fn num_samples(&self) -> usize {
        self.samples.len()
    }

    fn batches_for_epoch(
        &mut self,
        _epoch: usize,
        batch_size: usize,
        rng: &mut ChaCha8Rng,
    ) -> Box<dyn Iterator<Item = Result<TrainBatch<T>>> + '_> {
        let mut order: Vec<usize> = (0..self.samples.len()).collect();
        order.shuffle(rng);
        let samples = &self.samples;
        let batches: Vec<Vec<usize>> = order
            .chunks(batch_size.max(1))
            .map(|c| c.to_vec())
            .collect();
        Box::new(batches.into_iter().map(move |chunk| {
            let subset: Vec<(ModelInput, TargetVector)> =
                chunk.iter().map(|&i| samples[i].clone()).collect();
            Ok(batch_from_samples(&subset))
        }))
    }
}

/// Per-step loss breakdowns for the whole run.
#[derive(Debug, Clone, Default)]
pub struct TrainHistory {
    pub steps: Vec<LossBreakdown>,
}

impl TrainHistory {
    pub fn final_total(&self) -> Option<f64> {
        self.steps.last().map(|b| b.total)
    }

    pub fn initial_total(&self) -> Option<f64> {
        self.steps.first().map(|b| b.total)
    }
}

/// Run `epochs` of Adam over the source. Deterministic given the seed: the
/// epoch rng streams are derived from it, and every reduction is ordered.
pub fn train<T: Scalar>(
    net: &mut LiftNet<T>,
    source: &mut dyn BatchSource<T>,
    optim: &OptimConfig,
    weights: &LossWeights,
    epochs: usize,
    seed: u64,
) -> Result<TrainHistory> {
    if source.num_samples() == 0 {
        return Err(Error::Config("empty training dataset".into()));
    }
    weights.validate()?;
    let mut adam = Adam::new(*optim);
    let mut history = TrainHistory::default();
    let mut step = 0usize;
    for epoch in 0..epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (epoch as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
        let batches = source.batches_for_epoch(epoch, optim.batch_size, &mut rng);
        for batch in batches {
            let batch = batch?;
            if batch.inputs.is_empty() {
                continue;
            }
            let (outputs, cache) = net.forward(&batch.inputs)?;
            let breakdown = total_loss(&outputs, &batch.targets, weights, Reduction::Mean)?;
            if !breakdown.is_finite() {
                return Err(Error::TrainingDiverged { step });
            }
            let grads = total_loss_grads(&outputs, &batch.targets, weights, Reduction::Mean)?;
            net.zero_grads();
            net.backward(&cache, &grads);
            adam.step(net);
            history.steps.push(breakdown);
            step += 1;
        }
    }
    Ok(history)
}
