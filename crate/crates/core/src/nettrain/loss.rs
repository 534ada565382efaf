//! The multi-task loss: smooth-L1 regression terms for location, dimension,
//! and orientation residual, plus softmax cross-entropy for the bin, combined
//! with per-term weights.

use ndarray::{Array1, Array2};

use super::net::{LiftNetOutputs, OutputGrads};
use super::scalar::Scalar;
use crate::error::{Error, Result};

/// Per-term weights of the total loss. The reference setting is all ones.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
    pub lambda4: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda1: 1.0,
            lambda2: 1.0,
            lambda3: 1.0,
            lambda4: 1.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if self.lambda1 < 0.0 || self.lambda2 < 0.0 || self.lambda3 < 0.0 || self.lambda4 < 0.0 {
            return Err(Error::Config("loss weights must be non-negative".into()));
        }
        Ok(())
    }
}

/// Batch reduction: mean keeps loss magnitude independent of batch size,
/// sum exposes the raw per-sample additivity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Reduction {
    #[default]
    Mean,
    Sum,
}

impl Reduction {
    fn scale(self, n: usize) -> f64 {
        match self {
            Reduction::Mean => 1.0 / n.max(1) as f64,
            Reduction::Sum => 1.0,
        }
    }
}

/// Ground-truth targets for one batch.
#[derive(Debug, Clone)]
pub struct BatchTargets<T> {
    /// `(n, 3)`
    pub delta_p: Array2<T>,
    /// `(n, 3)`
    pub delta_d: Array2<T>,
    /// Ground-truth bin index per sample.
    pub bins: Vec<usize>,
    /// `(n,)` residual angle at the ground-truth bin.
    pub theta_reg: Array1<T>,
}

/// Per-term loss values plus their weighted total.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub loc: f64,
    pub dim: f64,
    pub theta: f64,
    pub cls: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn is_finite(&self) -> bool {
        self.total.is_finite()
    }
}

fn huber(x: f64) -> f64 {
    let a = x.abs();
    if a < 1.0 {
        0.5 * x * x
    } else {
        a - 0.5
    }
}

fn huber_grad(x: f64) -> f64 {
    if x.abs() < 1.0 {
        x
    } else {
        x.signum()
    }
}

/// Smooth-L1 loss: per component `0.5 x^2` for `|x| < 1` else `|x| - 0.5`,
/// summed over components and reduced over the batch.
pub fn smooth_l1<T: Scalar>(pred: &Array2<T>, target: &Array2<T>, reduction: Reduction) -> Result<f64> {
    if pred.dim() != target.dim() {
        return Err(Error::Config(format!(
            "smooth_l1 shapes {:?} vs {:?}",
            pred.dim(),
            target.dim()
        )));
    }
    let mut acc = 0.0;
    for (p, t) in pred.iter().zip(target.iter()) {
        acc += huber(p.as_f64() - t.as_f64());
    }
    Ok(acc * reduction.scale(pred.nrows()))
}

/// Numerically stable softmax cross-entropy against one-hot bin targets.
pub fn softmax_cross_entropy<T: Scalar>(
    logits: &Array2<T>,
    bins: &[usize],
    reduction: Reduction,
) -> Result<f64> {
    let (n, b) = logits.dim();
    if bins.len() != n {
        return Err(Error::Config(format!(
            "{} bin targets for batch of {n}",
            bins.len()
        )));
    }
    let mut acc = 0.0;
    for (i, &bin) in bins.iter().enumerate() {
        if bin >= b {
            return Err(Error::IndexOutOfRange(format!("bin {bin} with {b} bins")));
        }
        let row: Vec<f64> = (0..b).map(|j| logits[(i, j)].as_f64()).collect();
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        acc += lse - row[bin];
    }
    Ok(acc * reduction.scale(n))
}

/// Softmax probabilities of one logits row, in f64.
pub fn softmax_row<T: Scalar>(logits: &Array2<T>, i: usize) -> Vec<f64> {
    let b = logits.ncols();
    let row: Vec<f64> = (0..b).map(|j| logits[(i, j)].as_f64()).collect();
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = row.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// The weighted multi-task total with its per-term breakdown.
///
/// The orientation regression term reads only the residual at the
/// ground-truth bin of each sample.
pub fn total_loss<T: Scalar>(
    outputs: &LiftNetOutputs<T>,
    targets: &BatchTargets<T>,
    weights: &LossWeights,
    reduction: Reduction,
) -> Result<LossBreakdown> {
    weights.validate()?;
    let n = outputs.delta_p.nrows();
    if targets.delta_p.nrows() != n || targets.bins.len() != n || targets.theta_reg.len() != n {
        return Err(Error::Config(format!(
            "target batch {} vs output batch {n}",
            targets.delta_p.nrows()
        )));
    }
    let loc = smooth_l1(&outputs.delta_p, &targets.delta_p, reduction)?;
    let dim = smooth_l1(&outputs.delta_d, &targets.delta_d, reduction)?;
    let mut theta = 0.0;
    for i in 0..n {
        let bin = targets.bins[i];
        if bin >= outputs.theta_reg.ncols() {
            return Err(Error::IndexOutOfRange(format!(
                "bin {bin} with {} bins",
                outputs.theta_reg.ncols()
            )));
        }
        theta += huber(outputs.theta_reg[(i, bin)].as_f64() - targets.theta_reg[i].as_f64());
    }
    theta *= reduction.scale(n);
    let cls = softmax_cross_entropy(&outputs.bin_logits, &targets.bins, reduction)?;
    let total =
        weights.lambda1 * loc + weights.lambda2 * dim + weights.lambda3 * theta + weights.lambda4 * cls;
    Ok(LossBreakdown {
        loc,
        dim,
        theta,
        cls,
        total,
    })
}

/// Gradients of [`total_loss`] with respect to each network output.
pub fn total_loss_grads<T: Scalar>(
    outputs: &LiftNetOutputs<T>,
    targets: &BatchTargets<T>,
    weights: &LossWeights,
    reduction: Reduction,
) -> Result<OutputGrads<T>> {
    let n = outputs.delta_p.nrows();
    if targets.delta_p.nrows() != n || targets.bins.len() != n || targets.theta_reg.len() != n {
        return Err(Error::Config(format!(
            "target batch {} vs output batch {n}",
            targets.delta_p.nrows()
        )));
    }
    let scale = reduction.scale(n);
    let b = outputs.bin_logits.ncols();

    let mut g_p = Array2::zeros((n, 3));
    let mut g_d = Array2::zeros((n, 3));
    for i in 0..n {
        for j in 0..3 {
            g_p[(i, j)] = T::from_f64(
                weights.lambda1
                    * scale
                    * huber_grad(outputs.delta_p[(i, j)].as_f64() - targets.delta_p[(i, j)].as_f64()),
            );
            g_d[(i, j)] = T::from_f64(
                weights.lambda2
                    * scale
                    * huber_grad(outputs.delta_d[(i, j)].as_f64() - targets.delta_d[(i, j)].as_f64()),
            );
        }
    }

    let mut g_theta = Array2::zeros((n, b));
    for i in 0..n {
        let bin = targets.bins[i];
        g_theta[(i, bin)] = T::from_f64(
            weights.lambda3
                * scale
                * huber_grad(outputs.theta_reg[(i, bin)].as_f64() - targets.theta_reg[i].as_f64()),
        );
    }

    let mut g_logits = Array2::zeros((n, b));
    for i in 0..n {
        let probs = softmax_row(&outputs.bin_logits, i);
        for j in 0..b {
            let onehot = if j == targets.bins[i] { 1.0 } else { 0.0 };
            g_logits[(i, j)] = T::from_f64(weights.lambda4 * scale * (probs[j] - onehot));
        }
    }

    Ok(OutputGrads {
        delta_p: g_p,
        delta_d: g_d,
        bin_logits: g_logits,
        theta_reg: g_theta,
    })
}
