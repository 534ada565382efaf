//! Adaptive-moment gradient descent with global-norm gradient clipping.

use super::net::LiftNet;
use super::scalar::Scalar;

/// Optimizer hyperparameters. Defaults follow the training setup:
/// lr 1e-3, batch 32, clip at global norm 10.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub grad_clip_norm: f64,
    pub batch_size: usize,
}

impl Default for OptimConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            grad_clip_norm: 10.0,
            batch_size: 32,
        }
    }
}

/// Adam state: first and second moment buffers per parameter tensor.
#[derive(Debug, Clone)]
pub struct Adam {
    cfg: OptimConfig,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(cfg: OptimConfig) -> Self {
        Self {
            cfg,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn config(&self) -> &OptimConfig {
        &self.cfg
    }

    /// Clip gradients to the configured global norm, then apply one Adam
    /// update. Moments are kept in f64 regardless of the net precision.
    pub fn step<T: Scalar>(&mut self, net: &mut LiftNet<T>) {
        let mut params = net.params_mut();
        if self.m.is_empty() {
            self.m = params.iter().map(|p| vec![0.0; p.data.len()]).collect();
            self.v = params.iter().map(|p| vec![0.0; p.data.len()]).collect();
        }
        debug_assert_eq!(self.m.len(), params.len());

        let mut sq_norm = 0.0;
        for p in params.iter() {
            for g in p.grad.iter() {
                let g = g.as_f64();
                sq_norm += g * g;
            }
        }
        let norm = sq_norm.sqrt();
        let clip = if self.cfg.grad_clip_norm > 0.0 && norm > self.cfg.grad_clip_norm {
            self.cfg.grad_clip_norm / norm
        } else {
            1.0
        };

        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.cfg.beta1.powi(t);
        let bc2 = 1.0 - self.cfg.beta2.powi(t);
        for (pi, p) in params.iter_mut().enumerate() {
            let m = &mut self.m[pi];
            let v = &mut self.v[pi];
            for (j, (w, g)) in p.data.iter_mut().zip(p.grad.iter()).enumerate() {
                let g = g.as_f64() * clip;
                m[j] = self.cfg.beta1 * m[j] + (1.0 - self.cfg.beta1) * g;
                v[j] = self.cfg.beta2 * v[j] + (1.0 - self.cfg.beta2) * g * g;
                let m_hat = m[j] / bc1;
                let v_hat = v[j] / bc2;
                let delta = self.cfg.learning_rate * m_hat / (v_hat.sqrt() + self.cfg.epsilon);
                *w = T::from_f64(w.as_f64() - delta);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nettrain::net::{BatchInputs, LiftNetConfig};
    use crate::nettrain::scalar::Precision;
    use crate::roipipe::ROI_SIZE;
    use ndarray::{Array2, Array4};

    fn mini_net() -> LiftNet<f64> {
        let cfg = LiftNetConfig {
            input_channels: 4,
            stage_channels: vec![4],
            blocks_per_stage: 1,
            mlp_hidden: 8,
            num_classes: 1,
            bins: 2,
            precision: Precision::F64,
        };
        LiftNet::new(&cfg, 3).unwrap()
    }

    #[test]
    fn adam_moves_parameters_against_gradient() {
        let mut net = mini_net();
        let before: Vec<f64> = net.params().iter().flat_map(|p| p.data.to_vec()).collect();
        for p in net.params_mut() {
            p.grad.fill(1.0);
        }
        let mut adam = Adam::new(OptimConfig::default());
        adam.step(&mut net);
        let after: Vec<f64> = net.params().iter().flat_map(|p| p.data.to_vec()).collect();
        for (b, a) in before.iter().zip(after.iter()) {
            assert!(a < b, "positive gradient must decrease the parameter");
        }
    }

    #[test]
    fn clipping_bounds_the_update_direction() {
        let mut net = mini_net();
        for p in net.params_mut() {
            p.grad.fill(1e6);
        }
        let cfg = OptimConfig {
            grad_clip_norm: 1.0,
            ..Default::default()
        };
        let mut adam = Adam::new(cfg);
        // after clipping, first-step update magnitude is lr per coordinate at most
        let before: Vec<f64> = net.params().iter().flat_map(|p| p.data.to_vec()).collect();
        adam.step(&mut net);
        let after: Vec<f64> = net.params().iter().flat_map(|p| p.data.to_vec()).collect();
        for (b, a) in before.iter().zip(after.iter()) {
            assert!((a - b).abs() <= 1.1e-3);
        }
    }

    #[test]
    fn forward_unaffected_by_zero_step() {
        // a net that never steps equals itself
        let net = mini_net();
        let batch = BatchInputs {
            roi: Array4::from_elem((1, 4, ROI_SIZE, ROI_SIZE), 0.5),
            p_m: Array2::from_elem((1, 3), 1.0),
            d_prior: Array2::from_elem((1, 3), 1.0),
            class_onehot: Array2::from_elem((1, 1), 1.0),
        };
        let (a, _) = net.forward(&batch).unwrap();
        let (b, _) = net.forward(&batch).unwrap();
        assert_eq!(a.delta_p, b.delta_p);
    }
}
