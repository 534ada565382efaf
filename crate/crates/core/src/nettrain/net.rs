//! The lifting network: a batch-norm-free residual backbone over the ROI
//! tensor, global average pooling, and three MLP branches for location,
//! dimension, and orientation outputs.
//!
//! The backbone input mixes one-hot semantic channels with metric xyz
//! channels at wildly different scales; the network carries no normalization
//! layers at all, so training works directly on those raw scales.

use ndarray::{s, Array2, Array4};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::layers::{
    global_avg_pool, global_avg_pool_backward, relu2, relu4, relu_backward2, relu_backward4,
    Conv2d, Dense,
};
use super::scalar::{Precision, Scalar};
use crate::error::{Error, Result};
use crate::roipipe::ROI_SIZE;

/// Architecture parameters. The defaults give the desk-scale backbone:
/// 7x7 stride-2 stem, three stages of two residual blocks, global pooling.
#[derive(Debug, Clone, PartialEq)]
pub struct LiftNetConfig {
    /// C + 3 input channels.
    pub input_channels: usize,
    pub stage_channels: Vec<usize>,
    pub blocks_per_stage: usize,
    pub mlp_hidden: usize,
    pub num_classes: usize,
    /// Orientation bin count B.
    pub bins: usize,
    pub precision: Precision,
}

impl LiftNetConfig {
    pub fn new(num_classes: usize, semantic_classes: usize) -> Self {
        Self {
            input_channels: semantic_classes + 3,
            stage_channels: vec![16, 32, 64],
            blocks_per_stage: 2,
            mlp_hidden: 256,
            num_classes,
            bins: 2,
            precision: Precision::F32,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_channels < 1
            || self.stage_channels.is_empty()
            || self.stage_channels.iter().any(|&c| c < 1)
            || self.blocks_per_stage < 1
            || self.mlp_hidden < 1
            || self.num_classes < 1
            || self.bins < 2
        {
            return Err(Error::Config(format!("invalid network config {self:?}")));
        }
        Ok(())
    }

    /// Feature width entering the MLP branches.
    pub fn feature_len(&self) -> usize {
        self.stage_channels.last().copied().unwrap_or(0) + 6 + self.num_classes
    }
}

/// One pre-activation-free residual block: conv-relu-conv plus a skip
/// (1x1 conv when shape changes), relu after the sum.
#[derive(Debug, Clone)]
pub struct ResBlock<T> {
    pub conv1: Conv2d<T>,
    pub conv2: Conv2d<T>,
    pub skip: Option<Conv2d<T>>,
}

impl<T: Scalar> ResBlock<T> {
    fn new(c_in: usize, c_out: usize, stride: usize, rng: &mut ChaCha8Rng) -> Self {
        let conv1 = Conv2d::new(c_in, c_out, 3, stride, 1, rng);
        let conv2 = Conv2d::new(c_out, c_out, 3, 1, 1, rng);
        let skip = if c_in != c_out || stride != 1 {
            Some(Conv2d::new(c_in, c_out, 1, stride, 0, rng))
        } else {
            None
        };
        Self { conv1, conv2, skip }
    }
}

/// Sample-independent inputs for one batch: the ROI tensor in NCHW layout
/// plus the three auxiliary vectors of the four-input design.
#[derive(Debug, Clone)]
pub struct BatchInputs<T> {
    /// `(n, C+3, 64, 64)`
    pub roi: Array4<T>,
    /// `(n, 3)` central-pixel priors.
    pub p_m: Array2<T>,
    /// `(n, 3)` class dimension priors.
    pub d_prior: Array2<T>,
    /// `(n, num_classes)` class one-hots.
    pub class_onehot: Array2<T>,
}

impl<T: Scalar> BatchInputs<T> {
    pub fn len(&self) -> usize {
        self.roi.dim().0
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Batch outputs of the three branches.
#[derive(Debug, Clone)]
pub struct LiftNetOutputs<T> {
    /// `(n, 3)` location deviation estimates, meters.
    pub delta_p: Array2<T>,
    /// `(n, 3)` dimension deviation estimates, meters.
    pub delta_d: Array2<T>,
    /// `(n, B)` orientation bin logits.
    pub bin_logits: Array2<T>,
    /// `(n, B)` per-bin residual angles; the target or argmax bin is read.
    pub theta_reg: Array2<T>,
}

/// Gradients flowing back to the network inputs.
#[derive(Debug, Clone)]
pub struct InputGrads<T> {
    pub roi: Array4<T>,
    pub p_m: Array2<T>,
    pub d_prior: Array2<T>,
    pub class_onehot: Array2<T>,
}

/// Upstream gradients for [`LiftNet::backward`], one per output head.
#[derive(Debug, Clone)]
pub struct OutputGrads<T> {
    pub delta_p: Array2<T>,
    pub delta_d: Array2<T>,
    pub bin_logits: Array2<T>,
    pub theta_reg: Array2<T>,
}

#[derive(Debug, Clone)]
struct BlockCache<T> {
    input: Array4<T>,
    act1: Array4<T>,
    out: Array4<T>,
}

#[derive(Debug, Clone)]
struct HeadCache<T> {
    hidden: Array2<T>,
}

/// Cached activations of one forward pass, consumed by [`LiftNet::backward`].
#[derive(Debug, Clone)]
pub struct ForwardCache<T> {
    input: Array4<T>,
    stem_out: Array4<T>,
    blocks: Vec<BlockCache<T>>,
    pool_in_dim: (usize, usize, usize, usize),
    features: Array2<T>,
    heads: [HeadCache<T>; 3],
}

/// A head: dense-relu-dense.
#[derive(Debug, Clone)]
pub struct Mlp<T> {
    pub fc1: Dense<T>,
    pub fc2: Dense<T>,
}

impl<T: Scalar> Mlp<T> {
    fn new(in_features: usize, hidden: usize, out_features: usize, rng: &mut ChaCha8Rng) -> Self {
        Self {
            fc1: Dense::new(in_features, hidden, rng),
            fc2: Dense::new(hidden, out_features, rng),
        }
    }

    fn forward(&self, x: &Array2<T>) -> (Array2<T>, HeadCache<T>) {
        let hidden = relu2(&self.fc1.forward(x));
        let out = self.fc2.forward(&hidden);
        (out, HeadCache { hidden })
    }

    fn backward(&mut self, x: &Array2<T>, cache: &HeadCache<T>, grad: &Array2<T>) -> Array2<T> {
        let gh = self.fc2.backward(&cache.hidden, grad);
        let gh = relu_backward2(&cache.hidden, &gh);
        self.fc1.backward(x, &gh)
    }
}

/// Layer kinds exposed for structural checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerKind {
    Convolution,
    Dense,
}

/// The lifting network with parameter and gradient storage.
#[derive(Debug, Clone)]
pub struct LiftNet<T> {
    pub config: LiftNetConfig,
    stem: Conv2d<T>,
    stages: Vec<Vec<ResBlock<T>>>,
    head_loc: Mlp<T>,
    head_dim: Mlp<T>,
    head_orient: Mlp<T>,
}

impl<T: Scalar> LiftNet<T> {
    /// Build a freshly initialized network. Parameter draws depend only on
    /// `seed` and the config, in declaration order.
    pub fn new(config: &LiftNetConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        if config.precision != T::PRECISION {
            return Err(Error::Config(format!(
                "config precision {} does not match scalar type {}",
                config.precision,
                T::PRECISION
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let stem = Conv2d::new(config.input_channels, config.stage_channels[0], 7, 2, 3, &mut rng);
        let mut stages = Vec::new();
        let mut c_prev = config.stage_channels[0];
        for (si, &c_out) in config.stage_channels.iter().enumerate() {
            let mut blocks = Vec::new();
            for bi in 0..config.blocks_per_stage {
                let stride = if si > 0 && bi == 0 { 2 } else { 1 };
                let c_in = if bi == 0 { c_prev } else { c_out };
                blocks.push(ResBlock::new(c_in, c_out, stride, &mut rng));
            }
            stages.push(blocks);
            c_prev = c_out;
        }
        let feat = config.feature_len();
        let head_loc = Mlp::new(feat, config.mlp_hidden, 3, &mut rng);
        let head_dim = Mlp::new(feat, config.mlp_hidden, 3, &mut rng);
        let head_orient = Mlp::new(feat, config.mlp_hidden, 2 * config.bins, &mut rng);
        Ok(Self {
            config: config.clone(),
            stem,
            stages,
            head_loc,
            head_dim,
            head_orient,
        })
    }

    /// Every layer in declaration order; the structural no-normalization check
    /// enumerates this.
    pub fn layer_inventory(&self) -> Vec<LayerKind> {
        let mut kinds = vec![LayerKind::Convolution]; // stem
        for stage in &self.stages {
            for block in stage {
                kinds.push(LayerKind::Convolution);
                kinds.push(LayerKind::Convolution);
                if block.skip.is_some() {
                    kinds.push(LayerKind::Convolution);
                }
            }
        }
        for _ in 0..3 {
            kinds.push(LayerKind::Dense);
            kinds.push(LayerKind::Dense);
        }
        kinds
    }

    fn check_batch(&self, batch: &BatchInputs<T>) -> Result<()> {
        let (n, c, h, w) = batch.roi.dim();
        let cfg = &self.config;
        if c != cfg.input_channels || h != ROI_SIZE || w != ROI_SIZE {
            return Err(Error::Config(format!(
                "roi batch ({n}, {c}, {h}, {w}) vs expected (_, {}, {ROI_SIZE}, {ROI_SIZE})",
                cfg.input_channels
            )));
        }
        if batch.p_m.dim() != (n, 3)
            || batch.d_prior.dim() != (n, 3)
            || batch.class_onehot.dim() != (n, cfg.num_classes)
        {
            return Err(Error::Config(format!(
                "auxiliary input shapes {:?}/{:?}/{:?} vs batch {n}",
                batch.p_m.dim(),
                batch.d_prior.dim(),
                batch.class_onehot.dim()
            )));
        }
        Ok(())
    }

    fn forward_block(block: &ResBlock<T>, x: &Array4<T>) -> BlockCache<T> {
        let act1 = relu4(&block.conv1.forward(x));
        let body = block.conv2.forward(&act1);
        let skip_out = match &block.skip {
            Some(k) => k.forward(x),
            None => x.clone(),
        };
        let out = relu4(&(body + &skip_out));
        BlockCache {
            input: x.clone(),
            act1,
            out,
        }
    }

    /// Run the network over a batch, returning outputs and the activation
    /// cache needed for backpropagation.
    pub fn forward(&self, batch: &BatchInputs<T>) -> Result<(LiftNetOutputs<T>, ForwardCache<T>)> {
        self.check_batch(batch)?;
        let n = batch.len();
        let stem_out = relu4(&self.stem.forward(&batch.roi));
        let mut blocks = Vec::new();
        let mut cur = stem_out.clone();
        for stage in &self.stages {
            for block in stage {
                let cache = Self::forward_block(block, &cur);
                cur = cache.out.clone();
                blocks.push(cache);
            }
        }
        let pool_in_dim = cur.dim();
        let pooled = global_avg_pool(&cur);
        let feat_len = self.config.feature_len();
        let mut features = Array2::zeros((n, feat_len));
        let c_last = pooled.ncols();
        features.slice_mut(s![.., 0..c_last]).assign(&pooled);
        features
            .slice_mut(s![.., c_last..c_last + 3])
            .assign(&batch.p_m);
        features
            .slice_mut(s![.., c_last + 3..c_last + 6])
            .assign(&batch.d_prior);
        features
            .slice_mut(s![.., c_last + 6..])
            .assign(&batch.class_onehot);

        let (delta_p, cache_loc) = self.head_loc.forward(&features);
        let (delta_d, cache_dim) = self.head_dim.forward(&features);
        let (orient, cache_orient) = self.head_orient.forward(&features);
        let b = self.config.bins;
        let bin_logits = orient.slice(s![.., 0..b]).to_owned();
        let theta_reg = orient.slice(s![.., b..2 * b]).to_owned();
        Ok((
            LiftNetOutputs {
                delta_p,
                delta_d,
                bin_logits,
                theta_reg,
            },
            ForwardCache {
                input: batch.roi.clone(),
                stem_out,
                blocks,
                pool_in_dim,
                features,
                heads: [cache_loc, cache_dim, cache_orient],
            },
        ))
    }

    fn backward_block(
        block: &mut ResBlock<T>,
        cache: &BlockCache<T>,
        grad: &Array4<T>,
    ) -> Array4<T> {
        let g_sum = relu_backward4(&cache.out, grad);
        let g_act1 = block.conv2.backward(&cache.act1, &g_sum);
        let g_conv1_out = relu_backward4(&cache.act1, &g_act1);
        let mut gx = block.conv1.backward(&cache.input, &g_conv1_out);
        match &mut block.skip {
            Some(k) => {
                let g_skip = k.backward(&cache.input, &g_sum);
                gx += &g_skip;
            }
            None => {
                gx += &g_sum;
            }
        }
        gx
    }

    /// Backpropagate head gradients through the whole network, accumulating
    /// parameter gradients and returning gradients of every input tensor.
    pub fn backward(&mut self, cache: &ForwardCache<T>, grads: &OutputGrads<T>) -> InputGrads<T> {
        let b = self.config.bins;
        let n = cache.features.nrows();
        let mut g_orient = Array2::zeros((n, 2 * b));
        g_orient
            .slice_mut(s![.., 0..b])
            .assign(&grads.bin_logits);
        g_orient
            .slice_mut(s![.., b..2 * b])
            .assign(&grads.theta_reg);

        let mut g_feat = self
            .head_loc
            .backward(&cache.features, &cache.heads[0], &grads.delta_p);
        g_feat += &self
            .head_dim
            .backward(&cache.features, &cache.heads[1], &grads.delta_d);
        g_feat += &self
            .head_orient
            .backward(&cache.features, &cache.heads[2], &g_orient);

        let c_last = *self.config.stage_channels.last().expect("stages");
        let g_pooled = g_feat.slice(s![.., 0..c_last]).to_owned();
        let g_p_m = g_feat.slice(s![.., c_last..c_last + 3]).to_owned();
        let g_d_prior = g_feat.slice(s![.., c_last + 3..c_last + 6]).to_owned();
        let g_onehot = g_feat.slice(s![.., c_last + 6..]).to_owned();

        let (pn, pc, ph, pw) = cache.pool_in_dim;
        let mut g_cur = global_avg_pool_backward(&g_pooled, pn, pc, ph, pw);

        let mut idx = cache.blocks.len();
        for stage in self.stages.iter_mut().rev() {
            for block in stage.iter_mut().rev() {
                idx -= 1;
                g_cur = Self::backward_block(block, &cache.blocks[idx], &g_cur);
            }
        }
        let g_stem_out = relu_backward4(&cache.stem_out, &g_cur);
        let g_input = self.stem.backward(&cache.input, &g_stem_out);
        InputGrads {
            roi: g_input,
            p_m: g_p_m,
            d_prior: g_d_prior,
            class_onehot: g_onehot,
        }
    }

    /// Clear all accumulated parameter gradients.
    pub fn zero_grads(&mut self) {
        for p in self.params_mut() {
            p.grad.fill(T::zero());
        }
    }

    /// Immutable parameter tensors in declaration order.
    pub fn params(&self) -> Vec<ParamRef<'_, T>> {
        let mut out = Vec::new();
        collect_conv(&self.stem, &mut out);
        for stage in &self.stages {
            for block in stage {
                collect_conv(&block.conv1, &mut out);
                collect_conv(&block.conv2, &mut out);
                if let Some(k) = &block.skip {
                    collect_conv(k, &mut out);
                }
            }
        }
        for head in [&self.head_loc, &self.head_dim, &self.head_orient] {
            collect_dense(&head.fc1, &mut out);
            collect_dense(&head.fc2, &mut out);
        }
        out
    }

    /// Mutable parameter/gradient pairs in declaration order.
    pub fn params_mut(&mut self) -> Vec<ParamMut<'_, T>> {
        let mut out = Vec::new();
        collect_conv_mut(&mut self.stem, &mut out);
        for stage in &mut self.stages {
            for block in stage {
                collect_conv_mut(&mut block.conv1, &mut out);
                collect_conv_mut(&mut block.conv2, &mut out);
                if let Some(k) = &mut block.skip {
                    collect_conv_mut(k, &mut out);
                }
            }
        }
        for head in [
            &mut self.head_loc,
            &mut self.head_dim,
            &mut self.head_orient,
        ] {
            collect_dense_mut(&mut head.fc1, &mut out);
            collect_dense_mut(&mut head.fc2, &mut out);
        }
        out
    }

    pub fn num_parameters(&self) -> usize {
        self.params().iter().map(|p| p.data.len()).sum()
    }

    /// Gradients of the orientation head's first dense layer; used to check
    /// that zero loss weight silences a branch.
    pub fn head_grad_norms(&self) -> [f64; 3] {
        let norm = |m: &Mlp<T>| -> f64 {
            m.fc1
                .grad_weight
                .iter()
                .chain(m.fc2.grad_weight.iter())
                .map(|&g| g.as_f64() * g.as_f64())
                .sum::<f64>()
                .sqrt()
        };
        [
            norm(&self.head_loc),
            norm(&self.head_dim),
            norm(&self.head_orient),
        ]
    }
}

/// Immutable view of one parameter tensor.
pub struct ParamRef<'a, T> {
    pub data: &'a [T],
    pub shape: Vec<usize>,
}

/// Mutable view of one parameter tensor and its gradient buffer.
pub struct ParamMut<'a, T> {
    pub data: &'a mut [T],
    pub grad: &'a mut [T],
}

fn collect_conv<'a, T: Scalar>(conv: &'a Conv2d<T>, out: &mut Vec<ParamRef<'a, T>>) {
    out.push(ParamRef {
        data: conv.weight.as_slice().expect("contiguous"),
        shape: conv.weight.shape().to_vec(),
    });
    out.push(ParamRef {
        data: conv.bias.as_slice().expect("contiguous"),
        shape: conv.bias.shape().to_vec(),
    });
}

fn collect_conv_mut<'a, T: Scalar>(conv: &'a mut Conv2d<T>, out: &mut Vec<ParamMut<'a, T>>) {
    let Conv2d {
        weight,
        bias,
        grad_weight,
        grad_bias,
        ..
    } = conv;
    out.push(ParamMut {
        data: weight.as_slice_mut().expect("contiguous"),
        grad: grad_weight.as_slice_mut().expect("contiguous"),
    });
    out.push(ParamMut {
        data: bias.as_slice_mut().expect("contiguous"),
        grad: grad_bias.as_slice_mut().expect("contiguous"),
    });
}

fn collect_dense<'a, T: Scalar>(dense: &'a Dense<T>, out: &mut Vec<ParamRef<'a, T>>) {
    out.push(ParamRef {
        data: dense.weight.as_slice().expect("contiguous"),
        shape: dense.weight.shape().to_vec(),
    });
    out.push(ParamRef {
        data: dense.bias.as_slice().expect("contiguous"),
        shape: dense.bias.shape().to_vec(),
    });
}

fn collect_dense_mut<'a, T: Scalar>(dense: &'a mut Dense<T>, out: &mut Vec<ParamMut<'a, T>>) {
    let Dense {
        weight,
        bias,
        grad_weight,
        grad_bias,
    } = dense;
    out.push(ParamMut {
        data: weight.as_slice_mut().expect("contiguous"),
        grad: grad_weight.as_slice_mut().expect("contiguous"),
    });
    out.push(ParamMut {
        data: bias.as_slice_mut().expect("contiguous"),
        grad: grad_bias.as_slice_mut().expect("contiguous"),
    });
}
