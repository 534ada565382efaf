//! Convolution and dense layers with explicit forward/backward passes.
//!
//! Convolutions run per sample (im2col + GEMM) and parallelize over the
//! batch; every cross-sample reduction is a serial fold in index order, so
//! results are bit-identical regardless of worker count.

use ndarray::{s, Array1, Array2, Array3, Array4, ArrayView3, Axis};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use super::scalar::Scalar;

/// 2D convolution with square-free kernel support, NCHW layout.
#[derive(Debug, Clone)]
pub struct Conv2d<T> {
    /// `(c_out, c_in * kh * kw)`
    pub weight: Array2<T>,
    pub bias: Array1<T>,
    pub grad_weight: Array2<T>,
    pub grad_bias: Array1<T>,
    pub c_in: usize,
    pub c_out: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
}

impl<T: Scalar> Conv2d<T> {
    /// Fan-in-scaled normal init: std = sqrt(2 / fan_in).
    pub fn new<R: Rng + ?Sized>(
        c_in: usize,
        c_out: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
        rng: &mut R,
    ) -> Self {
        let fan_in = c_in * kernel * kernel;
        let dist = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("valid normal");
        let weight =
            Array2::from_shape_fn((c_out, fan_in), |_| T::from_f64(dist.sample(rng)));
        Self {
            weight,
            bias: Array1::zeros(c_out),
            grad_weight: Array2::zeros((c_out, fan_in)),
            grad_bias: Array1::zeros(c_out),
            c_in,
            c_out,
            kernel,
            stride,
            pad,
        }
    }

    pub fn out_hw(&self, h: usize, w: usize) -> (usize, usize) {
        (
            (h + 2 * self.pad - self.kernel) / self.stride + 1,
            (w + 2 * self.pad - self.kernel) / self.stride + 1,
        )
    }

    fn im2col(&self, x: &ArrayView3<T>) -> Array2<T> {
        let (c_in, h, w) = x.dim();
        let (oh, ow) = self.out_hw(h, w);
        let k = self.kernel;
        let mut cols = Array2::zeros((c_in * k * k, oh * ow));
        for c in 0..c_in {
            for ki in 0..k {
                for kj in 0..k {
                    let row = (c * k + ki) * k + kj;
                    for oi in 0..oh {
                        let ii = (oi * self.stride + ki) as isize - self.pad as isize;
                        if ii < 0 || ii >= h as isize {
                            continue;
                        }
                        for oj in 0..ow {
                            let jj = (oj * self.stride + kj) as isize - self.pad as isize;
                            if jj < 0 || jj >= w as isize {
                                continue;
                            }
                            cols[(row, oi * ow + oj)] = x[(c, ii as usize, jj as usize)];
                        }
                    }
                }
            }
        }
        cols
    }

    fn col2im(&self, cols: &Array2<T>, h: usize, w: usize) -> Array3<T> {
        let (oh, ow) = self.out_hw(h, w);
        let k = self.kernel;
        let mut x = Array3::zeros((self.c_in, h, w));
        for c in 0..self.c_in {
            for ki in 0..k {
                for kj in 0..k {
                    let row = (c * k + ki) * k + kj;
                    for oi in 0..oh {
                        let ii = (oi * self.stride + ki) as isize - self.pad as isize;
                        if ii < 0 || ii >= h as isize {
                            continue;
                        }
                        for oj in 0..ow {
                            let jj = (oj * self.stride + kj) as isize - self.pad as isize;
                            if jj < 0 || jj >= w as isize {
                                continue;
                            }
                            x[(c, ii as usize, jj as usize)] += cols[(row, oi * ow + oj)];
                        }
                    }
                }
            }
        }
        x
    }

    fn forward_one(&self, x: &ArrayView3<T>) -> Array3<T> {
        let (_, h, w) = x.dim();
        let (oh, ow) = self.out_hw(h, w);
        let cols = self.im2col(x);
        let mut out = self.weight.dot(&cols); // (c_out, oh*ow)
        for (mut row, &b) in out.axis_iter_mut(Axis(0)).zip(self.bias.iter()) {
            row.mapv_inplace(|v| v + b);
        }
        out.into_shape_with_order((self.c_out, oh, ow))
            .expect("conv output reshape")
    }

    /// Batch forward, parallel over samples.
    pub fn forward(&self, x: &Array4<T>) -> Array4<T> {
        let (n, _, h, w) = x.dim();
        let (oh, ow) = self.out_hw(h, w);
        let per: Vec<Array3<T>> = (0..n)
            .into_par_iter()
            .map(|i| self.forward_one(&x.index_axis(Axis(0), i)))
            .collect();
        let mut out = Array4::zeros((n, self.c_out, oh, ow));
        for (i, o) in per.into_iter().enumerate() {
            out.slice_mut(s![i, .., .., ..]).assign(&o);
        }
        out
    }

    /// Batch backward. Accumulates weight/bias gradients (serially, in sample
    /// order) and returns the gradient with respect to the input.
    pub fn backward(&mut self, x: &Array4<T>, grad_out: &Array4<T>) -> Array4<T> {
        let (n, _, h, w) = x.dim();
        let (_, c_out, oh, ow) = grad_out.dim();
        debug_assert_eq!(c_out, self.c_out);
        let per: Vec<(Array3<T>, Array2<T>, Array1<T>)> = (0..n)
            .into_par_iter()
            .map(|i| {
                let xi = x.index_axis(Axis(0), i);
                let gy = grad_out
                    .index_axis(Axis(0), i)
                    .to_shape((c_out, oh * ow))
                    .expect("grad reshape")
                    .to_owned();
                let cols = self.im2col(&xi);
                let gw = gy.dot(&cols.t());
                let gb = gy.sum_axis(Axis(1));
                let gcols = self.weight.t().dot(&gy);
                let gx = self.col2im(&gcols, h, w);
                (gx, gw, gb)
            })
            .collect();
        let mut gx = Array4::zeros(x.dim());
        for (i, (gxi, gw, gb)) in per.into_iter().enumerate() {
            gx.slice_mut(s![i, .., .., ..]).assign(&gxi);
            self.grad_weight += &gw;
            self.grad_bias += &gb;
        }
        gx
    }
}

/// Fully connected layer. Row-wise loops keep each sample's arithmetic
/// independent of the batch composition.
#[derive(Debug, Clone)]
pub struct Dense<T> {
    /// `(out_features, in_features)`
    pub weight: Array2<T>,
    pub bias: Array1<T>,
    pub grad_weight: Array2<T>,
    pub grad_bias: Array1<T>,
}

impl<T: Scalar> Dense<T> {
    pub fn new<R: Rng + ?Sized>(in_features: usize, out_features: usize, rng: &mut R) -> Self {
        let dist = Normal::new(0.0, (2.0 / in_features as f64).sqrt()).expect("valid normal");
        let weight =
            Array2::from_shape_fn((out_features, in_features), |_| T::from_f64(dist.sample(rng)));
        Self {
            weight,
            bias: Array1::zeros(out_features),
            grad_weight: Array2::zeros((out_features, in_features)),
            grad_bias: Array1::zeros(out_features),
        }
    }

    pub fn in_features(&self) -> usize {
        self.weight.ncols()
    }

    pub fn out_features(&self) -> usize {
        self.weight.nrows()
    }

    pub fn forward(&self, x: &Array2<T>) -> Array2<T> {
        let (n, fin) = x.dim();
        debug_assert_eq!(fin, self.in_features());
        let fout = self.out_features();
        let mut out = Array2::zeros((n, fout));
        for i in 0..n {
            for o in 0..fout {
                let mut acc = self.bias[o];
                for j in 0..fin {
                    acc += self.weight[(o, j)] * x[(i, j)];
                }
                out[(i, o)] = acc;
            }
        }
        out
    }

    pub fn backward(&mut self, x: &Array2<T>, grad_out: &Array2<T>) -> Array2<T> {
        let (n, fin) = x.dim();
        let fout = self.out_features();
        let mut gx = Array2::zeros((n, fin));
        for i in 0..n {
            for o in 0..fout {
                let g = grad_out[(i, o)];
                self.grad_bias[o] += g;
                for j in 0..fin {
                    self.grad_weight[(o, j)] += g * x[(i, j)];
                    gx[(i, j)] += g * self.weight[(o, j)];
                }
            }
        }
        gx
    }
}

/// Elementwise max(0, x).
pub fn relu4<T: Scalar>(x: &Array4<T>) -> Array4<T> {
    x.mapv(|v| if v > T::zero() { v } else { T::zero() })
}

pub fn relu2<T: Scalar>(x: &Array2<T>) -> Array2<T> {
    x.mapv(|v| if v > T::zero() { v } else { T::zero() })
}

/// Gradient gated by the forward activation: passes where `out > 0`.
pub fn relu_backward4<T: Scalar>(out: &Array4<T>, grad: &Array4<T>) -> Array4<T> {
    let mut g = grad.clone();
    g.zip_mut_with(out, |gv, &ov| {
        if ov <= T::zero() {
            *gv = T::zero();
        }
    });
    g
}

pub fn relu_backward2<T: Scalar>(out: &Array2<T>, grad: &Array2<T>) -> Array2<T> {
    let mut g = grad.clone();
    g.zip_mut_with(out, |gv, &ov| {
        if ov <= T::zero() {
            *gv = T::zero();
        }
    });
    g
}

/// Mean over the spatial dimensions: `(n, c, h, w) -> (n, c)`.
pub fn global_avg_pool<T: Scalar>(x: &Array4<T>) -> Array2<T> {
    let (n, c, h, w) = x.dim();
    let scale = T::from_f64(1.0 / (h * w) as f64);
    let mut out = Array2::zeros((n, c));
    for i in 0..n {
        for ch in 0..c {
            let mut acc = T::zero();
            for r in 0..h {
                for col in 0..w {
                    acc += x[(i, ch, r, col)];
                }
            }
            out[(i, ch)] = acc * scale;
        }
    }
    out
}

pub fn global_avg_pool_backward<T: Scalar>(
    grad: &Array2<T>,
    n: usize,
    c: usize,
    h: usize,
    w: usize,
) -> Array4<T> {
    let scale = T::from_f64(1.0 / (h * w) as f64);
    let mut gx = Array4::zeros((n, c, h, w));
    for i in 0..n {
        for ch in 0..c {
            let g = grad[(i, ch)] * scale;
            for r in 0..h {
                for col in 0..w {
                    gx[(i, ch, r, col)] = g;
                }
            }
        }
    }
    gx
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Direct convolution, the oracle for the im2col path.
    fn conv_naive(
        x: &Array3<f64>,
        conv: &Conv2d<f64>,
    ) -> Array3<f64> {
        let (c_in, h, w) = x.dim();
        let (oh, ow) = conv.out_hw(h, w);
        let k = conv.kernel;
        let mut out = Array3::zeros((conv.c_out, oh, ow));
        for co in 0..conv.c_out {
            for oi in 0..oh {
                for oj in 0..ow {
                    let mut acc = conv.bias[co];
                    for ci in 0..c_in {
                        for ki in 0..k {
                            for kj in 0..k {
                                let ii = (oi * conv.stride + ki) as isize - conv.pad as isize;
                                let jj = (oj * conv.stride + kj) as isize - conv.pad as isize;
                                if ii < 0 || jj < 0 || ii >= h as isize || jj >= w as isize {
                                    continue;
                                }
                                acc += conv.weight[(co, (ci * k + ki) * k + kj)]
                                    * x[(ci, ii as usize, jj as usize)];
                            }
                        }
                    }
                    out[(co, oi, oj)] = acc;
                }
            }
        }
        out
    }

    #[test]
    fn conv_matches_naive_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for (stride, pad, kernel) in [(1usize, 1usize, 3usize), (2, 3, 7), (2, 0, 1)] {
            let mut conv = Conv2d::<f64>::new(3, 4, kernel, stride, pad, &mut rng);
            conv.bias = Array1::from_shape_fn(4, |i| 0.1 * i as f64);
            let x4 = Array4::from_shape_fn((2, 3, 9, 11), |_| rng.random_range(-1.0..1.0));
            let y = conv.forward(&x4);
            for i in 0..2 {
                let xi = x4.index_axis(Axis(0), i).to_owned();
                let expect = conv_naive(&xi, &conv);
                let got = y.index_axis(Axis(0), i);
                for ((a, b), idx) in got.iter().zip(expect.iter()).zip(0..) {
                    assert!((a - b).abs() < 1e-12, "sample {i} elem {idx}");
                }
            }
        }
    }

    #[test]
    fn conv_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut conv = Conv2d::<f64>::new(2, 3, 3, 2, 1, &mut rng);
        let x = Array4::from_shape_fn((2, 2, 6, 6), |_| rng.random_range(-1.0..1.0));
        // loss = sum of outputs * fixed random coefficients
        let coeff = Array4::from_shape_fn(conv.forward(&x).dim(), |_| rng.random_range(-1.0..1.0));
        let loss = |c: &Conv2d<f64>, x: &Array4<f64>| -> f64 {
            (c.forward(x) * &coeff).sum()
        };
        let gx = conv.backward(&x, &coeff);

        let eps = 1e-6;
        // weight grads
        for idx in [(0, 0), (1, 5), (2, 17)] {
            let mut cp = conv.clone();
            cp.weight[idx] += eps;
            let mut cm = conv.clone();
            cm.weight[idx] -= eps;
            let fd = (loss(&cp, &x) - loss(&cm, &x)) / (2.0 * eps);
            let an = conv.grad_weight[idx];
            assert!((fd - an).abs() < 1e-6, "weight {idx:?}: fd {fd} an {an}");
        }
        // bias grads
        for o in 0..3 {
            let mut cp = conv.clone();
            cp.bias[o] += eps;
            let mut cm = conv.clone();
            cm.bias[o] -= eps;
            let fd = (loss(&cp, &x) - loss(&cm, &x)) / (2.0 * eps);
            assert!((fd - conv.grad_bias[o]).abs() < 1e-6);
        }
        // input grads
        for idx in [(0, 0, 0, 0), (1, 1, 3, 4), (0, 1, 5, 5)] {
            let mut xp = x.clone();
            xp[idx] += eps;
            let mut xm = x.clone();
            xm[idx] -= eps;
            let fd = (loss(&conv, &xp) - loss(&conv, &xm)) / (2.0 * eps);
            assert!((fd - gx[idx]).abs() < 1e-6, "input {idx:?}");
        }
    }

    #[test]
    fn dense_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let mut dense = Dense::<f64>::new(5, 4, &mut rng);
        let x = Array2::from_shape_fn((3, 5), |_| rng.random_range(-1.0..1.0));
        let coeff = Array2::from_shape_fn((3, 4), |_| rng.random_range(-1.0..1.0));
        let loss =
            |d: &Dense<f64>, x: &Array2<f64>| -> f64 { (d.forward(x) * &coeff).sum() };
        let gx = dense.backward(&x, &coeff);
        let eps = 1e-6;
        for idx in [(0, 0), (3, 4), (2, 2)] {
            let mut dp = dense.clone();
            dp.weight[idx] += eps;
            let mut dm = dense.clone();
            dm.weight[idx] -= eps;
            let fd = (loss(&dp, &x) - loss(&dm, &x)) / (2.0 * eps);
            assert!((fd - dense.grad_weight[idx]).abs() < 1e-7);
        }
        for idx in [(0, 0), (2, 4)] {
            let mut xp = x.clone();
            xp[idx] += eps;
            let mut xm = x.clone();
            xm[idx] -= eps;
            let fd = (loss(&dense, &xp) - loss(&dense, &xm)) / (2.0 * eps);
            assert!((fd - gx[idx]).abs() < 1e-7);
        }
    }

    #[test]
    fn pool_mean_and_backward() {
        let x = Array4::from_shape_fn((1, 2, 2, 2), |(_, c, r, col)| {
            (c * 4 + r * 2 + col) as f64
        });
        let p = global_avg_pool(&x);
        assert!((p[(0, 0)] - 1.5).abs() < 1e-12);
        assert!((p[(0, 1)] - 5.5).abs() < 1e-12);
        let g = global_avg_pool_backward::<f64>(&Array2::from_elem((1, 2), 1.0), 1, 2, 2, 2);
        assert!(g.iter().all(|&v| (v - 0.25).abs() < 1e-12));
    }
}
