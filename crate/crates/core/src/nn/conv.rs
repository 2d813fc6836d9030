use rand::Rng;

use super::{join, uniform_init, Module, Param};
use crate::error::{Error, Result};
use crate::tensor::{col2im, gemm, im2col, Real, Tensor};

/// Square-kernel 2-D convolution over NCHW tensors.
#[derive(Clone, Debug)]
pub struct Conv2d<T> {
    pub weight: Param<T>,
    pub bias: Option<Param<T>>,
    in_channels: usize,
    out_channels: usize,
    kernel: usize,
    stride: usize,
    padding: usize,
}

impl<T: Real> Conv2d<T> {
    #[allow(clippy::too_many_arguments)]
    pub fn new<R: Rng + ?Sized>(
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        bias: bool,
        rng: &mut R,
    ) -> Self {
        let fan_in = in_channels * kernel * kernel;
        let weight = uniform_init(&[out_channels, in_channels, kernel, kernel], fan_in, rng);
        let bias = bias.then(|| Param::new(uniform_init(&[out_channels], fan_in, rng)));
        Self {
            weight: Param::new(weight),
            bias,
            in_channels,
            out_channels,
            kernel,
            stride,
            padding,
        }
    }

    pub fn in_channels(&self) -> usize {
        self.in_channels
    }

    pub fn out_channels(&self) -> usize {
        self.out_channels
    }

    pub fn kernel(&self) -> usize {
        self.kernel
    }

    pub fn output_size(&self, h: usize, w: usize) -> (usize, usize) {
        let oh = (h + 2 * self.padding - self.kernel) / self.stride + 1;
        let ow = (w + 2 * self.padding - self.kernel) / self.stride + 1;
        (oh, ow)
    }

    fn is_pointwise(&self) -> bool {
        self.kernel == 1 && self.stride == 1 && self.padding == 0
    }

    fn check_input(&self, x: &Tensor<T>) -> Result<(usize, usize, usize)> {
        let (n, c, h, w) = x.dims4()?;
        if c != self.in_channels {
            return Err(Error::shape(
                "Conv2d",
                format!("{} input channels", self.in_channels),
                format!("{c} channels"),
            ));
        }
        if h + 2 * self.padding < self.kernel || w + 2 * self.padding < self.kernel {
            return Err(Error::shape("Conv2d", "input at least kernel-sized", format!("{h}x{w}")));
        }
        Ok((n, h, w))
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let (n, h, w) = self.check_input(x)?;
        let (oh, ow) = self.output_size(h, w);
        let ckk = self.in_channels * self.kernel * self.kernel;
        let ohw = oh * ow;
        let mut out = Tensor::zeros(&[n, self.out_channels, oh, ow]);
        let mut cols = if self.is_pointwise() { Vec::new() } else { vec![T::zero(); ckk * ohw] };
        for s in 0..n {
            let src = x.sample(s);
            let cols_ref: &[T] = if self.is_pointwise() {
                src
            } else {
                im2col(
                    src, self.in_channels, h, w, self.kernel, self.stride, self.padding, oh, ow,
                    &mut cols,
                );
                &cols
            };
            let dst = out.sample_mut(s);
            gemm(
                false, false, self.out_channels, ohw, ckk, T::one(),
                self.weight.value.data(), cols_ref, T::zero(), dst,
            );
            if let Some(b) = &self.bias {
                for (o, &bv) in b.value.data().iter().enumerate() {
                    dst[o * ohw..(o + 1) * ohw].iter_mut().for_each(|v| *v += bv);
                }
            }
        }
        Ok(out)
    }

    /// Accumulates parameter gradients; returns the input gradient when asked.
    pub fn backward(
        &mut self,
        x: &Tensor<T>,
        grad_out: &Tensor<T>,
        need_input_grad: bool,
    ) -> Result<Option<Tensor<T>>> {
        let (n, h, w) = self.check_input(x)?;
        let (oh, ow) = self.output_size(h, w);
        let expected = [n, self.out_channels, oh, ow];
        if grad_out.shape() != expected {
            return Err(Error::shape(
                "Conv2d::backward",
                format!("{expected:?}"),
                format!("{:?}", grad_out.shape()),
            ));
        }
        let ckk = self.in_channels * self.kernel * self.kernel;
        let ohw = oh * ow;
        let pointwise = self.is_pointwise();
        let mut cols = if pointwise { Vec::new() } else { vec![T::zero(); ckk * ohw] };
        // Stride-1 input gradients are a correlation of the output gradient with the
        // flipped kernel, which avoids the wide col2im scatter.
        let flipped = (need_input_grad && !pointwise && self.stride == 1 && 2 * self.padding < self.kernel)
            .then(|| self.flipped_weight());
        let okk = self.out_channels * self.kernel * self.kernel;
        let mut dcols = if !need_input_grad || pointwise {
            Vec::new()
        } else if flipped.is_some() {
            vec![T::zero(); okk * h * w]
        } else {
            vec![T::zero(); ckk * ohw]
        };
        let mut dx = need_input_grad.then(|| Tensor::zeros(x.shape()));
        for s in 0..n {
            let src = x.sample(s);
            let gy = grad_out.sample(s);
            let cols_ref: &[T] = if pointwise {
                src
            } else {
                im2col(
                    src, self.in_channels, h, w, self.kernel, self.stride, self.padding, oh, ow,
                    &mut cols,
                );
                &cols
            };
            gemm(
                false, true, self.out_channels, ckk, ohw, T::one(), gy, cols_ref, T::one(),
                self.weight.grad.data_mut(),
            );
            if let Some(b) = &mut self.bias {
                for (o, g) in b.grad.data_mut().iter_mut().enumerate() {
                    *g += gy[o * ohw..(o + 1) * ohw].iter().copied().sum::<T>();
                }
            }
            if let Some(dx) = dx.as_mut() {
                let dst = dx.sample_mut(s);
                if pointwise {
                    gemm(
                        true, false, ckk, ohw, self.out_channels, T::one(),
                        self.weight.value.data(), gy, T::zero(), dst,
                    );
                } else if let Some(wf) = &flipped {
                    let k = self.kernel;
                    im2col(gy, self.out_channels, oh, ow, k, 1, k - 1 - self.padding, h, w, &mut dcols);
                    gemm(false, false, self.in_channels, h * w, okk, T::one(), wf, &dcols, T::zero(), dst);
                } else {
                    gemm(
                        true, false, ckk, ohw, self.out_channels, T::one(),
                        self.weight.value.data(), gy, T::zero(), &mut dcols,
                    );
                    col2im(
                        &dcols, self.in_channels, h, w, self.kernel, self.stride, self.padding,
                        oh, ow, dst,
                    );
                }
            }
        }
        Ok(dx)
    }

    /// Weight as an `(in, out * k * k)` matrix with each kernel rotated by 180 degrees.
    fn flipped_weight(&self) -> Vec<T> {
        let (ci_n, co_n, k) = (self.in_channels, self.out_channels, self.kernel);
        let src = self.weight.value.data();
        let mut out = vec![T::zero(); ci_n * co_n * k * k];
        for co in 0..co_n {
            for ci in 0..ci_n {
                for ky in 0..k {
                    for kx in 0..k {
                        out[((ci * co_n + co) * k + (k - 1 - ky)) * k + (k - 1 - kx)] =
                            src[((co * ci_n + ci) * k + ky) * k + kx];
                    }
                }
            }
        }
        out
    }

    /// Multiply-accumulates and bias additions for one sample of spatial size
    /// `h x w`. Every kernel tap counts, including those over zero padding.
    pub fn macs(&self, h: usize, w: usize) -> (u64, u64) {
        let (oh, ow) = self.output_size(h, w);
        let positions = (oh * ow * self.out_channels) as u64;
        let macs = positions * (self.in_channels * self.kernel * self.kernel) as u64;
        let bias_adds = if self.bias.is_some() { positions } else { 0 };
        (macs, bias_adds)
    }
}

impl<T: Real> Module<T> for Conv2d<T> {
    fn visit_params(&self, prefix: &str, f: &mut dyn FnMut(&str, &Param<T>)) {
        f(&join(prefix, "weight"), &self.weight);
        if let Some(b) = &self.bias {
            f(&join(prefix, "bias"), b);
        }
    }

    fn visit_params_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param<T>)) {
        f(&join(prefix, "weight"), &mut self.weight);
        if let Some(b) = &mut self.bias {
            f(&join(prefix, "bias"), b);
        }
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    /// Direct nested-loop convolution.
    fn conv_oracle(conv: &Conv2d<f64>, x: &Tensor<f64>) -> Tensor<f64> {
        let (n, c, h, w) = x.dims4().unwrap();
        let (oh, ow) = conv.output_size(h, w);
        let k = conv.kernel;
        let wt = conv.weight.value.data();
        let mut out = Tensor::zeros(&[n, conv.out_channels, oh, ow]);
        for s in 0..n {
            for o in 0..conv.out_channels {
                for oy in 0..oh {
                    for ox in 0..ow {
                        let mut acc = conv.bias.as_ref().map_or(0.0, |b| b.value.data()[o]);
                        for ci in 0..c {
                            for ky in 0..k {
                                for kx in 0..k {
                                    let iy = (oy * conv.stride + ky) as isize - conv.padding as isize;
                                    let ix = (ox * conv.stride + kx) as isize - conv.padding as isize;
                                    if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                                        continue;
                                    }
                                    acc += wt[((o * c + ci) * k + ky) * k + kx]
                                        * x.data()[((s * c + ci) * h + iy as usize) * w + ix as usize];
                                }
                            }
                        }
                        out.data_mut()[((s * conv.out_channels + o) * oh + oy) * ow + ox] = acc;
                    }
                }
            }
        }
        out
    }

    fn random_tensor(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
        let n = shape.iter().product();
        Tensor::from_vec(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn forward_matches_direct_convolution() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for &(k, s, p) in &[(3, 1, 1), (1, 1, 0), (7, 2, 3), (3, 2, 1), (1, 2, 0)] {
            let conv = Conv2d::<f64>::new(3, 4, k, s, p, true, &mut rng);
            let x = random_tensor(&[2, 3, 9, 7], &mut rng);
            let y = conv.forward(&x).unwrap();
            assert!(y.max_abs_diff(&conv_oracle(&conv, &x)) < 1e-12, "k{k} s{s} p{p}");
        }
    }

    #[test]
    fn ones_kernel_sums_the_neighbourhood() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut conv = Conv2d::<f64>::new(1, 1, 3, 1, 1, true, &mut rng);
        conv.weight.value.fill(1.0);
        conv.bias.as_mut().unwrap().value.fill(0.0);
        let x = Tensor::from_vec(&[1, 1, 3, 3], (1..=9).map(f64::from).collect()).unwrap();
        let y = conv.forward(&x).unwrap();
        // centre sees all nine values, corner (0,0) sees 1+2+4+5
        assert_eq!(y.data()[4], 45.0);
        assert_eq!(y.data()[0], 12.0);
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for &(k, s, p) in &[(3, 1, 1), (1, 1, 0), (3, 2, 1), (3, 1, 0), (5, 1, 2)] {
            let mut conv = Conv2d::<f64>::new(2, 3, k, s, p, true, &mut rng);
            let x = random_tensor(&[2, 2, 5, 6], &mut rng);
            let y = conv.forward(&x).unwrap();
            let g = random_tensor(y.shape(), &mut rng);
            let loss = |c: &Conv2d<f64>, x: &Tensor<f64>| -> f64 {
                c.forward(x).unwrap().data().iter().zip(g.data()).map(|(a, b)| a * b).sum()
            };
            let dx = conv.backward(&x, &g, true).unwrap().unwrap();
            let h = 1e-6;
            for i in [0, 7, 23, x.len() - 1] {
                let mut xp = x.clone();
                xp.data_mut()[i] += h;
                let mut xm = x.clone();
                xm.data_mut()[i] -= h;
                let fd = (loss(&conv, &xp) - loss(&conv, &xm)) / (2.0 * h);
                assert!((fd - dx.data()[i]).abs() < 1e-7);
            }
            let gw = conv.weight.grad.clone();
            for i in [0, 5, gw.len() - 1] {
                let mut cp = conv.clone();
                cp.weight.value.data_mut()[i] += h;
                let mut cm = conv.clone();
                cm.weight.value.data_mut()[i] -= h;
                let fd = (loss(&cp, &x) - loss(&cm, &x)) / (2.0 * h);
                assert!((fd - gw.data()[i]).abs() < 1e-7);
            }
        }
    }

    #[test]
    fn wrong_channel_count_is_a_shape_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let conv = Conv2d::<f32>::new(3, 8, 3, 1, 1, true, &mut rng);
        let x = Tensor::zeros(&[1, 4, 8, 8]);
        assert!(matches!(conv.forward(&x), Err(Error::Shape { .. })));
    }

    #[test]
    fn single_conv_mac_count_is_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let conv = Conv2d::<f32>::new(3, 64, 3, 1, 1, true, &mut rng);
        assert_eq!(conv.macs(64, 64), (64 * 64 * 64 * 27, 64 * 64 * 64));
    }
}
