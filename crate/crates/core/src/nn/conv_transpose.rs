use rand::Rng;

use super::{join, uniform_init, Module, Param};
use crate::error::{Error, Result};
use crate::tensor::{col2im, gemm, im2col, Real, Tensor};

/// Transposed 2-D convolution; weight layout is `[in, out, k, k]`.
///
/// Output size is `(h - 1) * stride - 2 * padding + kernel`, so kernel 4,
/// stride 2, padding 1 doubles the spatial size exactly.
#[derive(Clone, Debug)]
pub struct ConvTranspose2d<T> {
    pub weight: Param<T>,
    pub bias: Param<T>,
    in_channels: usize,
    out_channels: usize,
    kernel: usize,
    stride: usize,
    padding: usize,
}

impl<T: Real> ConvTranspose2d<T> {
    pub fn new<R: Rng + ?Sized>(
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        rng: &mut R,
    ) -> Self {
        let fan_in = out_channels * kernel * kernel;
        let weight = uniform_init(&[in_channels, out_channels, kernel, kernel], fan_in, rng);
        let bias = uniform_init(&[out_channels], fan_in, rng);
        Self {
            weight: Param::new(weight),
            bias: Param::new(bias),
            in_channels,
            out_channels,
            kernel,
            stride,
            padding,
        }
    }

    pub fn output_size(&self, h: usize, w: usize) -> (usize, usize) {
        (
            (h - 1) * self.stride + self.kernel - 2 * self.padding,
            (w - 1) * self.stride + self.kernel - 2 * self.padding,
        )
    }

    fn check_input(&self, x: &Tensor<T>) -> Result<(usize, usize, usize)> {
        let (n, c, h, w) = x.dims4()?;
        if c != self.in_channels {
            return Err(Error::shape(
                "ConvTranspose2d",
                format!("{} input channels", self.in_channels),
                format!("{c} channels"),
            ));
        }
        if h == 0 || w == 0 {
            return Err(Error::shape("ConvTranspose2d", "non-empty input", format!("{h}x{w}")));
        }
        Ok((n, h, w))
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let (n, h, w) = self.check_input(x)?;
        let (oh, ow) = self.output_size(h, w);
        let okk = self.out_channels * self.kernel * self.kernel;
        let hw = h * w;
        let mut out = Tensor::zeros(&[n, self.out_channels, oh, ow]);
        let mut cols = vec![T::zero(); okk * hw];
        for s in 0..n {
            gemm(
                true, false, okk, hw, self.in_channels, T::one(),
                self.weight.value.data(), x.sample(s), T::zero(), &mut cols,
            );
            let dst = out.sample_mut(s);
            col2im(
                &cols, self.out_channels, oh, ow, self.kernel, self.stride, self.padding, h, w,
                dst,
            );
            let ohw = oh * ow;
            for (o, &bv) in self.bias.value.data().iter().enumerate() {
                dst[o * ohw..(o + 1) * ohw].iter_mut().for_each(|v| *v += bv);
            }
        }
        Ok(out)
    }

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
                "ConvTranspose2d::backward",
                format!("{expected:?}"),
                format!("{:?}", grad_out.shape()),
            ));
        }
        let okk = self.out_channels * self.kernel * self.kernel;
        let hw = h * w;
        let ohw = oh * ow;
        let mut dcols = vec![T::zero(); okk * hw];
        let mut dx = need_input_grad.then(|| Tensor::zeros(x.shape()));
        for s in 0..n {
            let gy = grad_out.sample(s);
            im2col(
                gy, self.out_channels, oh, ow, self.kernel, self.stride, self.padding, h, w,
                &mut dcols,
            );
            gemm(
                false, true, self.in_channels, okk, hw, T::one(), x.sample(s), &dcols, T::one(),
                self.weight.grad.data_mut(),
            );
            for (o, g) in self.bias.grad.data_mut().iter_mut().enumerate() {
                *g += gy[o * ohw..(o + 1) * ohw].iter().copied().sum::<T>();
            }
            if let Some(dx) = dx.as_mut() {
                gemm(
                    false, false, self.in_channels, hw, okk, T::one(),
                    self.weight.value.data(), &dcols, T::zero(), dx.sample_mut(s),
                );
            }
        }
        Ok(dx)
    }

    /// Multiply-accumulates and bias additions for one sample with input `h x w`;
    /// every input pixel scatters through the full kernel.
    pub fn macs(&self, h: usize, w: usize) -> (u64, u64) {
        let (oh, ow) = self.output_size(h, w);
        let macs = (h * w * self.in_channels * self.out_channels * self.kernel * self.kernel) as u64;
        (macs, (oh * ow * self.out_channels) as u64)
    }
}

impl<T: Real> Module<T> for ConvTranspose2d<T> {
    fn visit_params(&self, prefix: &str, f: &mut dyn FnMut(&str, &Param<T>)) {
        f(&join(prefix, "weight"), &self.weight);
        f(&join(prefix, "bias"), &self.bias);
    }

    fn visit_params_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param<T>)) {
        f(&join(prefix, "weight"), &mut self.weight);
        f(&join(prefix, "bias"), &mut self.bias);
    }
}
