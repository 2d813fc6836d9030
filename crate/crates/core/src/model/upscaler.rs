use super::sr::SrModel;
use crate::data::resample::{upscale_bicubic, upscale_nearest};
use crate::error::Result;
use crate::tensor::Tensor;

/// Anything mapping `[N, 3, h, w]` LR batches to clamped `[N, 3, s*h, s*w]` outputs.
pub trait Upscaler {
    fn scale(&self) -> usize;
    fn upscale(&self, lr: &Tensor<f32>) -> Result<Tensor<f32>>;
}

impl Upscaler for SrModel<f32> {
    fn scale(&self) -> usize {
        SrModel::scale(self)
    }

    fn upscale(&self, lr: &Tensor<f32>) -> Result<Tensor<f32>> {
        self.infer(lr)
    }
}

fn per_sample(lr: &Tensor<f32>, f: impl Fn(&Tensor<f32>) -> Result<Tensor<f32>>) -> Result<Tensor<f32>> {
    let (n, _, _, _) = lr.dims4()?;
    let outs = (0..n).map(|i| f(&lr.sample_tensor(i))).collect::<Result<Vec<_>>>()?;
    Tensor::stack(&outs.iter().collect::<Vec<_>>())
}

/// Plain bicubic interpolation, the reference baseline.
#[derive(Clone, Copy, Debug)]
pub struct BicubicUpscaler(pub usize);

impl Upscaler for BicubicUpscaler {
    fn scale(&self) -> usize {
        self.0
    }

    fn upscale(&self, lr: &Tensor<f32>) -> Result<Tensor<f32>> {
        per_sample(lr, |x| upscale_bicubic(x, self.0))
    }
}

/// Pixel replication.
#[derive(Clone, Copy, Debug)]
pub struct NearestUpscaler(pub usize);

impl Upscaler for NearestUpscaler {
    fn scale(&self) -> usize {
        self.0
    }

    fn upscale(&self, lr: &Tensor<f32>) -> Result<Tensor<f32>> {
        per_sample(lr, |x| upscale_nearest(x, self.0))
    }
}
