use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::{
    channel_scale, channel_scale_backward, gap, gap_backward, join, relu, relu_backward, sigmoid,
    Conv2d, Linear, Module, Param,
};
use crate::tensor::{Real, Tensor};

/// Residual dense block: ReLU convolutions over a growing concatenation,
/// a 1x1 fusion back to the block width, and a learnable residual scale.
#[derive(Clone, Debug)]
pub struct ResidualDenseBlock<T> {
    pub convs: Vec<Conv2d<T>>,
    pub fusion: Conv2d<T>,
    pub alpha: Param<T>,
    channels: usize,
    growth: usize,
}

/// Activations kept for the backward pass.
#[derive(Clone, Debug)]
pub struct RdbTrace<T> {
    /// Input followed by every dense-layer output, along channels.
    pub concat: Tensor<T>,
    /// Fusion output before the residual scale.
    pub fused: Tensor<T>,
}

impl<T: Real> ResidualDenseBlock<T> {
    pub fn new<R: Rng + ?Sized>(channels: usize, layers: usize, growth: usize, alpha: f64, rng: &mut R) -> Self {
        let convs = (0..layers)
            .map(|j| Conv2d::new(channels + j * growth, growth, 3, 1, 1, true, rng))
            .collect();
        let fusion = Conv2d::new(channels + layers * growth, channels, 1, 1, 0, true, rng);
        Self {
            convs,
            fusion,
            alpha: Param::new(Tensor::scalar(T::lit(alpha))),
            channels,
            growth,
        }
    }

    pub fn alpha(&self) -> T {
        self.alpha.value.data()[0]
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<(Tensor<T>, RdbTrace<T>)> {
        let (_, c, _, _) = x.dims4()?;
        if c != self.channels {
            return Err(Error::shape("ResidualDenseBlock", self.channels, c));
        }
        let mut concat = x.clone();
        for conv in &self.convs {
            let y = relu(&conv.forward(&concat)?);
            concat = Tensor::concat_channels(&[&concat, &y])?;
        }
        let fused = self.fusion.forward(&concat)?;
        let mut out = x.clone();
        out.scaled_add(self.alpha(), &fused)?;
        Ok((out, RdbTrace { concat, fused }))
    }

    pub fn backward(&mut self, trace: &RdbTrace<T>, grad: &Tensor<T>) -> Result<Tensor<T>> {
        let da: T = trace.fused.data().iter().zip(grad.data()).map(|(&f, &g)| f * g).sum();
        self.alpha.grad.data_mut()[0] += da;
        let alpha = self.alpha();
        let dfused = grad.map(|g| g * alpha);
        let mut dconcat = self
            .fusion
            .backward(&trace.concat, &dfused, true)?
            .expect("input gradient requested");
        for (j, conv) in self.convs.iter_mut().enumerate().rev() {
            let in_c = self.channels + j * self.growth;
            let out = trace.concat.channel_range(in_c, self.growth)?;
            let dy = relu_backward(&out, &dconcat.channel_range(in_c, self.growth)?)?;
            let input = trace.concat.channel_range(0, in_c)?;
            let dx = conv.backward(&input, &dy, true)?.expect("input gradient requested");
            dconcat.add_into_channels(0, &dx)?;
        }
        let mut dx = dconcat.channel_range(0, self.channels)?;
        dx.add_assign(grad)?;
        Ok(dx)
    }
}

impl<T: Real> Module<T> for ResidualDenseBlock<T> {
    fn visit_params(&self, prefix: &str, f: &mut dyn FnMut(&str, &Param<T>)) {
        for (j, c) in self.convs.iter().enumerate() {
            c.visit_params(&join(prefix, &format!("conv.{j}")), f);
        }
        self.fusion.visit_params(&join(prefix, "fusion"), f);
        f(&join(prefix, "alpha"), &self.alpha);
    }

    fn visit_params_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param<T>)) {
        for (j, c) in self.convs.iter_mut().enumerate() {
            c.visit_params_mut(&join(prefix, &format!("conv.{j}")), f);
        }
        self.fusion.visit_params_mut(&join(prefix, "fusion"), f);
        f(&join(prefix, "alpha"), &mut self.alpha);
    }
}

/// Squeeze-and-excitation channel gating.
#[derive(Clone, Debug)]
pub struct ChannelAttention<T> {
    pub fc1: Linear<T>,
    pub fc2: Linear<T>,
}

#[derive(Clone, Debug)]
pub struct CaTrace<T> {
    pub input: Tensor<T>,
    pub z: Tensor<T>,
    pub z1: Tensor<T>,
    /// Per-channel gates in `(0, 1)`.
    pub z2: Tensor<T>,
}

impl<T: Real> ChannelAttention<T> {
    pub fn new<R: Rng + ?Sized>(channels: usize, reduction: usize, rng: &mut R) -> Result<Self> {
        if reduction == 0 || channels % reduction != 0 {
            return Err(Error::Config(format!(
                "channel attention reduction {reduction} does not divide {channels} channels"
            )));
        }
        let hidden = channels / reduction;
        Ok(Self {
            fc1: Linear::new(channels, hidden, rng),
            fc2: Linear::new(hidden, channels, rng),
        })
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<(Tensor<T>, CaTrace<T>)> {
        let z = gap(x)?;
        let z1 = relu(&self.fc1.forward(&z)?);
        let z2 = self.fc2.forward(&z1)?.map(sigmoid);
        let out = channel_scale(x, &z2)?;
        Ok((
            out,
            CaTrace {
                input: x.clone(),
                z,
                z1,
                z2,
            },
        ))
    }

    pub fn backward(&mut self, trace: &CaTrace<T>, grad: &Tensor<T>) -> Result<Tensor<T>> {
        let (_, _, h, w) = trace.input.dims4()?;
        let (mut dx, dz2) = channel_scale_backward(&trace.input, &trace.z2, grad)?;
        let dpre2 = Tensor::from_vec(
            dz2.shape(),
            dz2.data()
                .iter()
                .zip(trace.z2.data())
                .map(|(&g, &s)| g * s * (T::one() - s))
                .collect(),
        )?;
        let dz1 = self.fc2.backward(&trace.z1, &dpre2)?;
        let dpre1 = relu_backward(&trace.z1, &dz1)?;
        let dz = self.fc1.backward(&trace.z, &dpre1)?;
        dx.add_assign(&gap_backward(&dz, h, w)?)?;
        Ok(dx)
    }
}

impl<T: Real> Module<T> for ChannelAttention<T> {
    fn visit_params(&self, prefix: &str, f: &mut dyn FnMut(&str, &Param<T>)) {
        self.fc1.visit_params(&join(prefix, "fc1"), f);
        self.fc2.visit_params(&join(prefix, "fc2"), f);
    }

    fn visit_params_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param<T>)) {
        self.fc1.visit_params_mut(&join(prefix, "fc1"), f);
        self.fc2.visit_params_mut(&join(prefix, "fc2"), f);
    }
}
