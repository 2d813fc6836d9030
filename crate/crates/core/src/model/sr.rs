use rand::Rng;

use super::blocks::{CaTrace, ChannelAttention, RdbTrace, ResidualDenseBlock};
use super::config::SrModelConfig;
use crate::error::{Error, Result};
use crate::nn::{join, relu, relu_backward, Conv2d, ConvTranspose2d, Module, Param};
use crate::tensor::{Real, Tensor};

/// The super-resolution generator: shallow conv, RDB chain, channel
/// attention, x2 transposed-conv stages with ReLU, final 3x3 conv.
#[derive(Clone, Debug)]
pub struct SrModel<T> {
    config: SrModelConfig,
    pub shallow: Conv2d<T>,
    pub rdbs: Vec<ResidualDenseBlock<T>>,
    pub ca: ChannelAttention<T>,
    pub up: Vec<ConvTranspose2d<T>>,
    pub final_conv: Conv2d<T>,
}

/// Intermediate activations of one forward pass.
#[derive(Clone, Debug)]
pub struct SrTrace<T> {
    pub input: Tensor<T>,
    pub f0: Tensor<T>,
    /// Input of every RDB followed by the output of the last one.
    pub rdb_io: Vec<Tensor<T>>,
    pub rdbs: Vec<RdbTrace<T>>,
    pub ca: CaTrace<T>,
    /// Output of channel attention followed by every upsampling stage output.
    pub up_io: Vec<Tensor<T>>,
}

impl<T: Real> SrModel<T> {
    pub fn new<R: Rng + ?Sized>(config: SrModelConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let c = config.base_channels;
        let shallow = Conv2d::new(3, c, 3, 1, 1, true, rng);
        let rdbs = (0..config.num_rdb)
            .map(|_| ResidualDenseBlock::new(c, config.rdb_convs, config.growth, config.alpha_init, rng))
            .collect();
        let ca = ChannelAttention::new(c, config.ca_reduction, rng)?;
        let up = (0..config.upsample_stages())
            .map(|_| ConvTranspose2d::new(c, c, 4, 2, 1, rng))
            .collect();
        let final_conv = Conv2d::new(c, 3, 3, 1, 1, true, rng);
        Ok(Self {
            config,
            shallow,
            rdbs,
            ca,
            up,
            final_conv,
        })
    }

    pub fn config(&self) -> &SrModelConfig {
        &self.config
    }

    pub fn scale(&self) -> usize {
        self.config.scale
    }

    pub fn set_alphas(&mut self, alpha: T) {
        for r in &mut self.rdbs {
            r.alpha.value.data_mut()[0] = alpha;
        }
    }

    /// Forward pass without clamping, keeping activations for [`Self::backward`].
    pub fn forward_trace(&self, x: &Tensor<T>) -> Result<(Tensor<T>, SrTrace<T>)> {
        let (_, c, _, _) = x.dims4()?;
        if c != 3 {
            return Err(Error::shape("SrModel", "3 input channels", c));
        }
        let f0 = self.shallow.forward(x)?;
        let mut rdb_io = vec![f0.clone()];
        let mut rdb_traces = Vec::with_capacity(self.rdbs.len());
        for rdb in &self.rdbs {
            let (y, t) = rdb.forward(rdb_io.last().expect("non-empty"))?;
            rdb_io.push(y);
            rdb_traces.push(t);
        }
        let mut body = rdb_io.last().expect("non-empty").clone();
        if self.config.global_skip {
            body.add_assign(&f0)?;
        }
        let (ca_out, ca_trace) = self.ca.forward(&body)?;
        let mut up_io = vec![ca_out];
        for stage in &self.up {
            let y = relu(&stage.forward(up_io.last().expect("non-empty"))?);
            up_io.push(y);
        }
        let out = self.final_conv.forward(up_io.last().expect("non-empty"))?;
        Ok((
            out,
            SrTrace {
                input: x.clone(),
                f0,
                rdb_io,
                rdbs: rdb_traces,
                ca: ca_trace,
                up_io,
            },
        ))
    }

    /// Raw output, as used inside losses.
    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(self.forward_trace(x)?.0)
    }

    /// Output clamped to `[0, 1]`.
    pub fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(self.forward(x)?.clamp(T::zero(), T::one()))
    }

    /// Accumulates parameter gradients for `d loss / d output = grad`.
    pub fn backward(&mut self, trace: &SrTrace<T>, grad: &Tensor<T>) -> Result<()> {
        let last = trace.up_io.last().expect("non-empty");
        let mut g = self
            .final_conv
            .backward(last, grad, true)?
            .expect("input gradient requested");
        for (j, stage) in self.up.iter_mut().enumerate().rev() {
            let dy = relu_backward(&trace.up_io[j + 1], &g)?;
            g = stage
                .backward(&trace.up_io[j], &dy, true)?
                .expect("input gradient requested");
        }
        let mut g = self.ca.backward(&trace.ca, &g)?;
        let skip = self.config.global_skip.then(|| g.clone());
        for (rdb, t) in self.rdbs.iter_mut().zip(&trace.rdbs).rev() {
            g = rdb.backward(t, &g)?;
        }
        if let Some(s) = skip {
            g.add_assign(&s)?;
        }
        self.shallow.backward(&trace.input, &g, false)?;
        Ok(())
    }
}

impl<T: Real> Module<T> for SrModel<T> {
    fn visit_params(&self, prefix: &str, f: &mut dyn FnMut(&str, &Param<T>)) {
        self.shallow.visit_params(&join(prefix, "shallow"), f);
        for (i, r) in self.rdbs.iter().enumerate() {
            r.visit_params(&join(prefix, &format!("rdb.{i}")), f);
        }
        self.ca.visit_params(&join(prefix, "ca"), f);
        for (j, u) in self.up.iter().enumerate() {
            u.visit_params(&join(prefix, &format!("up.{j}")), f);
        }
        self.final_conv.visit_params(&join(prefix, "final"), f);
    }

    fn visit_params_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param<T>)) {
        self.shallow.visit_params_mut(&join(prefix, "shallow"), f);
        for (i, r) in self.rdbs.iter_mut().enumerate() {
            r.visit_params_mut(&join(prefix, &format!("rdb.{i}")), f);
        }
        self.ca.visit_params_mut(&join(prefix, "ca"), f);
        for (j, u) in self.up.iter_mut().enumerate() {
            u.visit_params_mut(&join(prefix, &format!("up.{j}")), f);
        }
        self.final_conv.visit_params_mut(&join(prefix, "final"), f);
    }
}
