use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{
    gap, gap_backward, join, relu, relu_backward, BilinearResize, ChannelAffine, Conv2d, Linear,
    MaxPool2d, Module, Param,
};
use crate::tensor::{Real, Tensor};

/// Layout of the embedding encoder: an 18-layer residual network (stem plus
/// four stages of two basic blocks) whose classifier is a projection to `d`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncoderConfig {
    /// Channel width of each of the four stages.
    pub widths: [usize; 4],
    /// Square size patches are bilinearly resized to before encoding; `None` keeps them as-is.
    #[serde(default)]
    pub input_size: Option<usize>,
}

impl EncoderConfig {
    /// Standard ResNet-18 widths at a 224 pixel input.
    pub fn resnet18() -> Self {
        Self {
            widths: [64, 128, 256, 512],
            input_size: Some(224),
        }
    }

    pub fn tiny() -> Self {
        Self {
            widths: [8, 16, 32, 64],
            input_size: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.widths.contains(&0) {
            return Err(Error::Config("encoder.widths must be positive".into()));
        }
        if self.input_size == Some(0) {
            return Err(Error::Config("encoder.input_size must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
struct BasicBlock<T> {
    conv1: Conv2d<T>,
    aff1: ChannelAffine<T>,
    conv2: Conv2d<T>,
    aff2: ChannelAffine<T>,
    down: Option<(Conv2d<T>, ChannelAffine<T>)>,
}

#[derive(Clone, Debug)]
struct BlockTrace<T> {
    x: Tensor<T>,
    c1: Tensor<T>,
    r1: Tensor<T>,
    c2: Tensor<T>,
    down: Option<Tensor<T>>,
    out: Tensor<T>,
}

impl<T: Real> BasicBlock<T> {
    fn new<R: Rng + ?Sized>(cin: usize, cout: usize, stride: usize, rng: &mut R) -> Self {
        let down = (stride != 1 || cin != cout)
            .then(|| (Conv2d::new(cin, cout, 1, stride, 0, false, rng), ChannelAffine::new(cout)));
        Self {
            conv1: Conv2d::new(cin, cout, 3, stride, 1, false, rng),
            aff1: ChannelAffine::new(cout),
            conv2: Conv2d::new(cout, cout, 3, 1, 1, false, rng),
            aff2: ChannelAffine::new(cout),
            down,
        }
    }

    fn forward(&self, x: &Tensor<T>) -> Result<BlockTrace<T>> {
        let c1 = self.conv1.forward(x)?;
        let r1 = relu(&self.aff1.forward(&c1)?);
        let c2 = self.conv2.forward(&r1)?;
        let mut sum = self.aff2.forward(&c2)?;
        let down = match &self.down {
            Some((conv, aff)) => {
                let d = conv.forward(x)?;
                sum.add_assign(&aff.forward(&d)?)?;
                Some(d)
            }
            None => {
                sum.add_assign(x)?;
                None
            }
        };
        Ok(BlockTrace {
            x: x.clone(),
            c1,
            r1,
            c2,
            down,
            out: relu(&sum),
        })
    }

    fn backward(&mut self, t: &BlockTrace<T>, grad: &Tensor<T>) -> Result<Tensor<T>> {
        let dsum = relu_backward(&t.out, grad)?;
        let dc2 = self.aff2.backward(&t.c2, &dsum)?;
        let dr1 = self.conv2.backward(&t.r1, &dc2, true)?.expect("input gradient");
        let da1 = relu_backward(&t.r1, &dr1)?;
        let dc1 = self.aff1.backward(&t.c1, &da1)?;
        let mut dx = self.conv1.backward(&t.x, &dc1, true)?.expect("input gradient");
        match (&mut self.down, &t.down) {
            (Some((conv, aff)), Some(d)) => {
                let dd = aff.backward(d, &dsum)?;
                dx.add_assign(&conv.backward(&t.x, &dd, true)?.expect("input gradient"))?;
            }
            _ => dx.add_assign(&dsum)?,
        }
        Ok(dx)
    }
}

impl<T: Real> Module<T> for BasicBlock<T> {
    fn visit_params(&self, prefix: &str, f: &mut dyn FnMut(&str, &Param<T>)) {
        self.conv1.visit_params(&join(prefix, "conv1"), f);
        self.aff1.visit_params(&join(prefix, "aff1"), f);
        self.conv2.visit_params(&join(prefix, "conv2"), f);
        self.aff2.visit_params(&join(prefix, "aff2"), f);
        if let Some((c, a)) = &self.down {
            c.visit_params(&join(prefix, "down.conv"), f);
            a.visit_params(&join(prefix, "down.aff"), f);
        }
    }

    fn visit_params_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param<T>)) {
        self.conv1.visit_params_mut(&join(prefix, "conv1"), f);
        self.aff1.visit_params_mut(&join(prefix, "aff1"), f);
        self.conv2.visit_params_mut(&join(prefix, "conv2"), f);
        self.aff2.visit_params_mut(&join(prefix, "aff2"), f);
        if let Some((c, a)) = &mut self.down {
            c.visit_params_mut(&join(prefix, "down.conv"), f);
            a.visit_params_mut(&join(prefix, "down.aff"), f);
        }
    }
}

/// Weight-shared encoder applied to both members of an (SR, HR) pair.
#[derive(Clone, Debug)]
pub struct SiameseEncoder<T> {
    config: EncoderConfig,
    embed_dim: usize,
    stem: Conv2d<T>,
    stem_aff: ChannelAffine<T>,
    pool: MaxPool2d,
    blocks: Vec<BasicBlock<T>>,
    proj: Linear<T>,
}

/// Activations of one encoder pass.
#[derive(Clone, Debug)]
pub struct EncoderTrace<T> {
    input_shape: Vec<usize>,
    resized: Tensor<T>,
    stem: Tensor<T>,
    stem_act: Tensor<T>,
    pool_argmax: Vec<usize>,
    blocks: Vec<BlockTrace<T>>,
    pooled: Tensor<T>,
}

impl<T: Real> SiameseEncoder<T> {
    pub fn new<R: Rng + ?Sized>(config: EncoderConfig, embed_dim: usize, rng: &mut R) -> Result<Self> {
        config.validate()?;
        if embed_dim == 0 {
            return Err(Error::Config("embedding dimension must be positive".into()));
        }
        let w = config.widths;
        let mut blocks = Vec::with_capacity(8);
        let mut cin = w[0];
        for (stage, &cout) in w.iter().enumerate() {
            let stride = if stage == 0 { 1 } else { 2 };
            blocks.push(BasicBlock::new(cin, cout, stride, rng));
            blocks.push(BasicBlock::new(cout, cout, 1, rng));
            cin = cout;
        }
        Ok(Self {
            stem: Conv2d::new(3, w[0], 7, 2, 3, false, rng),
            stem_aff: ChannelAffine::new(w[0]),
            pool: MaxPool2d {
                kernel: 3,
                stride: 2,
                padding: 1,
            },
            blocks,
            proj: Linear::new(w[3], embed_dim, rng),
            config,
            embed_dim,
        })
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.config
    }

    pub fn embed_dim(&self) -> usize {
        self.embed_dim
    }

    fn resize(&self, h: usize, w: usize) -> BilinearResize {
        match self.config.input_size {
            Some(s) => BilinearResize::new(s, s),
            None => BilinearResize::new(h, w),
        }
    }

    /// Raw (unnormalized) embeddings `[N, d]` with the trace for backward.
    pub fn forward_trace(&self, x: &Tensor<T>) -> Result<(Tensor<T>, EncoderTrace<T>)> {
        let (_, c, h, w) = x.dims4()?;
        if c != 3 {
            return Err(Error::shape("SiameseEncoder", "3 input channels", c));
        }
        let resized = self.resize(h, w).forward(x)?;
        let stem = self.stem.forward(&resized)?;
        let stem_act = relu(&self.stem_aff.forward(&stem)?);
        let (mut feat, pool_argmax) = self.pool.forward(&stem_act)?;
        let mut blocks = Vec::with_capacity(self.blocks.len());
        for b in &self.blocks {
            let t = b.forward(&feat)?;
            feat = t.out.clone();
            blocks.push(t);
        }
        let pooled = gap(&feat)?;
        let v = self.proj.forward(&pooled)?;
        Ok((
            v,
            EncoderTrace {
                input_shape: x.shape().to_vec(),
                resized,
                stem,
                stem_act,
                pool_argmax,
                blocks,
                pooled,
            },
        ))
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(self.forward_trace(x)?.0)
    }

    /// Accumulates parameter gradients and returns the gradient with respect to the input.
    pub fn backward(&mut self, trace: &EncoderTrace<T>, grad: &Tensor<T>) -> Result<Tensor<T>> {
        let mut g = self.proj.backward(&trace.pooled, grad)?;
        let last = &trace.blocks.last().expect("eight blocks").out;
        let (_, _, fh, fw) = last.dims4()?;
        g = gap_backward(&g, fh, fw)?;
        for (b, t) in self.blocks.iter_mut().zip(&trace.blocks).rev() {
            g = b.backward(t, &g)?;
        }
        g = self.pool.backward(trace.stem_act.shape(), &trace.pool_argmax, &g)?;
        g = relu_backward(&trace.stem_act, &g)?;
        g = self.stem_aff.backward(&trace.stem, &g)?;
        let g = self.stem.backward(&trace.resized, &g, true)?.expect("input gradient");
        let (h, w) = (trace.input_shape[2], trace.input_shape[3]);
        self.resize(h, w).backward(&trace.input_shape, &g)
    }
}

impl<T: Real> Module<T> for SiameseEncoder<T> {
    fn visit_params(&self, prefix: &str, f: &mut dyn FnMut(&str, &Param<T>)) {
        self.stem.visit_params(&join(prefix, "stem.conv"), f);
        self.stem_aff.visit_params(&join(prefix, "stem.aff"), f);
        for (i, b) in self.blocks.iter().enumerate() {
            b.visit_params(&join(prefix, &format!("layer{}.{}", i / 2 + 1, i % 2)), f);
        }
        self.proj.visit_params(&join(prefix, "proj"), f);
    }

    fn visit_params_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param<T>)) {
        self.stem.visit_params_mut(&join(prefix, "stem.conv"), f);
        self.stem_aff.visit_params_mut(&join(prefix, "stem.aff"), f);
        for (i, b) in self.blocks.iter_mut().enumerate() {
            b.visit_params_mut(&join(prefix, &format!("layer{}.{}", i / 2 + 1, i % 2)), f);
        }
        self.proj.visit_params_mut(&join(prefix, "proj"), f);
    }
}
