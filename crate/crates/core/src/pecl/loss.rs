use std::path::PathBuf;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::encoder::{EncoderConfig, SiameseEncoder};
use crate::error::{Error, Result};
use crate::nn::{join, Module, Param};
use crate::tensor::{Real, Tensor};
use crate::tensor_file::read_tensor_file;

/// Guard added to the norm before dividing.
pub const NORM_EPS: f64 = 1e-12;

/// Embedding sizes the ablation covers.
pub const EMBED_DIMS: [usize; 4] = [64, 128, 256, 512];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Distance {
    Manhattan,
    Euclidean,
}

impl Distance {
    pub fn name(self) -> &'static str {
        match self {
            Distance::Manhattan => "manhattan",
            Distance::Euclidean => "euclidean",
        }
    }
}

/// `Margin` is `max(m - D, 0)^2`, which rewards pushing a pair apart;
/// `SimilarPair` is `D^2`, the usual positive-pair term.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContrastiveMode {
    Margin,
    SimilarPair,
}

fn default_margin() -> f64 {
    2.0
}
fn default_embed_dim() -> usize {
    128
}
fn default_w_pixel() -> f64 {
    0.5
}
fn default_distance() -> Distance {
    Distance::Manhattan
}
fn default_mode() -> ContrastiveMode {
    ContrastiveMode::Margin
}
fn default_encoder() -> EncoderConfig {
    EncoderConfig::tiny()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PeclConfig {
    #[serde(default = "default_margin")]
    pub margin: f64,
    #[serde(default = "default_distance")]
    pub distance: Distance,
    #[serde(default = "default_embed_dim")]
    pub embed_dim: usize,
    #[serde(default = "default_w_pixel")]
    pub w_pixel_init: f64,
    #[serde(default = "default_mode")]
    pub contrastive_mode: ContrastiveMode,
    #[serde(default)]
    pub freeze_siamese: bool,
    #[serde(default = "default_encoder")]
    pub encoder: EncoderConfig,
    /// Encoder weights to start from, keyed by encoder parameter name.
    #[serde(default)]
    pub pretrained: Option<PathBuf>,
}

impl Default for PeclConfig {
    fn default() -> Self {
        Self {
            margin: default_margin(),
            distance: default_distance(),
            embed_dim: default_embed_dim(),
            w_pixel_init: default_w_pixel(),
            contrastive_mode: default_mode(),
            freeze_siamese: false,
            encoder: default_encoder(),
            pretrained: None,
        }
    }
}

impl PeclConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.margin > 0.0 && self.margin.is_finite()) {
            return Err(Error::Config(format!("pecl.margin must be positive, got {}", self.margin)));
        }
        if !EMBED_DIMS.contains(&self.embed_dim) {
            return Err(Error::Config(format!(
                "pecl.embed_dim must be one of {EMBED_DIMS:?}, got {}",
                self.embed_dim
            )));
        }
        if !(0.0..=1.0).contains(&self.w_pixel_init) {
            return Err(Error::Config("pecl.w_pixel_init must lie in [0, 1]".into()));
        }
        self.encoder.validate()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Embedding {
    pub v: Vec<f64>,
    pub normalized: bool,
    /// Set when the raw vector had zero norm.
    pub degenerate: bool,
}

pub fn l2_normalize(v: &[f64]) -> Embedding {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    Embedding {
        v: v.iter().map(|x| x / (norm + NORM_EPS)).collect(),
        normalized: true,
        degenerate: norm == 0.0,
    }
}

pub fn embedding_distance(a: &Embedding, b: &Embedding, mode: Distance) -> Result<f64> {
    if a.v.len() != b.v.len() {
        return Err(Error::shape("embedding_distance", a.v.len(), b.v.len()));
    }
    Ok(distance(&a.v, &b.v, mode))
}

fn distance(a: &[f64], b: &[f64], mode: Distance) -> f64 {
    let diffs = a.iter().zip(b).map(|(x, y)| x - y);
    match mode {
        Distance::Manhattan => diffs.map(f64::abs).sum(),
        Distance::Euclidean => diffs.map(|d| d * d).sum::<f64>().sqrt(),
    }
}

/// Gradient of the distance with respect to `a`; the one for `b` is its negation.
fn distance_grad(a: &[f64], b: &[f64], d: f64, mode: Distance) -> Vec<f64> {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let diff = x - y;
            match mode {
                Distance::Manhattan if diff > 0.0 => 1.0,
                Distance::Manhattan if diff < 0.0 => -1.0,
                Distance::Manhattan => 0.0,
                Distance::Euclidean if d > 0.0 => diff / d,
                Distance::Euclidean => 0.0,
            }
        })
        .collect()
}

pub fn contrastive_loss(d: f64, margin: f64, mode: ContrastiveMode) -> f64 {
    match mode {
        ContrastiveMode::Margin => (margin - d).max(0.0).powi(2),
        ContrastiveMode::SimilarPair => d * d,
    }
}

fn contrastive_grad(d: f64, margin: f64, mode: ContrastiveMode) -> f64 {
    match mode {
        ContrastiveMode::Margin if d < margin => -2.0 * (margin - d),
        ContrastiveMode::Margin => 0.0,
        ContrastiveMode::SimilarPair => 2.0 * d,
    }
}

/// Backpropagates through `v / (|v| + eps)`.
fn normalize_backward(v: &[f64], g: &[f64]) -> Vec<f64> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let denom = norm + NORM_EPS;
    if norm == 0.0 {
        return g.iter().map(|x| x / denom).collect();
    }
    let vg: f64 = v.iter().zip(g).map(|(a, b)| a * b).sum();
    let k = vg / (norm * denom * denom);
    v.iter().zip(g).map(|(&vi, &gi)| gi / denom - vi * k).collect()
}

/// Mean squared error.
pub fn pixel_loss<T: Real>(sr: &Tensor<T>, hr: &Tensor<T>) -> Result<f64> {
    sr.check_same("pixel_loss", hr)?;
    let sum: f64 = sr
        .data()
        .iter()
        .zip(hr.data())
        .map(|(&a, &b)| {
            let d = a.to_f64_lossy() - b.to_f64_lossy();
            d * d
        })
        .sum();
    Ok(sum / sr.len() as f64)
}

/// Mean squared error and its gradient with respect to `sr`.
pub fn mse_with_grad<T: Real>(sr: &Tensor<T>, hr: &Tensor<T>) -> Result<(f64, Tensor<T>)> {
    let loss = pixel_loss(sr, hr)?;
    let k = T::lit(2.0 / sr.len() as f64);
    let g = sr.data().iter().zip(hr.data()).map(|(&a, &b)| (a - b) * k).collect();
    Ok((loss, Tensor::from_vec(sr.shape(), g)?))
}

/// Mean absolute error and its gradient (subgradient 0 where equal).
pub fn mae_with_grad<T: Real>(sr: &Tensor<T>, hr: &Tensor<T>) -> Result<(f64, Tensor<T>)> {
    sr.check_same("mae", hr)?;
    let n = sr.len() as f64;
    let loss = sr
        .data()
        .iter()
        .zip(hr.data())
        .map(|(&a, &b)| (a - b).to_f64_lossy().abs())
        .sum::<f64>()
        / n;
    let k = T::lit(1.0 / n);
    let g = sr
        .data()
        .iter()
        .zip(hr.data())
        .map(|(&a, &b)| {
            if a > b {
                k
            } else if a < b {
                -k
            } else {
                T::zero()
            }
        })
        .collect();
    Ok((loss, Tensor::from_vec(sr.shape(), g)?))
}

pub fn weighted_total(w_pixel: f64, pixel: f64, contrastive: f64) -> f64 {
    w_pixel * pixel + (1.0 - w_pixel) * contrastive
}

/// Clips `w_pixel` into `[0, 1]`; returns `(w_pixel, w_contrastive)`.
pub fn project_weight(w_pixel: f64) -> (f64, f64) {
    let w = if w_pixel.is_nan() { 0.5 } else { w_pixel.clamp(0.0, 1.0) };
    (w, 1.0 - w)
}

/// Embeds one `[3, h, w]` pair with a single shared encoder.
pub fn embed_pair<T: Real>(
    sr: &Tensor<T>,
    hr: &Tensor<T>,
    encoder: &SiameseEncoder<T>,
) -> Result<(Embedding, Embedding)> {
    sr.check_same("embed_pair", hr)?;
    let v = encoder.forward(&Tensor::stack(&[sr, hr])?)?;
    let raw = |i: usize| -> Vec<f64> { v.sample(i).iter().map(|x| x.to_f64_lossy()).collect() };
    Ok((l2_normalize(&raw(0)), l2_normalize(&raw(1))))
}

/// Diagnostic breakdown of one loss evaluation.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossParts {
    pub total: f64,
    pub pixel: f64,
    pub contrastive: f64,
    pub w_pixel: f64,
    pub w_contrastive: f64,
    pub d_mean: f64,
    /// Embeddings whose raw norm was zero.
    pub degenerate: usize,
}

/// Loss state: the Siamese encoder and the learnable pixel weight.
#[derive(Clone, Debug)]
pub struct Pecl<T> {
    config: PeclConfig,
    pub encoder: SiameseEncoder<T>,
    pub w_pixel: Param<T>,
}

struct PairTerms {
    pixel: f64,
    contrastive: f64,
    d_mean: f64,
    degenerate: usize,
    /// `d contrastive / d raw embedding`, `[2N, d]`.
    grad: Vec<f64>,
}

impl<T: Real> Pecl<T> {
    pub fn new<R: Rng + ?Sized>(config: PeclConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let mut encoder = SiameseEncoder::new(config.encoder.clone(), config.embed_dim, rng)?;
        if let Some(path) = &config.pretrained {
            let file = read_tensor_file(path)?;
            let mut failure = None;
            encoder.visit_params_mut("", &mut |name, p| match file.get::<T>(name) {
                Ok(t) if t.shape() == p.value.shape() => p.value = t,
                Ok(t) => failure = Some(format!("{name}: shape {:?} != {:?}", t.shape(), p.value.shape())),
                Err(e) => failure = Some(e.to_string()),
            });
            if let Some(msg) = failure {
                return Err(Error::Checkpoint(format!("pretrained encoder {}: {msg}", path.display())));
            }
        }
        let w_pixel = Param::new(Tensor::scalar(T::lit(config.w_pixel_init)));
        Ok(Self {
            config,
            encoder,
            w_pixel,
        })
    }

    pub fn config(&self) -> &PeclConfig {
        &self.config
    }

    pub fn w_pixel(&self) -> f64 {
        self.w_pixel.value.data()[0].to_f64_lossy()
    }

    pub fn set_w_pixel(&mut self, w: f64) {
        self.w_pixel.value.data_mut()[0] = T::lit(w);
    }

    /// Clips the pixel weight after an optimizer step.
    pub fn project_weights(&mut self) -> (f64, f64) {
        let (w, c) = project_weight(self.w_pixel());
        self.set_w_pixel(w);
        (w, c)
    }

    fn pair_terms(&self, v: &Tensor<T>, n: usize) -> PairTerms {
        let m = self.config.margin;
        let d_dim = self.encoder.embed_dim();
        let mut grad = vec![0.0; 2 * n * d_dim];
        let (mut contrastive, mut d_sum, mut degenerate) = (0.0, 0.0, 0);
        for i in 0..n {
            let a_raw: Vec<f64> = v.sample(i).iter().map(|x| x.to_f64_lossy()).collect();
            let b_raw: Vec<f64> = v.sample(n + i).iter().map(|x| x.to_f64_lossy()).collect();
            let (a, b) = (l2_normalize(&a_raw), l2_normalize(&b_raw));
            degenerate += a.degenerate as usize + b.degenerate as usize;
            let d = distance(&a.v, &b.v, self.config.distance);
            d_sum += d;
            contrastive += contrastive_loss(d, m, self.config.contrastive_mode);
            let dc = contrastive_grad(d, m, self.config.contrastive_mode) / n as f64;
            let dd = distance_grad(&a.v, &b.v, d, self.config.distance);
            let ga: Vec<f64> = dd.iter().map(|x| x * dc).collect();
            let gb: Vec<f64> = ga.iter().map(|x| -x).collect();
            grad[i * d_dim..(i + 1) * d_dim].copy_from_slice(&normalize_backward(&a_raw, &ga));
            grad[(n + i) * d_dim..(n + i + 1) * d_dim].copy_from_slice(&normalize_backward(&b_raw, &gb));
        }
        PairTerms {
            pixel: 0.0,
            contrastive: contrastive / n as f64,
            d_mean: d_sum / n as f64,
            degenerate,
            grad,
        }
    }

    fn pair_batch(sr: &Tensor<T>, hr: &Tensor<T>) -> Result<(Tensor<T>, usize)> {
        sr.check_same("pecl", hr)?;
        let (n, c, h, w) = sr.dims4()?;
        let mut data = Vec::with_capacity(2 * sr.len());
        data.extend_from_slice(sr.data());
        data.extend_from_slice(hr.data());
        Ok((Tensor::from_vec(&[2 * n, c, h, w], data)?, n))
    }

    fn parts(&self, t: &PairTerms) -> LossParts {
        let w = self.w_pixel();
        LossParts {
            total: weighted_total(w, t.pixel, t.contrastive),
            pixel: t.pixel,
            contrastive: t.contrastive,
            w_pixel: w,
            w_contrastive: 1.0 - w,
            d_mean: t.d_mean,
            degenerate: t.degenerate,
        }
    }

    /// Loss value for `[N, 3, h, w]` batches without touching gradients.
    pub fn evaluate(&self, sr: &Tensor<T>, hr: &Tensor<T>) -> Result<LossParts> {
        let (x, n) = Self::pair_batch(sr, hr)?;
        let v = self.encoder.forward(&x)?;
        let mut t = self.pair_terms(&v, n);
        t.pixel = pixel_loss(sr, hr)?;
        Ok(self.parts(&t))
    }

    /// Loss value and `d loss / d sr`. Accumulates gradients into the
    /// encoder (unless frozen) and the pixel weight.
    pub fn loss_backward(&mut self, sr: &Tensor<T>, hr: &Tensor<T>) -> Result<(LossParts, Tensor<T>)> {
        let (x, n) = Self::pair_batch(sr, hr)?;
        let (v, trace) = self.encoder.forward_trace(&x)?;
        let mut t = self.pair_terms(&v, n);
        let (pixel, dpix) = mse_with_grad(sr, hr)?;
        t.pixel = pixel;
        let parts = self.parts(&t);
        let wc = T::lit(parts.w_contrastive);
        let dv = Tensor::from_vec(v.shape(), t.grad.iter().map(|&g| T::lit(g) * wc).collect())?;
        let dx = self.encoder.backward(&trace, &dv)?;
        if self.config.freeze_siamese {
            self.encoder.zero_grad();
        }
        let wp = T::lit(parts.w_pixel);
        let per = sr.len();
        let dsr = dpix
            .data()
            .iter()
            .zip(&dx.data()[..per])
            .map(|(&p, &c)| p * wp + c)
            .collect();
        self.w_pixel.grad.data_mut()[0] += T::lit(parts.pixel - parts.contrastive);
        Ok((parts, Tensor::from_vec(sr.shape(), dsr)?))
    }
}

impl<T: Real> Module<T> for Pecl<T> {
    fn visit_params(&self, prefix: &str, f: &mut dyn FnMut(&str, &Param<T>)) {
        self.encoder.visit_params(&join(prefix, "encoder"), f);
        f(&join(prefix, "w_pixel"), &self.w_pixel);
    }

    fn visit_params_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param<T>)) {
        self.encoder.visit_params_mut(&join(prefix, "encoder"), f);
        f(&join(prefix, "w_pixel"), &mut self.w_pixel);
    }
}
