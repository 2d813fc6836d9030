use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
use super::optim::{cosine_lr, grad_norm, scale_grads, Adam, AdamHyper};
use crate::data::{shuffled_batches, stack_pairs, IndexBatch, PatchPair};
use crate::error::{Error, Result};
use crate::metrics::{image_metrics, MetricsReport};
use crate::model::{SrModel, Upscaler};
use crate::nn::Module;
use crate::pecl::{mae_with_grad, mse_with_grad, Pecl};
use crate::tensor::Tensor;

pub const BEST_CHECKPOINT: &str = "best.safetensors";
pub const LAST_CHECKPOINT: &str = "last.safetensors";
pub const CURVES_FILE: &str = "curves.csv";
pub const TRAIN_LOG: &str = "train_log.jsonl";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    Mse,
    Mae,
    Pecl,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    #[default]
    Adam,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchedulerKind {
    #[default]
    Cosine,
}

fn default_lr() -> f64 {
    1e-4
}
fn default_one() -> u64 {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub total_iters: u64,
    pub batch_size: usize,
    #[serde(default = "default_lr")]
    pub lr_init: f64,
    #[serde(default)]
    pub optimizer: OptimizerKind,
    #[serde(default)]
    pub scheduler: SchedulerKind,
    pub val_every: u64,
    #[serde(default)]
    pub seed: u64,
    pub loss: LossKind,
    pub scale: usize,
    /// Maximum gradient norm over the generator and any trained encoder; off when absent.
    #[serde(default)]
    pub grad_clip: Option<f64>,
    /// Iterations between structured log records.
    #[serde(default = "default_one")]
    pub log_every: u64,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("train.{m}")));
        if self.total_iters == 0 {
            return bad("total_iters must be at least 1");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if !(self.lr_init > 0.0 && self.lr_init.is_finite()) {
            return bad("lr_init must be positive");
        }
        if self.val_every == 0 || self.log_every == 0 {
            return bad("val_every and log_every must be at least 1");
        }
        if !matches!(self.scale, 4 | 8) {
            return bad("scale must be 4 or 8");
        }
        if matches!(self.grad_clip, Some(c) if !(c > 0.0)) {
            return bad("grad_clip must be positive");
        }
        Ok(())
    }

    pub fn lr_at(&self, t: u64) -> f64 {
        match self.scheduler {
            SchedulerKind::Cosine => cosine_lr(self.lr_init, t, self.total_iters),
        }
    }
}

/// One row of `curves.csv`, written at every validation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub iter: u64,
    pub lr: f64,
    /// Mean training loss since the previous row.
    pub loss: f64,
    pub pixel: f64,
    pub contrastive: Option<f64>,
    pub d_mean: Option<f64>,
    pub w_pixel: Option<f64>,
    pub val_psnr: f64,
    pub val_psnr_y: f64,
    pub val_ssim: f64,
    pub val_ssim_y: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainState {
    pub iter: u64,
    pub best_val_psnr: Option<f64>,
    pub best_iter: Option<u64>,
    pub history: Vec<CurveRow>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepDiagnostics {
    pub iter: u64,
    pub lr: f64,
    pub loss: f64,
    pub pixel: f64,
    pub contrastive: Option<f64>,
    #[serde(rename = "D_mean")]
    pub d_mean: Option<f64>,
    pub w_pixel: Option<f64>,
    pub grad_norm: f64,
}

/// Generator, optional loss state and optimizer under one single-writer loop.
pub struct Trainer {
    pub config: TrainConfig,
    pub model: SrModel<f32>,
    pub pecl: Option<Pecl<f32>>,
    pub adam: Adam<f32>,
    pub state: TrainState,
}

impl Trainer {
    pub fn new(config: TrainConfig, model: SrModel<f32>, pecl: Option<Pecl<f32>>) -> Result<Self> {
        config.validate()?;
        if model.scale() != config.scale {
            return Err(Error::Config(format!(
                "train.scale {} differs from model.scale {}",
                config.scale,
                model.scale()
            )));
        }
        if (config.loss == LossKind::Pecl) != pecl.is_some() {
            return Err(Error::Config("loss state must be given exactly when train.loss = \"pecl\"".into()));
        }
        Ok(Self {
            config,
            model,
            pecl,
            adam: Adam::new(AdamHyper::default()),
            state: TrainState::default(),
        })
    }

    /// Continues from a checkpoint; optimizer moments are restored when present.
    pub fn from_checkpoint(config: TrainConfig, ckpt: Checkpoint) -> Result<Self> {
        let pecl = if config.loss == LossKind::Pecl { ckpt.pecl } else { None };
        let mut t = Self::new(config, ckpt.model, pecl)?;
        if let Some(a) = ckpt.adam {
            t.adam = a;
        }
        t.state = ckpt.state;
        Ok(t)
    }

    /// One forward/backward/update on a batch.
    pub fn train_step(&mut self, lr_batch: &Tensor<f32>, hr_batch: &Tensor<f32>, batch_ids: &[String]) -> Result<StepDiagnostics> {
        let t = self.state.iter;
        let lr = self.config.lr_at(t);
        self.model.zero_grad();
        if let Some(p) = &mut self.pecl {
            p.zero_grad();
        }
        let (sr, trace) = self.model.forward_trace(lr_batch)?;
        let (loss, pixel, parts, dsr) = match self.config.loss {
            LossKind::Mse => {
                let (l, g) = mse_with_grad(&sr, hr_batch)?;
                (l, l, None, g)
            }
            LossKind::Mae => {
                let (l, g) = mae_with_grad(&sr, hr_batch)?;
                (l, l, None, g)
            }
            LossKind::Pecl => {
                let pecl = self.pecl.as_mut().expect("checked at construction");
                let (parts, g) = pecl.loss_backward(&sr, hr_batch)?;
                (parts.total, parts.pixel, Some(parts), g)
            }
        };
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss {
                iter: t,
                lr,
                batch: batch_ids.to_vec(),
            });
        }
        self.model.backward(&trace, &dsr)?;
        // Clipping covers the networks being trained. The scalar loss weight is
        // left out: its gradient is a loss difference, not a network gradient,
        // and would otherwise dominate the norm.
        let trained_encoder = self.pecl.as_mut().filter(|p| !p.config().freeze_siamese).map(|p| &mut p.encoder);
        let mut norm = grad_norm(&self.model);
        if let Some(e) = &trained_encoder {
            norm = norm.hypot(grad_norm(&**e));
        }
        if let Some(clip) = self.config.grad_clip {
            if norm > clip {
                scale_grads(&mut self.model, clip / norm);
                if let Some(e) = trained_encoder {
                    scale_grads(e, clip / norm);
                }
            }
        }
        self.adam.begin_step();
        self.adam.update(&mut self.model, "model", lr, &|_| true);
        if let Some(p) = &mut self.pecl {
            let frozen = p.config().freeze_siamese;
            self.adam.update(p, "pecl", lr, &|n| !frozen || !n.starts_with("pecl.encoder"));
            p.project_weights();
        }
        self.state.iter += 1;
        Ok(StepDiagnostics {
            iter: self.state.iter,
            lr,
            loss,
            pixel,
            contrastive: parts.as_ref().map(|p| p.contrastive),
            d_mean: parts.as_ref().map(|p| p.d_mean),
            w_pixel: self.pecl.as_ref().map(|p| p.w_pixel()),
            grad_norm: norm,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        save_checkpoint(path, &self.model, self.pecl.as_ref(), Some(&self.adam), &self.state)
    }
}

/// Batch plan for iteration `t`: the epoch's order depends only on `(seed, epoch)`,
/// so training resumed at any iteration sees the same data.
pub struct BatchSchedule {
    n: usize,
    batch_size: usize,
    seed: u64,
    cached: Option<(u64, Vec<IndexBatch>)>,
}

impl BatchSchedule {
    pub fn new(n: usize, batch_size: usize, seed: u64) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidArgument("no training pairs".into()));
        }
        if batch_size == 0 {
            return Err(Error::InvalidArgument("batch size must be at least 1".into()));
        }
        Ok(Self {
            n,
            batch_size,
            seed,
            cached: None,
        })
    }

    pub fn batches_per_epoch(&self) -> u64 {
        self.n.div_ceil(self.batch_size) as u64
    }

    pub fn batch(&mut self, t: u64) -> Result<&IndexBatch> {
        let bpe = self.batches_per_epoch();
        let epoch = t / bpe;
        if self.cached.as_ref().map(|c| c.0) != Some(epoch) {
            let seed = self.seed ^ epoch.wrapping_mul(0x9E37_79B9_7F4A_7C15);
            self.cached = Some((epoch, shuffled_batches(self.n, self.batch_size, seed)?));
        }
        Ok(&self.cached.as_ref().expect("filled above").1[(t % bpe) as usize])
    }
}

/// Fidelity metrics of `upscaler` over validation pairs (outputs clamped).
pub fn validate(upscaler: &dyn Upscaler, pairs: &[PatchPair], batch_size: usize) -> Result<MetricsReport> {
    if pairs.is_empty() {
        return Err(Error::InvalidArgument("validation set is empty".into()));
    }
    let mut per_image = Vec::with_capacity(pairs.len());
    for chunk in pairs.chunks(batch_size.max(1)) {
        let (lr, _) = stack_pairs(chunk.iter())?;
        let sr = upscaler.upscale(&lr)?;
        for (i, p) in chunk.iter().enumerate() {
            per_image.push(image_metrics(p.origin.id(), &sr.sample_tensor(i), &p.hr, None)?);
        }
    }
    MetricsReport::from_images(per_image, None)
}

#[derive(Clone, Debug, Default)]
pub struct FitOptions {
    /// Continue from `last.safetensors` in the run directory when present.
    pub resume: bool,
    /// Stop early after this iteration, as if interrupted.
    pub stop_after: Option<u64>,
}

#[derive(Default)]
struct Running {
    n: u64,
    loss: f64,
    pixel: f64,
    contrastive: f64,
    d_mean: f64,
}

fn truncate_log(path: &Path, keep_through: u64) -> Result<()> {
    if !path.exists() {
        return Ok(());
    }
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut kept = String::new();
    for line in BufReader::new(f).lines() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let v: serde_json::Value = serde_json::from_str(&line)?;
        if v["iter"].as_u64().is_some_and(|i| i <= keep_through) {
            kept.push_str(&line);
            kept.push('\n');
        }
    }
    std::fs::write(path, kept).map_err(|e| Error::io(path, e))
}

pub fn write_curves(path: impl AsRef<Path>, rows: &[CurveRow], with_pecl: bool) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["iter", "lr", "loss", "pixel"];
    if with_pecl {
        header.extend(["contrastive", "d_mean", "w_pixel"]);
    }
    header.extend(["val_psnr", "val_psnr_y", "val_ssim", "val_ssim_y"]);
    w.write_record(&header)?;
    let opt = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
    for r in rows {
        let mut rec = vec![r.iter.to_string(), r.lr.to_string(), r.loss.to_string(), r.pixel.to_string()];
        if with_pecl {
            rec.extend([opt(r.contrastive), opt(r.d_mean), opt(r.w_pixel)]);
        }
        rec.extend([r.val_psnr, r.val_psnr_y, r.val_ssim, r.val_ssim_y].map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Runs the training loop to `total_iters`, validating every `val_every`
/// iterations, keeping the best-PSNR checkpoint and writing curves and logs.
pub fn fit(trainer: &mut Trainer, train: &[PatchPair], val: &[PatchPair], run_dir: impl AsRef<Path>, opts: &FitOptions) -> Result<TrainState> {
    let dir = run_dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    if val.is_empty() {
        return Err(Error::InvalidArgument("validation set is empty".into()));
    }
    let log_path = dir.join(TRAIN_LOG);
    let last = dir.join(LAST_CHECKPOINT);
    if opts.resume && last.exists() {
        let ckpt = load_checkpoint(&last)?;
        let config = trainer.config.clone();
        *trainer = Trainer::from_checkpoint(config, ckpt)?;
        truncate_log(&log_path, trainer.state.iter)?;
        log::info!("resumed from {} at iteration {}", last.display(), trainer.state.iter);
    } else if log_path.exists() {
        std::fs::remove_file(&log_path).map_err(|e| Error::io(&log_path, e))?;
    }
    let mut log = BufWriter::new(
        OpenOptions::new()
            .create(true)
            .append(true)
            .open(&log_path)
            .map_err(|e| Error::io(&log_path, e))?,
    );
    let cfg = trainer.config.clone();
    let with_pecl = cfg.loss == LossKind::Pecl;
    let mut schedule = BatchSchedule::new(train.len(), cfg.batch_size, cfg.seed)?;
    let mut running = Running::default();
    let stop = opts.stop_after.unwrap_or(cfg.total_iters).min(cfg.total_iters);
    while trainer.state.iter < stop {
        let t = trainer.state.iter;
        let batch = schedule.batch(t)?;
        let (lr_t, hr_t) = stack_pairs(batch.indices.iter().map(|&i| &train[i]))?;
        let ids: Vec<String> = batch.indices.iter().map(|&i| train[i].origin.id()).collect();
        let d = trainer.train_step(&lr_t, &hr_t, &ids)?;
        running.n += 1;
        running.loss += d.loss;
        running.pixel += d.pixel;
        running.contrastive += d.contrastive.unwrap_or(0.0);
        running.d_mean += d.d_mean.unwrap_or(0.0);
        if d.iter % cfg.log_every == 0 {
            serde_json::to_writer(&mut log, &d)?;
            writeln!(log).map_err(|e| Error::io(&log_path, e))?;
        }
        if d.iter % cfg.val_every == 0 || d.iter == cfg.total_iters {
            let report = validate(&trainer.model, val, cfg.batch_size)?;
            let med = |k: &str| report.median(k).unwrap_or(f64::NAN);
            let n = running.n.max(1) as f64;
            let row = CurveRow {
                iter: d.iter,
                lr: d.lr,
                loss: running.loss / n,
                pixel: running.pixel / n,
                contrastive: with_pecl.then_some(running.contrastive / n),
                d_mean: with_pecl.then_some(running.d_mean / n),
                w_pixel: d.w_pixel,
                val_psnr: med("psnr"),
                val_psnr_y: med("psnr_y"),
                val_ssim: med("ssim"),
                val_ssim_y: med("ssim_y"),
            };
            running = Running::default();
            log::info!(
                "iter {} loss {:.6} val psnr {:.3} dB ssim {:.4}",
                row.iter, row.loss, row.val_psnr, row.val_ssim
            );
            let improved = trainer.state.best_val_psnr.is_none_or(|b| row.val_psnr > b);
            trainer.state.history.push(row.clone());
            if improved {
                trainer.state.best_val_psnr = Some(row.val_psnr);
                trainer.state.best_iter = Some(row.iter);
                save_checkpoint(dir.join(BEST_CHECKPOINT), &trainer.model, trainer.pecl.as_ref(), None, &trainer.state)?;
            }
            trainer.save(&last)?;
            write_curves(dir.join(CURVES_FILE), &trainer.state.history, with_pecl)?;
            log.flush().map_err(|e| Error::io(&log_path, e))?;
        }
    }
    log.flush().map_err(|e| Error::io(&log_path, e))?;
    Ok(trainer.state.clone())
}
