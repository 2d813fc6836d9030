use std::fmt;
use std::path::Path;

use anyhow::{bail, Context, Result};
use platesr_core::data::image_io::{load_rgb, save_rgb};
use platesr_core::data::{build_pairs, load_manifest, synth, DegradationSpec, ImageRecord, Split};
use platesr_core::metrics::CommandLpips;
use platesr_core::model::{count_params_flops, BicubicUpscaler, SrModelConfig, Upscaler};
use platesr_core::recognition::{run_ocr_eval, CommandOcr};
use platesr_core::reports::{
    config_diff, emit_plots, evaluate_images, export_embeddings, ocr_samples, prepare_test_images, stitched_infer,
    RunConfig, TsneConfig,
};
use platesr_core::train::{fit, load_checkpoint, FitOptions, LossKind};
use serde::Serialize;

use crate::{EvalArgs, ExportArgs, FlopsArgs, InferArgs, PlotsArgs, Preset, SynthArgs, TrainArgs, TrainOverrides};

/// Name of the frozen config written into every run directory.
pub const CONFIG_SNAPSHOT: &str = "config.toml";
/// Arguments of non-training commands, recorded next to their outputs.
pub const COMMAND_SNAPSHOT: &str = "command.json";

/// A bad invocation that parsing alone could not detect.
#[derive(Debug)]
pub struct Usage(pub String);

impl fmt::Display for Usage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

pub fn exit_code(e: &anyhow::Error) -> u8 {
    let usage = e.chain().any(|c| {
        c.is::<Usage>() || matches!(c.downcast_ref::<platesr_core::Error>(), Some(platesr_core::Error::Config(_)))
    });
    if usage {
        1
    } else {
        2
    }
}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    Usage(msg.into()).into()
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn write_command_snapshot<A: Serialize>(dir: &Path, command: &str, args: &A) -> Result<()> {
    create_dir(dir)?;
    let doc = serde_json::json!({
        "command": command,
        "version": env!("CARGO_PKG_VERSION"),
        "args": args,
    });
    let path = dir.join(COMMAND_SNAPSHOT);
    std::fs::write(&path, serde_json::to_string_pretty(&doc)?).with_context(|| format!("writing {}", path.display()))
}

fn print_json<T: Serialize>(v: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(v)?);
    Ok(())
}

fn upscaler(checkpoint: Option<&Path>, bicubic: bool, scale: Option<usize>) -> Result<Box<dyn Upscaler>> {
    match (checkpoint, bicubic, scale) {
        (Some(p), false, _) => {
            let ck = load_checkpoint(p).with_context(|| format!("loading {}", p.display()))?;
            if let Some(s) = scale.filter(|&s| s != ck.model.scale()) {
                return Err(usage(format!("--scale {s} disagrees with the checkpoint's x{}", ck.model.scale())));
            }
            Ok(Box::new(ck.model))
        }
        (None, true, Some(s)) => {
            if s < 2 {
                return Err(usage(format!("--scale must be at least 2, got {s}")));
            }
            Ok(Box::new(BicubicUpscaler(s)))
        }
        _ => Err(usage("give either --checkpoint or --bicubic with --scale")),
    }
}

fn split_records(manifest: &Path, split: Split) -> Result<Vec<ImageRecord>> {
    if !manifest.exists() {
        return Err(usage(format!("--manifest: {} does not exist", manifest.display())));
    }
    let records: Vec<ImageRecord> = load_manifest(manifest)?.split(split).cloned().collect();
    if records.is_empty() {
        bail!("{} has no {split} records", manifest.display());
    }
    Ok(records)
}

fn apply_overrides(cfg: &mut RunConfig, o: &TrainOverrides) -> Result<()> {
    let t = &mut cfg.train;
    t.total_iters = o.total_iters.unwrap_or(t.total_iters);
    t.batch_size = o.batch_size.unwrap_or(t.batch_size);
    t.lr_init = o.lr_init.unwrap_or(t.lr_init);
    t.val_every = o.val_every.unwrap_or(t.val_every);
    t.seed = o.seed.unwrap_or(t.seed);
    t.log_every = o.log_every.unwrap_or(t.log_every);
    if o.grad_clip.is_some() {
        t.grad_clip = o.grad_clip;
    }
    if let Some(l) = &o.loss {
        t.loss = serde_json::from_value(serde_json::Value::String(l.clone()))
            .map_err(|_| usage(format!("--loss must be mse, mae or pecl, got {l:?}")))?;
    }
    cfg.validate()?;
    Ok(())
}

pub fn train(a: TrainArgs) -> Result<()> {
    let mut cfg = RunConfig::load(&a.config)?;
    if let Some(d) = a.out_dir {
        cfg.out_dir = d;
    }
    apply_overrides(&mut cfg, &a.overrides)?;
    cfg.check_paths()?;
    let snapshot = cfg.out_dir.join(CONFIG_SNAPSHOT);
    if a.resume && snapshot.exists() {
        let frozen = RunConfig::load(&snapshot)?;
        let mut differs = config_diff(&frozen, &cfg)?;
        differs.retain(|k| k != "out_dir" && !k.starts_with("data."));
        if !differs.is_empty() {
            return Err(usage(format!("resume config differs from {}: {}", snapshot.display(), differs.join(", "))));
        }
    }
    let train = cfg.pairs(Split::Train)?;
    let val = cfg.pairs(Split::Val)?;
    log::info!("{} training and {} validation patches", train.len(), val.len());

    create_dir(&cfg.out_dir)?;
    std::fs::write(&snapshot, cfg.to_toml_string()?).with_context(|| format!("writing {}", snapshot.display()))?;
    let mut trainer = cfg.trainer()?;
    let opts = FitOptions {
        resume: a.resume,
        stop_after: None,
    };
    let state = fit(&mut trainer, &train, &val, &cfg.out_dir, &opts)?;
    print_json(&serde_json::json!({
        "out_dir": cfg.out_dir,
        "iterations": state.iter,
        "best_iter": state.best_iter,
        "best_val_psnr": state.best_val_psnr,
        "loss": match cfg.train.loss {
            LossKind::Mse => "mse",
            LossKind::Mae => "mae",
            LossKind::Pecl => "pecl",
        },
    }))
}

pub fn eval(a: EvalArgs) -> Result<()> {
    let up = upscaler(a.checkpoint.as_deref(), a.bicubic, a.scale)?;
    let records = split_records(&a.manifest, Split::Test)?;
    write_command_snapshot(&a.out, "eval", &a)?;
    let images = prepare_test_images(&records, &DegradationSpec::new(up.scale()))?;
    let label = if a.bicubic { "bicubic" } else { "model" };
    let lpips = a.lpips_cmd.as_ref().map(|p| CommandLpips {
        program: p.clone(),
        args: a.lpips_args.clone(),
    });
    let report = evaluate_images(up.as_ref(), &images, lpips.as_ref().map(|l| l as _), label)?;
    report.write_json(a.out.join("metrics.json"))?;
    let mut summary = serde_json::json!({ "label": label, "images": images.len(), "metrics": report.formatted() });

    if let Some(program) = &a.ocr_cmd {
        let samples = ocr_samples(&images);
        if samples.is_empty() {
            log::warn!("no test record carries plate_text; recognition skipped");
        } else {
            let ocr = CommandOcr {
                program: program.clone(),
                args: a.ocr_args.clone(),
                version: None,
            };
            let rec = run_ocr_eval(up.as_ref(), &samples, &ocr)?;
            rec.write_json(a.out.join("recognition.json"))?;
            summary["recognition"] = serde_json::json!({ "ema": rec.ema, "cer": rec.cer, "plates": samples.len() });
        }
    }
    print_json(&summary)
}

pub fn infer(a: InferArgs) -> Result<()> {
    let up = upscaler(a.checkpoint.as_deref(), a.bicubic, a.scale)?;
    let img = load_rgb(&a.input)?;
    let sr = match a.tile {
        Some(t) => stitched_infer(up.as_ref(), &img, t, a.overlap)?,
        None => {
            let (c, h, w) = img.dims3()?;
            up.upscale(&img.reshape(&[1, c, h, w])?)?.sample_tensor(0)
        }
    };
    if let Some(dir) = a.output.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    save_rgb(&sr, &a.output)?;
    let (_, h, w) = sr.dims3()?;
    print_json(&serde_json::json!({ "output": a.output, "height": h, "width": w }))
}

pub fn plots(a: PlotsArgs) -> Result<()> {
    write_command_snapshot(&a.out, "plots", &a)?;
    let res = emit_plots(&a.runs, &a.out)?;
    for n in &res.notices {
        log::warn!("{n}");
    }
    print_json(&serde_json::json!({ "files": res.files, "notices": res.notices }))
}

pub fn export(a: ExportArgs) -> Result<()> {
    let ck = load_checkpoint(&a.checkpoint).with_context(|| format!("loading {}", a.checkpoint.display()))?;
    let scale = ck.model.scale();
    if a.patch_size == 0 || a.patch_size % scale != 0 {
        return Err(usage(format!("--patch-size must be a positive multiple of {scale}")));
    }
    let Some(pecl) = ck.pecl.as_ref() else {
        bail!("{} was not trained with the embedding loss and has no encoder", a.checkpoint.display());
    };
    let records = split_records(&a.manifest, Split::Test)?;
    write_command_snapshot(&a.out, "export-embeddings", &a)?;
    let mut pairs = build_pairs(&records, &DegradationSpec::new(scale), a.patch_size, None)?;
    if let Some(n) = a.limit {
        pairs.truncate(n);
    }
    if pairs.is_empty() {
        bail!("no {}px test patches could be extracted", a.patch_size);
    }
    let table = export_embeddings(&ck.model, Some(&pecl.encoder), &pairs)?;
    let csv = a.out.join("embeddings.csv");
    table.write_csv(&csv)?;
    let mut files = vec![csv];
    if a.tsne {
        let cfg = TsneConfig {
            perplexity: a.perplexity,
            ..TsneConfig::default()
        };
        let coords = table.project(&cfg)?;
        let path = a.out.join("tsne.csv");
        table.write_projection_csv(&coords, &path)?;
        files.push(path);
    }
    print_json(&serde_json::json!({ "rows": table.rows.len(), "files": files }))
}

pub fn count_flops(a: FlopsArgs) -> Result<()> {
    let model = match &a.config {
        Some(p) => RunConfig::load(p)?.model,
        None => match a.preset {
            Preset::Reference => SrModelConfig::reference(a.scale),
            Preset::Tiny => SrModelConfig::tiny(a.scale),
        },
    };
    model.validate()?;
    if a.height == 0 || a.width == 0 {
        return Err(usage("--height and --width must be positive"));
    }
    let c = count_params_flops(&model, (a.height, a.width));
    print_json(&serde_json::json!({
        "scale": model.scale,
        "input": [a.height, a.width],
        "params": c.params,
        "macs": c.macs,
        "bias_adds": c.bias_adds,
        "gmacs": c.gmacs(),
        "gflops": c.gflops(),
    }))
}

pub fn synth(a: SynthArgs) -> Result<()> {
    let manifest = synth::write_synthetic_dataset(
        &a.out,
        &[(Split::Train, a.train), (Split::Val, a.val), (Split::Test, a.test)],
        a.height,
        a.width,
        a.seed,
    )?;
    print_json(&serde_json::json!({ "manifest": manifest, "images": a.train + a.val + a.test }))
}
