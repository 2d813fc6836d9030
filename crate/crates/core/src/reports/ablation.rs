use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::analysis::{contrast_curves, load_run};
use super::eval::evaluate_pairs;
use super::plots::{plot_curves_log_x, write_series_csv};
use crate::data::PatchPair;
use crate::error::{Error, Result};
use crate::metrics::{LpipsAdapter, MetricsReport};
use crate::model::{SrModel, SrModelConfig};
use crate::pecl::{Distance, Pecl, PeclConfig};
use crate::train::{fit, load_checkpoint, FitOptions, LossKind, TrainConfig, Trainer, BEST_CHECKPOINT};

/// The embedding-dimension × distance sweep with pixel-loss baselines.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AblationConfig {
    /// Shared schedule; `loss` is overridden per run.
    pub train: TrainConfig,
    pub model: SrModelConfig,
    /// Template for the embedding-loss runs; `embed_dim` and `distance` are overridden.
    pub pecl: PeclConfig,
    pub dims: Vec<usize>,
    pub distances: Vec<Distance>,
    pub baselines: Vec<LossKind>,
}

impl AblationConfig {
    pub fn full_grid(train: TrainConfig, model: SrModelConfig, pecl: PeclConfig) -> Self {
        Self {
            train,
            model,
            pecl,
            dims: vec![64, 128, 256, 512],
            distances: vec![Distance::Manhattan, Distance::Euclidean],
            baselines: vec![LossKind::Mse, LossKind::Mae],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dims.is_empty() || self.distances.is_empty() {
            return Err(Error::Config("ablation needs at least one dimension and one distance".into()));
        }
        if self.baselines.contains(&LossKind::Pecl) {
            return Err(Error::Config("ablation baselines must be pixel losses".into()));
        }
        for &d in &self.dims {
            PeclConfig {
                embed_dim: d,
                ..self.pecl.clone()
            }
            .validate()?;
        }
        self.model.validate()?;
        self.train.validate()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub run: String,
    pub loss: LossKind,
    pub distance: Option<Distance>,
    pub embed_dim: Option<usize>,
    pub best_val_psnr: Option<f64>,
    pub test: MetricsReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub rows: Vec<AblationRow>,
    pub files: Vec<PathBuf>,
}

fn loss_name(l: LossKind) -> &'static str {
    match l {
        LossKind::Mse => "mse",
        LossKind::Mae => "mae",
        LossKind::Pecl => "pecl",
    }
}

fn cell(r: &MetricsReport, key: &str) -> String {
    match r.aggregate.get(key) {
        Some(s) if key.starts_with("psnr") => format!("{:.2} (± {:.2})", s.median, s.std),
        Some(s) => format!("{:.4} (± {:.2})", s.median, s.std),
        None => "n/a".into(),
    }
}

const COLUMNS: [&str; 5] = ["psnr", "psnr_y", "ssim", "ssim_y", "lpips"];

impl AblationReport {
    /// Markdown tables: one block per distance with a row per embedding size,
    /// followed by the pixel-loss baselines.
    pub fn markdown(&self) -> String {
        let mut s = String::new();
        let header = "| Emb. dim. | PSNR | PSNRy | SSIM | SSIMy | LPIPS |\n|---|---|---|---|---|---|\n";
        let mut distances: Vec<Distance> = self.rows.iter().filter_map(|r| r.distance).collect();
        distances.dedup();
        for d in distances {
            let _ = writeln!(s, "### {} distance\n", d.name());
            s.push_str(header);
            for r in self.rows.iter().filter(|r| r.distance == Some(d)) {
                let cells: Vec<String> = COLUMNS.iter().map(|k| cell(&r.test, k)).collect();
                let _ = writeln!(s, "| {} | {} |", r.embed_dim.unwrap_or(0), cells.join(" | "));
            }
            s.push('\n');
        }
        let bases: Vec<&AblationRow> = self.rows.iter().filter(|r| r.loss != LossKind::Pecl).collect();
        if !bases.is_empty() {
            s.push_str("### Pixel-loss baselines\n\n| Loss | PSNR | PSNRy | SSIM | SSIMy | LPIPS |\n|---|---|---|---|---|---|\n");
            for r in bases {
                let cells: Vec<String> = COLUMNS.iter().map(|k| cell(&r.test, k)).collect();
                let _ = writeln!(s, "| {} | {} |", loss_name(r.loss).to_uppercase(), cells.join(" | "));
            }
        }
        s
    }

    /// Numeric twin of the tables: `run,loss,distance,embed_dim,<metric>,<metric>_std,...`.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["run".to_string(), "loss".into(), "distance".into(), "embed_dim".into()];
        for k in COLUMNS {
            header.push(k.to_string());
            header.push(format!("{k}_std"));
        }
        w.write_record(&header)?;
        for r in &self.rows {
            let mut rec = vec![
                r.run.clone(),
                loss_name(r.loss).into(),
                r.distance.map_or(String::new(), |d| d.name().into()),
                r.embed_dim.map_or(String::new(), |d| d.to_string()),
            ];
            for k in COLUMNS {
                match r.test.aggregate.get(k) {
                    Some(s) => rec.extend([s.median.to_string(), s.std.to_string()]),
                    None => rec.extend([String::new(), String::new()]),
                }
            }
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

struct RunSpec {
    name: String,
    loss: LossKind,
    pecl: Option<PeclConfig>,
}

/// Trains every sweep member plus baselines from the same initial generator,
/// evaluates each best checkpoint on `test`, and writes the tables and the
/// contrast curves of each distance against each baseline into `out_dir`.
pub fn run_ablation(
    cfg: &AblationConfig,
    train: &[PatchPair],
    val: &[PatchPair],
    test: &[PatchPair],
    out_dir: impl AsRef<Path>,
    lpips: Option<&dyn LpipsAdapter>,
) -> Result<AblationReport> {
    cfg.validate()?;
    let out = out_dir.as_ref();
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let mut specs: Vec<RunSpec> = cfg
        .baselines
        .iter()
        .map(|&l| RunSpec {
            name: loss_name(l).into(),
            loss: l,
            pecl: None,
        })
        .collect();
    for &dist in &cfg.distances {
        for &d in &cfg.dims {
            specs.push(RunSpec {
                name: format!("pecl_{}_{d}", dist.name()),
                loss: LossKind::Pecl,
                pecl: Some(PeclConfig {
                    embed_dim: d,
                    distance: dist,
                    ..cfg.pecl.clone()
                }),
            });
        }
    }

    let mut rows = Vec::with_capacity(specs.len());
    for spec in &specs {
        log::info!("ablation run {}", spec.name);
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.train.seed);
        let model = SrModel::new(cfg.model.clone(), &mut rng)?;
        let mut loss_rng = ChaCha8Rng::seed_from_u64(cfg.train.seed.wrapping_add(1));
        let pecl = spec.pecl.clone().map(|p| Pecl::new(p, &mut loss_rng)).transpose()?;
        let tc = TrainConfig {
            loss: spec.loss,
            ..cfg.train.clone()
        };
        let dir = out.join(&spec.name);
        let mut trainer = Trainer::new(tc, model, pecl)?;
        let state = fit(&mut trainer, train, val, &dir, &FitOptions::default())?;
        let best = load_checkpoint(dir.join(BEST_CHECKPOINT))?;
        let test_report = evaluate_pairs(&best.model, test, lpips, &spec.name)?;
        rows.push(AblationRow {
            run: spec.name.clone(),
            loss: spec.loss,
            distance: spec.pecl.as_ref().map(|p| p.distance),
            embed_dim: spec.pecl.as_ref().map(|p| p.embed_dim),
            best_val_psnr: state.best_val_psnr,
            test: test_report,
        });
    }

    let mut report = AblationReport { rows, files: Vec::new() };
    let runs = specs
        .iter()
        .map(|s| load_run(out.join(&s.name))?.ok_or_else(|| Error::InvalidArgument(format!("run {} left no curves", s.name))))
        .collect::<Result<Vec<_>>>()?;
    for (bi, &base) in cfg.baselines.iter().enumerate() {
        for &dist in &cfg.distances {
            let members: Vec<_> = specs
                .iter()
                .zip(&runs)
                .filter(|(s, _)| s.pecl.as_ref().is_some_and(|p| p.distance == dist))
                .map(|(_, r)| r)
                .collect();
            let series = contrast_curves(&members, &runs[bi])?;
            let stem = format!("contrast_{}_{}", dist.name(), loss_name(base));
            let (svg, csv) = (out.join(format!("{stem}.svg")), out.join(format!("{stem}.csv")));
            write_series_csv(&series, &csv)?;
            let title = format!("PECL ({}) vs {}", dist.name(), loss_name(base).to_uppercase());
            plot_curves_log_x(&series, &title, "contrast", &svg)?;
            report.files.extend([svg, csv]);
        }
    }
    let (md, csv, json) = (out.join("ablation.md"), out.join("ablation.csv"), out.join("ablation.json"));
    std::fs::write(&md, report.markdown()).map_err(|e| Error::io(&md, e))?;
    report.write_csv(&csv)?;
    report.files.extend([md, csv, json.clone()]);
    std::fs::write(&json, serde_json::to_string_pretty(&report)?).map_err(|e| Error::io(&json, e))?;
    Ok(report)
}
