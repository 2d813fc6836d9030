use std::path::{Path, PathBuf};

use super::plots::{plot_curves_log_x, plot_gflops_scatter, published_scatter_entries, write_series_csv, CurveSeries, ScatterEntry};
use crate::error::{Error, Result};
use crate::metrics::contrast_series;
use crate::model::count_params_flops;
use crate::train::{checkpoint_model_config, CurveRow, BEST_CHECKPOINT, CURVES_FILE};

/// Input size used for complexity figures, matching the published measurements.
pub const COMPLEXITY_INPUT: (usize, usize) = (64, 64);

/// A completed run directory's validation history.
#[derive(Clone, Debug)]
pub struct RunCurves {
    pub name: String,
    pub dir: PathBuf,
    pub rows: Vec<CurveRow>,
    /// Whether the run logged embedding-loss columns.
    pub pecl: bool,
}

impl RunCurves {
    pub fn psnr_series(&self) -> Result<CurveSeries> {
        CurveSeries::new(self.name.clone(), self.rows.iter().map(|r| (r.iter, r.val_psnr)).collect())
    }

    pub fn best_psnr(&self) -> Option<f64> {
        self.rows.iter().map(|r| r.val_psnr).fold(None, |a, v| Some(a.map_or(v, |a: f64| a.max(v))))
    }
}

pub fn read_curves(path: impl AsRef<Path>) -> Result<(Vec<CurveRow>, bool)> {
    let mut r = csv::Reader::from_path(path.as_ref())?;
    let pecl = r.headers()?.iter().any(|h| h == "contrastive");
    let rows = r.deserialize().collect::<std::result::Result<Vec<CurveRow>, _>>()?;
    Ok((rows, pecl))
}

/// Reads `curves.csv` from a run directory; `None` when the run has none.
pub fn load_run(dir: impl AsRef<Path>) -> Result<Option<RunCurves>> {
    let dir = dir.as_ref();
    let path = dir.join(CURVES_FILE);
    if !path.exists() {
        return Ok(None);
    }
    let (rows, pecl) = read_curves(&path)?;
    let name = dir.file_name().map_or_else(|| dir.display().to_string(), |n| n.to_string_lossy().into_owned());
    Ok(Some(RunCurves {
        name,
        dir: dir.to_path_buf(),
        rows,
        pecl,
    }))
}

/// Contrast of every embedding-loss run against one baseline run.
pub fn contrast_curves(runs: &[&RunCurves], base: &RunCurves) -> Result<Vec<CurveSeries>> {
    let b: Vec<(u64, f64)> = base.rows.iter().map(|r| (r.iter, r.val_psnr)).collect();
    runs.iter()
        .map(|r| {
            let pts: Vec<(u64, f64)> = r.rows.iter().map(|x| (x.iter, x.val_psnr)).collect();
            CurveSeries::new(format!("{} vs {}", r.name, base.name), contrast_series(&pts, &b)?)
        })
        .collect()
}

/// What `emit_plots` wrote and what it had to skip.
#[derive(Clone, Debug, Default)]
pub struct PlotOutputs {
    pub files: Vec<PathBuf>,
    pub notices: Vec<String>,
}

/// Draws the PSNR-vs-iteration curves, the complexity scatter (published
/// entries plus every run with a best checkpoint) and contrast curves of
/// embedding-loss runs against each pixel-loss run. Each image has a CSV twin.
pub fn emit_plots(run_dirs: &[PathBuf], out_dir: impl AsRef<Path>) -> Result<PlotOutputs> {
    let out = out_dir.as_ref();
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let mut res = PlotOutputs::default();
    let mut runs = Vec::new();
    for d in run_dirs {
        match load_run(d)? {
            Some(r) if !r.rows.is_empty() => runs.push(r),
            _ => res.notices.push(format!("{}: no {CURVES_FILE} rows, skipped", d.display())),
        }
    }
    if runs.is_empty() {
        res.notices.push("no run has curves; PSNR and contrast plots skipped".into());
    } else {
        let series = runs.iter().map(RunCurves::psnr_series).collect::<Result<Vec<_>>>()?;
        let (svg, csv) = (out.join("psnr_vs_iter.svg"), out.join("psnr_vs_iter.csv"));
        write_series_csv(&series, &csv)?;
        plot_curves_log_x(&series, "Validation PSNR", "PSNR (dB)", &svg)?;
        res.files.extend([svg, csv]);
    }

    let mut entries = published_scatter_entries();
    for r in &runs {
        let ckpt = r.dir.join(BEST_CHECKPOINT);
        match (checkpoint_model_config(&ckpt), r.best_psnr()) {
            (Ok(cfg), Some(p)) => entries.push(ScatterEntry::new(&r.name, count_params_flops(&cfg, COMPLEXITY_INPUT).gmacs(), p)),
            _ => res.notices.push(format!("{}: no readable best checkpoint, left out of the scatter", r.name)),
        }
    }
    let (svg, csv) = (out.join("gflops_vs_psnr.svg"), out.join("gflops_vs_psnr.csv"));
    plot_gflops_scatter(&entries, &svg, &csv)?;
    res.files.extend([svg, csv]);

    let pecl: Vec<&RunCurves> = runs.iter().filter(|r| r.pecl).collect();
    let bases: Vec<&RunCurves> = runs.iter().filter(|r| !r.pecl).collect();
    if pecl.is_empty() || bases.is_empty() {
        res.notices.push("contrast curves need at least one embedding-loss run and one pixel-loss run; skipped".into());
    }
    for base in bases {
        if pecl.is_empty() {
            break;
        }
        let series = contrast_curves(&pecl, base)?;
        let stem = format!("contrast_vs_{}", base.name);
        let (svg, csv) = (out.join(format!("{stem}.svg")), out.join(format!("{stem}.csv")));
        write_series_csv(&series, &csv)?;
        plot_curves_log_x(&series, &format!("Contrast vs {}", base.name), "contrast", &svg)?;
        res.files.extend([svg, csv]);
    }
    for n in &res.notices {
        log::warn!("{n}");
    }
    Ok(res)
}
