use std::path::Path;

use plotters::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A named series of `(iteration, value)` points.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveSeries {
    pub name: String,
    pub points: Vec<(u64, f64)>,
}

impl CurveSeries {
    /// Iterations must be strictly increasing.
    pub fn new(name: impl Into<String>, points: Vec<(u64, f64)>) -> Result<Self> {
        let name = name.into();
        if points.windows(2).any(|w| w[0].0 >= w[1].0) {
            return Err(Error::InvalidArgument(format!("series {name}: iterations must strictly increase")));
        }
        Ok(Self { name, points })
    }
}

/// One marker of the complexity/quality scatter.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScatterEntry {
    pub name: String,
    pub gflops: f64,
    pub psnr: f64,
}

impl ScatterEntry {
    pub fn new(name: &str, gflops: f64, psnr: f64) -> Self {
        Self {
            name: name.to_string(),
            gflops,
            psnr,
        }
    }
}

/// Published complexity and CCPD PSNR of the compared methods and the reference model.
pub fn published_scatter_entries() -> Vec<ScatterEntry> {
    vec![
        ScatterEntry::new("SRCNN", 0.28, 19.57),
        ScatterEntry::new("MSRN", 15.11, 19.78),
        ScatterEntry::new("ESPCN", 14.50, 23.52),
        ScatterEntry::new("ESRGAN", 17.64, 18.76),
        ScatterEntry::new("TBSRN", 18.49, 23.76),
        ScatterEntry::new("SwinIR", 46.45, 23.56),
        ScatterEntry::new("Ours (published)", 13.35, 25.13),
    ]
}

/// Largest marker radius in pixels; others scale with `sqrt(gflops)`.
pub const MAX_MARKER_RADIUS: f64 = 30.0;

pub fn marker_radii(entries: &[ScatterEntry]) -> Vec<f64> {
    let max = entries.iter().map(|e| e.gflops.max(0.0).sqrt()).fold(0.0, f64::max);
    entries
        .iter()
        .map(|e| if max > 0.0 { MAX_MARKER_RADIUS * e.gflops.max(0.0).sqrt() / max } else { 0.0 })
        .collect()
}

fn plot_err(e: impl std::fmt::Display) -> Error {
    Error::InvalidArgument(format!("plotting failed: {e}"))
}

const PALETTE: [RGBColor; 8] = [
    RGBColor(31, 119, 180),
    RGBColor(255, 127, 14),
    RGBColor(44, 160, 44),
    RGBColor(214, 39, 40),
    RGBColor(148, 103, 189),
    RGBColor(140, 86, 75),
    RGBColor(227, 119, 194),
    RGBColor(127, 127, 127),
];

fn bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    let pad = ((hi - lo) * 0.05).max(1e-3);
    (lo - pad, hi + pad)
}

/// Long-format table `series,iter,value`.
pub fn write_series_csv(series: &[CurveSeries], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["series", "iter", "value"])?;
    for s in series {
        for (i, v) in &s.points {
            w.write_record([s.name.clone(), i.to_string(), v.to_string()])?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_series_csv(path: impl AsRef<Path>) -> Result<Vec<CurveSeries>> {
    let mut r = csv::Reader::from_path(path.as_ref())?;
    let mut out: Vec<CurveSeries> = Vec::new();
    for rec in r.deserialize() {
        let (name, iter, value): (String, u64, f64) = rec?;
        match out.iter_mut().find(|s| s.name == name) {
            Some(s) => s.points.push((iter, value)),
            None => out.push(CurveSeries { name, points: vec![(iter, value)] }),
        }
    }
    Ok(out)
}

/// Line plot of several series against iteration on a log-scaled x axis.
pub fn plot_curves_log_x(series: &[CurveSeries], title: &str, y_label: &str, svg: impl AsRef<Path>) -> Result<()> {
    let pts = || series.iter().flat_map(|s| s.points.iter());
    let max_x = pts().map(|p| p.0).max().unwrap_or(1).max(2) as f64;
    let (y0, y1) = bounds(pts().map(|p| p.1));
    let root = SVGBackend::new(svg.as_ref(), (800, 500)).into_drawing_area();
    root.fill(&WHITE).map_err(plot_err)?;
    let mut chart = ChartBuilder::on(&root)
        .caption(title, ("sans-serif", 20))
        .margin(10)
        .x_label_area_size(40)
        .y_label_area_size(60)
        .build_cartesian_2d((1f64..max_x).log_scale(), y0..y1)
        .map_err(plot_err)?;
    chart
        .configure_mesh()
        .x_desc("iteration")
        .y_desc(y_label)
        .draw()
        .map_err(plot_err)?;
    for (k, s) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        chart
            .draw_series(LineSeries::new(s.points.iter().map(|&(i, v)| ((i.max(1)) as f64, v)), color.stroke_width(2)))
            .map_err(plot_err)?
            .label(s.name.clone())
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], color));
    }
    chart
        .configure_series_labels()
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .draw()
        .map_err(plot_err)?;
    root.present().map_err(plot_err)
}

/// Complexity/quality scatter with marker radius proportional to `sqrt(gflops)`.
/// Writes `name,gflops,psnr,radius` next to the image.
pub fn plot_gflops_scatter(entries: &[ScatterEntry], svg: impl AsRef<Path>, csv_path: impl AsRef<Path>) -> Result<()> {
    let radii = marker_radii(entries);
    let csv_path = csv_path.as_ref();
    let mut w = csv::Writer::from_path(csv_path)?;
    w.write_record(["name", "gflops", "psnr", "radius"])?;
    for (e, r) in entries.iter().zip(&radii) {
        w.write_record([e.name.clone(), e.gflops.to_string(), e.psnr.to_string(), r.to_string()])?;
    }
    w.flush().map_err(|e| Error::io(csv_path, e))?;

    let (x0, x1) = bounds(entries.iter().map(|e| e.gflops));
    let (y0, y1) = bounds(entries.iter().map(|e| e.psnr));
    let root = SVGBackend::new(svg.as_ref(), (800, 550)).into_drawing_area();
    root.fill(&WHITE).map_err(plot_err)?;
    let mut chart = ChartBuilder::on(&root)
        .caption("GFLOPs vs PSNR", ("sans-serif", 20))
        .margin(20)
        .x_label_area_size(40)
        .y_label_area_size(60)
        .build_cartesian_2d((x0 - 2.0).max(0.0)..x1 + 2.0, y0 - 0.5..y1 + 0.5)
        .map_err(plot_err)?;
    chart
        .configure_mesh()
        .x_desc("GFLOPs")
        .y_desc("PSNR (dB)")
        .draw()
        .map_err(plot_err)?;
    for (k, (e, &r)) in entries.iter().zip(&radii).enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        chart
            .draw_series(std::iter::once(Circle::new((e.gflops, e.psnr), r.round() as i32, color.mix(0.5).filled())))
            .map_err(plot_err)?;
        chart
            .draw_series(std::iter::once(Text::new(e.name.clone(), (e.gflops, e.psnr), ("sans-serif", 13))))
            .map_err(plot_err)?;
    }
    root.present().map_err(plot_err)
}
