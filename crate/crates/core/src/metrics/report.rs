use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::fidelity::{psnr, ssim};
use super::lpips::LpipsAdapter;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageMetrics {
    pub id: String,
    pub psnr: f64,
    pub psnr_y: f64,
    pub ssim: f64,
    pub ssim_y: f64,
    pub lpips: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub median: f64,
    /// Population standard deviation.
    pub std: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        Some(Self {
            median: median(values),
            std: std_dev(values),
        })
    }
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

pub fn std_dev(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt()
}

/// Per-image fidelity metrics with their median and spread.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    pub per_image: Vec<ImageMetrics>,
    pub aggregate: BTreeMap<String, Summary>,
    /// Why LPIPS is missing, when it is.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lpips_note: Option<String>,
}

impl MetricsReport {
    pub fn from_images(per_image: Vec<ImageMetrics>, lpips_note: Option<String>) -> Result<Self> {
        if per_image.is_empty() {
            return Err(Error::InvalidArgument("metrics report over zero images".into()));
        }
        let aggregate = Self::aggregate_of(&per_image);
        Ok(Self {
            label: None,
            per_image,
            aggregate,
            lpips_note,
        })
    }

    pub fn aggregate_of(per_image: &[ImageMetrics]) -> BTreeMap<String, Summary> {
        let mut out = BTreeMap::new();
        let columns: [(&str, fn(&ImageMetrics) -> Option<f64>); 5] = [
            ("psnr", |m| Some(m.psnr)),
            ("psnr_y", |m| Some(m.psnr_y)),
            ("ssim", |m| Some(m.ssim)),
            ("ssim_y", |m| Some(m.ssim_y)),
            ("lpips", |m| m.lpips),
        ];
        for (name, get) in columns {
            let vals: Vec<f64> = per_image.iter().filter_map(get).collect();
            if let Some(s) = Summary::of(&vals) {
                out.insert(name.to_string(), s);
            }
        }
        out
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = Some(label.into());
        self
    }

    pub fn median(&self, metric: &str) -> Option<f64> {
        self.aggregate.get(metric).map(|s| s.median)
    }

    /// `median ± std` strings per metric.
    pub fn formatted(&self) -> BTreeMap<String, String> {
        self.aggregate
            .iter()
            .map(|(k, s)| {
                let digits = if k.starts_with("psnr") { 2 } else { 4 };
                (k.clone(), format!("{:.*} ± {:.*}", digits, s.median, digits, s.std))
            })
            .collect()
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut doc = serde_json::to_value(self)?;
        doc["formatted"] = serde_json::to_value(self.formatted())?;
        std::fs::write(path, serde_json::to_string_pretty(&doc)?).map_err(|e| Error::io(path, e))
    }
}

/// Fidelity metrics of one SR/HR pair of `[3, H, W]` images.
pub fn image_metrics(
    id: impl Into<String>,
    sr: &Tensor<f32>,
    hr: &Tensor<f32>,
    lpips: Option<&dyn LpipsAdapter>,
) -> Result<ImageMetrics> {
    let lpips = match lpips {
        Some(a) => match a.distance(sr, hr) {
            Ok(v) => Some(v),
            Err(e) => {
                log::warn!("lpips adapter {} failed: {e}", a.name());
                None
            }
        },
        None => None,
    };
    Ok(ImageMetrics {
        id: id.into(),
        psnr: psnr(sr, hr, false)?,
        psnr_y: psnr(sr, hr, true)?,
        ssim: ssim(sr, hr, false)?,
        ssim_y: ssim(sr, hr, true)?,
        lpips,
    })
}
