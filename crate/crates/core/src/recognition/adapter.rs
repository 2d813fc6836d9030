use std::path::PathBuf;
use std::process::Command;

use super::report::{evaluate_plates, RecognitionReport};
use crate::data::image_io::save_rgb;
use crate::error::{Error, Result};
use crate::model::Upscaler;
use crate::tensor::Tensor;

/// A text recognizer for pre-cropped plate images.
pub trait OcrAdapter {
    fn name(&self) -> String;

    fn version(&self) -> Option<String> {
        None
    }

    /// Reads the text in a `[3, H, W]` image.
    fn recognize(&self, image: &Tensor<f32>) -> Result<String>;
}

/// Runs `program [args..] <image.png>` and takes its trimmed standard output as the text.
#[derive(Clone, Debug)]
pub struct CommandOcr {
    pub program: PathBuf,
    pub args: Vec<String>,
    pub version: Option<String>,
}

impl OcrAdapter for CommandOcr {
    fn name(&self) -> String {
        self.program.display().to_string()
    }

    fn version(&self) -> Option<String> {
        self.version.clone()
    }

    fn recognize(&self, image: &Tensor<f32>) -> Result<String> {
        let dir = tempfile::tempdir().map_err(|e| Error::Adapter(e.to_string()))?;
        let path = dir.path().join("plate.png");
        save_rgb(image, &path)?;
        let out = Command::new(&self.program)
            .args(&self.args)
            .arg(&path)
            .output()
            .map_err(|e| Error::Adapter(format!("{}: {e}", self.program.display())))?;
        if !out.status.success() {
            return Err(Error::Adapter(format!("{} exited with {}", self.program.display(), out.status)));
        }
        Ok(String::from_utf8_lossy(&out.stdout).trim().to_string())
    }
}

/// One low-resolution test plate with its ground-truth text.
#[derive(Clone, Debug)]
pub struct OcrSample {
    pub id: String,
    pub truth: String,
    pub lr: Tensor<f32>,
}

/// Super-resolves every sample, reads it with `adapter` and scores the text.
/// Adapter failures are logged and scored as empty predictions.
pub fn run_ocr_eval(
    upscaler: &dyn Upscaler,
    samples: &[OcrSample],
    adapter: &dyn OcrAdapter,
) -> Result<RecognitionReport> {
    let mut pairs = Vec::with_capacity(samples.len());
    let mut failed = 0;
    for s in samples {
        let (c, h, w) = s.lr.dims3()?;
        let sr = upscaler.upscale(&s.lr.clone().reshape(&[1, c, h, w])?)?;
        let sr = sr.sample_tensor(0);
        let pred = match adapter.recognize(&sr) {
            Ok(text) => text,
            Err(e) => {
                log::warn!("OCR failed on {}: {e}", s.id);
                failed += 1;
                String::new()
            }
        };
        pairs.push((s.truth.clone(), pred));
    }
    let mut report = evaluate_plates(&pairs)?;
    report.unrecognized = failed;
    report.adapter = Some(match adapter.version() {
        Some(v) => format!("{} {v}", adapter.name()),
        None => adapter.name(),
    });
    Ok(report)
}
