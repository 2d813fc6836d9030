use crate::data::image_io::load_rgb;
use crate::data::{crop, stack_pairs, DegradationSpec, ImageRecord, PatchPair};
use crate::error::{Error, Result};
use crate::metrics::{image_metrics, LpipsAdapter, MetricsReport, LPIPS_UNAVAILABLE};
use crate::model::Upscaler;
use crate::recognition::OcrSample;
use crate::tensor::Tensor;

/// A whole test image, cropped to a multiple of the scale, with its LR version.
#[derive(Clone, Debug)]
pub struct TestImage {
    pub id: String,
    pub hr: Tensor<f32>,
    pub lr: Tensor<f32>,
    pub plate_text: Option<String>,
}

/// Loads records and degrades each full image. Images whose cropped HR is
/// smaller than the SSIM window are skipped with a warning.
pub fn prepare_test_images(records: &[ImageRecord], spec: &DegradationSpec) -> Result<Vec<TestImage>> {
    let s = spec.scale;
    let mut out = Vec::with_capacity(records.len());
    for rec in records {
        let img = load_rgb(&rec.path)?;
        let (_, h, w) = img.dims3()?;
        let (ch, cw) = (h / s * s, w / s * s);
        if ch < crate::metrics::SSIM_WINDOW || cw < crate::metrics::SSIM_WINDOW {
            log::warn!("{}: {h}x{w} is too small to evaluate, skipped", rec.path.display());
            continue;
        }
        let hr = crop(&img, 0, 0, ch, cw)?;
        let lr = spec.degrade(&hr)?;
        out.push(TestImage {
            id: rec.path.display().to_string(),
            hr,
            lr,
            plate_text: rec.plate_text.clone(),
        });
    }
    Ok(out)
}

fn lpips_note(lpips: Option<&dyn LpipsAdapter>) -> Option<String> {
    match lpips {
        Some(_) => None,
        None => Some(LPIPS_UNAVAILABLE.to_string()),
    }
}

/// Fidelity metrics over whole images, upscaled one at a time.
pub fn evaluate_images(
    upscaler: &dyn Upscaler,
    images: &[TestImage],
    lpips: Option<&dyn LpipsAdapter>,
    label: &str,
) -> Result<MetricsReport> {
    if images.is_empty() {
        return Err(Error::InvalidArgument("no test images to evaluate".into()));
    }
    let mut per_image = Vec::with_capacity(images.len());
    for im in images {
        let (c, h, w) = im.lr.dims3()?;
        let sr = upscaler.upscale(&im.lr.clone().reshape(&[1, c, h, w])?)?.sample_tensor(0);
        per_image.push(image_metrics(im.id.clone(), &sr, &im.hr, lpips)?);
    }
    Ok(MetricsReport::from_images(per_image, lpips_note(lpips))?.with_label(label))
}

/// Fidelity metrics over patch pairs.
pub fn evaluate_pairs(
    upscaler: &dyn Upscaler,
    pairs: &[PatchPair],
    lpips: Option<&dyn LpipsAdapter>,
    label: &str,
) -> Result<MetricsReport> {
    if pairs.is_empty() {
        return Err(Error::InvalidArgument("no pairs to evaluate".into()));
    }
    let mut per_image = Vec::with_capacity(pairs.len());
    for chunk in pairs.chunks(16) {
        let (lr, _) = stack_pairs(chunk.iter())?;
        let sr = upscaler.upscale(&lr)?;
        for (i, p) in chunk.iter().enumerate() {
            per_image.push(image_metrics(p.origin.id(), &sr.sample_tensor(i), &p.hr, lpips)?);
        }
    }
    Ok(MetricsReport::from_images(per_image, lpips_note(lpips))?.with_label(label))
}

/// OCR inputs for the images that carry a plate string.
pub fn ocr_samples(images: &[TestImage]) -> Vec<OcrSample> {
    images
        .iter()
        .filter_map(|im| {
            im.plate_text.as_ref().map(|t| OcrSample {
                id: im.id.clone(),
                truth: t.clone(),
                lr: im.lr.clone(),
            })
        })
        .collect()
}
