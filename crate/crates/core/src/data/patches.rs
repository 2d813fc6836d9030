use serde::{Deserialize, Serialize};

use super::image_io::load_rgb;
use super::manifest::{ImageRecord, Split};
use super::resample::downscale;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ResampleKernel {
    #[default]
    Bicubic,
}

/// How LR inputs are produced from HR crops.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DegradationSpec {
    pub scale: usize,
    #[serde(default)]
    pub kernel: ResampleKernel,
    #[serde(default = "default_true")]
    pub antialias: bool,
}

fn default_true() -> bool {
    true
}

impl Default for DegradationSpec {
    fn default() -> Self {
        Self {
            scale: 8,
            kernel: ResampleKernel::Bicubic,
            antialias: true,
        }
    }
}

impl DegradationSpec {
    pub fn new(scale: usize) -> Self {
        Self {
            scale,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !matches!(self.scale, 4 | 8) {
            return Err(Error::Config(format!(
                "degradation scale must be 4 or 8, got {}",
                self.scale
            )));
        }
        Ok(())
    }

    pub fn degrade(&self, hr: &Tensor<f32>) -> Result<Tensor<f32>> {
        match self.kernel {
            ResampleKernel::Bicubic => downscale(hr, self.scale, self.antialias),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatchOrigin {
    pub record: usize,
    pub y: usize,
    pub x: usize,
}

impl PatchOrigin {
    pub fn id(&self) -> String {
        format!("{}@{},{}", self.record, self.y, self.x)
    }
}

/// Aligned HR/LR crops; `hr` is `[3, s*p', s*p']`, `lr` is `[3, p', p']`.
#[derive(Clone, Debug)]
pub struct PatchPair {
    pub hr: Tensor<f32>,
    pub lr: Tensor<f32>,
    pub scale: usize,
    pub origin: PatchOrigin,
}

pub fn crop(image: &Tensor<f32>, y: usize, x: usize, h: usize, w: usize) -> Result<Tensor<f32>> {
    let (c, ih, iw) = image.dims3()?;
    if y + h > ih || x + w > iw {
        return Err(Error::InvalidArgument(format!(
            "crop window {h}x{w} at ({y}, {x}) exceeds image {ih}x{iw}"
        )));
    }
    let mut data = Vec::with_capacity(c * h * w);
    for ch in 0..c {
        for row in y..y + h {
            let start = (ch * ih + row) * iw + x;
            data.extend_from_slice(&image.data()[start..start + w]);
        }
    }
    Tensor::from_vec(&[c, h, w], data)
}

/// Crops an HR window at `offset = (y, x)` and derives its LR counterpart.
pub fn extract_patch_pair(
    image: &Tensor<f32>,
    spec: &DegradationSpec,
    hr_patch_size: usize,
    offset: (usize, usize),
) -> Result<PatchPair> {
    spec.validate()?;
    let (c, _, _) = image.dims3()?;
    if c != 3 {
        return Err(Error::shape("extract_patch_pair", "3 channels", c));
    }
    if hr_patch_size == 0 || hr_patch_size % spec.scale != 0 {
        return Err(Error::InvalidArgument(format!(
            "patch size {hr_patch_size} is not divisible by scale {}",
            spec.scale
        )));
    }
    let hr = crop(image, offset.0, offset.1, hr_patch_size, hr_patch_size)?;
    let lr = spec.degrade(&hr)?;
    Ok(PatchPair {
        hr,
        lr,
        scale: spec.scale,
        origin: PatchOrigin {
            record: 0,
            y: offset.0,
            x: offset.1,
        },
    })
}

/// Top-left corners of a `size`-window grid with the given stride. The last
/// row/column is snapped to the border so the whole image is covered.
pub fn patch_offsets(h: usize, w: usize, size: usize, stride: usize) -> Vec<(usize, usize)> {
    if h < size || w < size || stride == 0 {
        return Vec::new();
    }
    let axis = |len: usize| {
        let mut v: Vec<usize> = (0..=len - size).step_by(stride).collect();
        if *v.last().unwrap() != len - size {
            v.push(len - size);
        }
        v
    };
    let ys = axis(h);
    let xs = axis(w);
    ys.iter().flat_map(|&y| xs.iter().map(move |&x| (y, x))).collect()
}

/// Overlap stride for a split: half a patch for training, a full patch otherwise.
pub fn default_stride(split: Split, patch: usize) -> usize {
    match split {
        Split::Train => (patch / 2).max(1),
        Split::Val | Split::Test => patch,
    }
}

pub fn extract_patches(
    image: &Tensor<f32>,
    record: usize,
    spec: &DegradationSpec,
    hr_patch_size: usize,
    stride: usize,
) -> Result<Vec<PatchPair>> {
    let (_, h, w) = image.dims3()?;
    patch_offsets(h, w, hr_patch_size, stride)
        .into_iter()
        .map(|off| {
            let mut p = extract_patch_pair(image, spec, hr_patch_size, off)?;
            p.origin.record = record;
            Ok(p)
        })
        .collect()
}

/// Loads every record and extracts its patches. Images smaller than a patch
/// are skipped with a warning. `record` in each origin indexes `records`.
pub fn build_pairs(
    records: &[ImageRecord],
    spec: &DegradationSpec,
    hr_patch_size: usize,
    stride: Option<usize>,
) -> Result<Vec<PatchPair>> {
    let mut pairs = Vec::new();
    for (i, rec) in records.iter().enumerate() {
        let img = load_rgb(&rec.path)?;
        let (_, h, w) = img.dims3()?;
        if h < hr_patch_size || w < hr_patch_size {
            log::warn!("{}: {h}x{w} is smaller than the {hr_patch_size}px patch, skipped", rec.path.display());
            continue;
        }
        let stride = stride.unwrap_or_else(|| default_stride(rec.split, hr_patch_size));
        pairs.extend(extract_patches(&img, i, spec, hr_patch_size, stride)?);
    }
    Ok(pairs)
}
