//! Separable bicubic (Catmull-Rom) resampling with optional antialiasing.
//!
//! When shrinking with antialiasing on, the kernel is stretched by the scale
//! factor. Taps falling outside the image are dropped and the remaining
//! weights renormalized, so constant images stay exactly constant.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Catmull-Rom coefficient.
pub const CUBIC_A: f64 = -0.5;

pub fn cubic(x: f64) -> f64 {
    let a = CUBIC_A;
    let x = x.abs();
    if x < 1.0 {
        ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0
    } else if x < 2.0 {
        (((x - 5.0) * x + 8.0) * x - 4.0) * a
    } else {
        0.0
    }
}

/// Normalized taps `(first_index, weights)` for each output coordinate.
pub(crate) fn axis_weights(src: usize, dst: usize, antialias: bool) -> Vec<(usize, Vec<f64>)> {
    let scale = src as f64 / dst as f64;
    let stretch = if antialias && scale > 1.0 { scale } else { 1.0 };
    let support = 2.0 * stretch;
    (0..dst)
        .map(|i| {
            let center = (i as f64 + 0.5) * scale;
            let lo = ((center - support).floor().max(0.0)) as usize;
            let hi = ((center + support).ceil() as usize).min(src);
            let mut w: Vec<f64> = (lo..hi)
                .map(|j| cubic((j as f64 + 0.5 - center) / stretch))
                .collect();
            let total: f64 = w.iter().sum();
            w.iter_mut().for_each(|v| *v /= total);
            (lo, w)
        })
        .collect()
}

fn resample_rows(src: &[f64], h: usize, w: usize, taps: &[(usize, Vec<f64>)]) -> Vec<f64> {
    let ow = taps.len();
    let mut out = vec![0.0; h * ow];
    for y in 0..h {
        let row = &src[y * w..(y + 1) * w];
        for (x, (lo, weights)) in taps.iter().enumerate() {
            out[y * ow + x] = weights.iter().enumerate().map(|(k, wt)| wt * row[lo + k]).sum();
        }
    }
    out
}

fn resample_cols(src: &[f64], _h: usize, w: usize, taps: &[(usize, Vec<f64>)]) -> Vec<f64> {
    let oh = taps.len();
    let mut out = vec![0.0; oh * w];
    for (y, (lo, weights)) in taps.iter().enumerate() {
        let dst = &mut out[y * w..(y + 1) * w];
        for (k, wt) in weights.iter().enumerate() {
            let row = &src[(lo + k) * w..(lo + k + 1) * w];
            for (d, &v) in dst.iter_mut().zip(row) {
                *d += wt * v;
            }
        }
    }
    out
}

/// Bicubic resize of a `[C, H, W]` image; results are not clamped.
pub fn resize_bicubic(img: &Tensor<f32>, out_h: usize, out_w: usize, antialias: bool) -> Result<Tensor<f32>> {
    let (c, h, w) = img.dims3()?;
    if out_h == 0 || out_w == 0 || h == 0 || w == 0 {
        return Err(Error::InvalidArgument(format!(
            "cannot resize {h}x{w} to {out_h}x{out_w}"
        )));
    }
    let tx = axis_weights(w, out_w, antialias);
    let ty = axis_weights(h, out_h, antialias);
    let mut data = Vec::with_capacity(c * out_h * out_w);
    for ch in 0..c {
        let plane: Vec<f64> = img.data()[ch * h * w..(ch + 1) * h * w]
            .iter()
            .map(|&v| v as f64)
            .collect();
        let rows = resample_rows(&plane, h, w, &tx);
        let full = resample_cols(&rows, h, out_w, &ty);
        data.extend(full.into_iter().map(|v| v as f32));
    }
    Tensor::from_vec(&[c, out_h, out_w], data)
}

/// Bicubic downscale by an integer factor, clamped to `[0, 1]`.
pub fn downscale(img: &Tensor<f32>, scale: usize, antialias: bool) -> Result<Tensor<f32>> {
    let (_, h, w) = img.dims3()?;
    if scale == 0 || h % scale != 0 || w % scale != 0 {
        return Err(Error::InvalidArgument(format!(
            "{h}x{w} is not divisible by scale {scale}"
        )));
    }
    Ok(resize_bicubic(img, h / scale, w / scale, antialias)?.clamp(0.0, 1.0))
}

/// Bicubic upscale by an integer factor, clamped to `[0, 1]`.
pub fn upscale_bicubic(img: &Tensor<f32>, scale: usize) -> Result<Tensor<f32>> {
    let (_, h, w) = img.dims3()?;
    Ok(resize_bicubic(img, h * scale, w * scale, false)?.clamp(0.0, 1.0))
}

pub fn upscale_nearest(img: &Tensor<f32>, scale: usize) -> Result<Tensor<f32>> {
    let (c, h, w) = img.dims3()?;
    let (oh, ow) = (h * scale, w * scale);
    let mut data = Vec::with_capacity(c * oh * ow);
    for ch in 0..c {
        for y in 0..oh {
            let row = &img.data()[(ch * h + y / scale) * w..(ch * h + y / scale + 1) * w];
            data.extend((0..ow).map(|x| row[x / scale]));
        }
    }
    Tensor::from_vec(&[c, oh, ow], data)
}
