use std::f64::consts::FRAC_PI_2;

use crate::data::crop;
use crate::error::{Error, Result};
use crate::model::Upscaler;
use crate::tensor::Tensor;

/// Tile start offsets along one axis of length `len`. The last tile is
/// pulled back so it ends at the border.
fn starts(len: usize, tile: usize, overlap: usize) -> Vec<usize> {
    if len <= tile {
        return vec![0];
    }
    let step = tile - overlap;
    let mut out: Vec<usize> = (0..).map(|i| i * step).take_while(|&s| s + tile < len).collect();
    out.push(len - tile);
    out.dedup();
    out
}

/// Per-position blend weights of each tile along one axis (output resolution).
/// Shared bands ramp as sin² up and cos² down so two neighbours sum to one.
fn axis_weights(starts: &[usize], size: usize, len: usize, scale: usize) -> Vec<Vec<f64>> {
    let ramp = |i: usize, band: usize| {
        let t = (i as f64 + 0.5) / band as f64;
        (FRAC_PI_2 * t).sin().powi(2)
    };
    starts
        .iter()
        .enumerate()
        .map(|(k, &s)| {
            let end = (s + size).min(len);
            let n = (end - s) * scale;
            let mut w = vec![1.0; n];
            if k > 0 {
                let prev_end = (starts[k - 1] + size).min(len);
                let band = prev_end.saturating_sub(s) * scale;
                for (i, v) in w.iter_mut().take(band).enumerate() {
                    *v *= ramp(i, band);
                }
            }
            if k + 1 < starts.len() {
                let band = end.saturating_sub(starts[k + 1]) * scale;
                for i in 0..band {
                    w[n - band + i] *= 1.0 - ramp(i, band);
                }
            }
            w
        })
        .collect()
}

/// Super-resolves a `[3, H, W]` image tile by tile and blends the overlaps
/// with a cosine ramp. `tile` and `overlap` are in input pixels.
pub fn stitched_infer(upscaler: &dyn Upscaler, image: &Tensor<f32>, tile: usize, overlap: usize) -> Result<Tensor<f32>> {
    let (c, h, w) = image.dims3()?;
    if tile == 0 {
        return Err(Error::InvalidArgument("tile size must be positive".into()));
    }
    if tile <= overlap {
        return Err(Error::InvalidArgument(format!("tile ({tile}) must be larger than overlap ({overlap})")));
    }
    let s = upscaler.scale();
    let (ys, xs) = (starts(h, tile, overlap), starts(w, tile, overlap));
    let (wy, wx) = (axis_weights(&ys, tile, h, s), axis_weights(&xs, tile, w, s));
    let (oh, ow) = (h * s, w * s);
    let mut acc = vec![0.0f64; c * oh * ow];
    let mut norm = vec![0.0f64; oh * ow];
    for (iy, &y0) in ys.iter().enumerate() {
        for (ix, &x0) in xs.iter().enumerate() {
            let (th, tw) = (tile.min(h - y0), tile.min(w - x0));
            let patch = crop(image, y0, x0, th, tw)?.reshape(&[1, c, th, tw])?;
            let sr = upscaler.upscale(&patch)?;
            let (sh, sw) = (th * s, tw * s);
            if sr.shape() != [1, c, sh, sw] {
                return Err(Error::shape("stitched_infer", format!("[1, {c}, {sh}, {sw}]"), format!("{:?}", sr.shape())));
            }
            let d = sr.data();
            for yy in 0..sh {
                let oy = y0 * s + yy;
                for xx in 0..sw {
                    let ox = x0 * s + xx;
                    let wt = wy[iy][yy] * wx[ix][xx];
                    norm[oy * ow + ox] += wt;
                    for ch in 0..c {
                        acc[(ch * oh + oy) * ow + ox] += wt * d[(ch * sh + yy) * sw + xx] as f64;
                    }
                }
            }
        }
    }
    let data = acc
        .iter()
        .enumerate()
        .map(|(i, &v)| (v / norm[i % (oh * ow)]) as f32)
        .collect();
    Tensor::from_vec(&[c, oh, ow], data)
}
