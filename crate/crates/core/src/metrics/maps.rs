//! Heuristic per-pixel degradation maps for qualitative inspection.
//!
//! * noise: local variance (3x3) of the residual after 3x3 median smoothing
//! * blur: `1 / (1 + E / E0)` where `E` is the 7x7 mean of the squared Laplacian
//! * compression: per 8x8 block, mean gradient across block boundaries over
//!   mean gradient inside the block

use serde::Serialize;

use super::fidelity::luma;
use crate::error::Result;
use crate::tensor::Tensor;

const BLUR_E0: f64 = 1e-3;
const BLOCK: usize = 8;
const GRAD_EPS: f64 = 1e-3;

#[derive(Clone, Debug, Serialize)]
pub struct DistortionMaps {
    pub height: usize,
    pub width: usize,
    pub noise: Vec<f64>,
    pub blur: Vec<f64>,
    pub compression: Vec<f64>,
}

impl DistortionMaps {
    pub fn means(&self) -> (f64, f64, f64) {
        let m = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        (m(&self.noise), m(&self.blur), m(&self.compression))
    }

    /// Element-wise absolute difference to maps of a reference image.
    pub fn relative_to(&self, reference: &DistortionMaps) -> DistortionMaps {
        let d = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).abs()).collect();
        DistortionMaps {
            height: self.height,
            width: self.width,
            noise: d(&self.noise, &reference.noise),
            blur: d(&self.blur, &reference.blur),
            compression: d(&self.compression, &reference.compression),
        }
    }
}

fn at(x: &[f64], h: usize, w: usize, y: isize, xx: isize) -> f64 {
    let yy = y.clamp(0, h as isize - 1) as usize;
    let xc = xx.clamp(0, w as isize - 1) as usize;
    x[yy * w + xc]
}

fn box_mean(x: &[f64], h: usize, w: usize, r: isize) -> Vec<f64> {
    let n = ((2 * r + 1) * (2 * r + 1)) as f64;
    let mut out = vec![0.0; h * w];
    for y in 0..h as isize {
        for xx in 0..w as isize {
            let mut s = 0.0;
            for dy in -r..=r {
                for dx in -r..=r {
                    s += at(x, h, w, y + dy, xx + dx);
                }
            }
            out[y as usize * w + xx as usize] = s / n;
        }
    }
    out
}

fn noise_map(y: &[f64], h: usize, w: usize) -> Vec<f64> {
    let mut resid = vec![0.0; h * w];
    for r in 0..h as isize {
        for c in 0..w as isize {
            let mut win = [0.0; 9];
            let mut k = 0;
            for dy in -1..=1 {
                for dx in -1..=1 {
                    win[k] = at(y, h, w, r + dy, c + dx);
                    k += 1;
                }
            }
            win.sort_by(f64::total_cmp);
            resid[r as usize * w + c as usize] = y[r as usize * w + c as usize] - win[4];
        }
    }
    let mean = box_mean(&resid, h, w, 1);
    let sq: Vec<f64> = resid.iter().map(|v| v * v).collect();
    let mean_sq = box_mean(&sq, h, w, 1);
    mean_sq.iter().zip(&mean).map(|(s, m)| (s - m * m).max(0.0)).collect()
}

fn blur_map(y: &[f64], h: usize, w: usize) -> Vec<f64> {
    let mut lap = vec![0.0; h * w];
    for r in 0..h as isize {
        for c in 0..w as isize {
            let v = at(y, h, w, r - 1, c) + at(y, h, w, r + 1, c) + at(y, h, w, r, c - 1) + at(y, h, w, r, c + 1)
                - 4.0 * at(y, h, w, r, c);
            lap[r as usize * w + c as usize] = v * v;
        }
    }
    box_mean(&lap, h, w, 3).into_iter().map(|e| 1.0 / (1.0 + e / BLUR_E0)).collect()
}

fn compression_map(y: &[f64], h: usize, w: usize) -> Vec<f64> {
    let mut out = vec![0.0; h * w];
    for by in (0..h).step_by(BLOCK) {
        for bx in (0..w).step_by(BLOCK) {
            let (y1, x1) = ((by + BLOCK).min(h), (bx + BLOCK).min(w));
            let (mut edge, mut ne, mut inner, mut ni) = (0.0, 0usize, 0.0, 0usize);
            for r in by..y1 {
                for c in bx..x1 {
                    if c + 1 < w {
                        let g = (y[r * w + c + 1] - y[r * w + c]).abs();
                        if c + 1 == x1 {
                            edge += g;
                            ne += 1;
                        } else {
                            inner += g;
                            ni += 1;
                        }
                    }
                    if r + 1 < h {
                        let g = (y[(r + 1) * w + c] - y[r * w + c]).abs();
                        if r + 1 == y1 {
                            edge += g;
                            ne += 1;
                        } else {
                            inner += g;
                            ni += 1;
                        }
                    }
                }
            }
            let e = if ne > 0 { edge / ne as f64 } else { 0.0 };
            let i = if ni > 0 { inner / ni as f64 } else { 0.0 };
            let ratio = (e + GRAD_EPS) / (i + GRAD_EPS);
            for r in by..y1 {
                out[r * w + bx..r * w + x1].iter_mut().for_each(|v| *v = ratio);
            }
        }
    }
    out
}

/// Maps of a `[3, H, W]` (or single-channel) image, computed on luma. With a
/// reference, each map is the absolute difference to the reference's map.
pub fn distortion_maps(img: &Tensor<f32>, reference: Option<&Tensor<f32>>) -> Result<DistortionMaps> {
    let (_, h, w) = img.dims3()?;
    let y = luma(img)?;
    let maps = DistortionMaps {
        height: h,
        width: w,
        noise: noise_map(&y, h, w),
        blur: blur_map(&y, h, w),
        compression: compression_map(&y, h, w),
    };
    match reference {
        Some(r) => {
            img.check_same("distortion_maps", r)?;
            Ok(maps.relative_to(&distortion_maps(r, None)?))
        }
        None => Ok(maps),
    }
}
