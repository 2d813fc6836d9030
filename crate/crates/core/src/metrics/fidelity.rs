use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Reported PSNR for identical images.
pub const PSNR_CAP: f64 = 99.0;
pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
const K1: f64 = 0.01;
const K2: f64 = 0.03;

/// BT.601 luma weights.
pub const LUMA: [f64; 3] = [0.299, 0.587, 0.114];

/// Channel planes of a `[C, H, W]` image in f64; with `luma_only`, a single
/// luma plane (RGB inputs) or the image itself (single-channel inputs).
pub(crate) fn planes(img: &Tensor<f32>, luma_only: bool) -> Result<(Vec<Vec<f64>>, usize, usize)> {
    let (c, h, w) = img.dims3()?;
    let hw = h * w;
    let chans: Vec<Vec<f64>> = img.data().chunks(hw).map(|p| p.iter().map(|&v| v as f64).collect()).collect();
    if !luma_only || c == 1 {
        return Ok((chans, h, w));
    }
    if c != 3 {
        return Err(Error::shape("luma", "1 or 3 channels", c));
    }
    let y = (0..hw)
        .map(|i| LUMA[0] * chans[0][i] + LUMA[1] * chans[1][i] + LUMA[2] * chans[2][i])
        .collect();
    Ok((vec![y], h, w))
}

pub fn luma(img: &Tensor<f32>) -> Result<Vec<f64>> {
    Ok(planes(img, true)?.0.swap_remove(0))
}

/// Peak signal-to-noise ratio in dB for a unit dynamic range.
pub fn psnr(a: &Tensor<f32>, b: &Tensor<f32>, luma_only: bool) -> Result<f64> {
    a.check_same("psnr", b)?;
    let (pa, _, _) = planes(a, luma_only)?;
    let (pb, _, _) = planes(b, luma_only)?;
    let (mut sum, mut n) = (0.0, 0usize);
    for (x, y) in pa.iter().zip(&pb) {
        for (u, v) in x.iter().zip(y) {
            sum += (u - v) * (u - v);
        }
        n += x.len();
    }
    Ok(psnr_from_mse(sum / n as f64))
}

pub fn psnr_from_mse(mse: f64) -> f64 {
    if mse <= 0.0 {
        PSNR_CAP
    } else {
        (10.0 * (1.0 / mse).log10()).min(PSNR_CAP)
    }
}

fn gaussian_window() -> [f64; SSIM_WINDOW] {
    let mut g = [0.0; SSIM_WINDOW];
    let r = (SSIM_WINDOW / 2) as f64;
    for (i, v) in g.iter_mut().enumerate() {
        let d = i as f64 - r;
        *v = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let s: f64 = g.iter().sum();
    g.iter_mut().for_each(|v| *v /= s);
    g
}

/// Separable Gaussian filter keeping only fully covered positions.
fn filter_valid(x: &[f64], h: usize, w: usize, g: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let (oh, ow) = (h - SSIM_WINDOW + 1, w - SSIM_WINDOW + 1);
    let mut rows = vec![0.0; h * ow];
    for y in 0..h {
        for ox in 0..ow {
            rows[y * ow + ox] = g.iter().enumerate().map(|(k, gk)| gk * x[y * w + ox + k]).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for oy in 0..oh {
        for ox in 0..ow {
            out[oy * ow + ox] = g.iter().enumerate().map(|(k, gk)| gk * rows[(oy + k) * ow + ox]).sum();
        }
    }
    out
}

fn ssim_plane(a: &[f64], b: &[f64], h: usize, w: usize) -> f64 {
    let g = gaussian_window();
    let prod = |p: &[f64], q: &[f64]| p.iter().zip(q).map(|(u, v)| u * v).collect::<Vec<_>>();
    let mu_a = filter_valid(a, h, w, &g);
    let mu_b = filter_valid(b, h, w, &g);
    let e_aa = filter_valid(&prod(a, a), h, w, &g);
    let e_bb = filter_valid(&prod(b, b), h, w, &g);
    let e_ab = filter_valid(&prod(a, b), h, w, &g);
    let (c1, c2) = ((K1 * K1), (K2 * K2));
    let n = mu_a.len();
    (0..n)
        .map(|i| {
            let (ma, mb) = (mu_a[i], mu_b[i]);
            let va = e_aa[i] - ma * ma;
            let vb = e_bb[i] - mb * mb;
            let cov = e_ab[i] - ma * mb;
            ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2))
        })
        .sum::<f64>()
        / n as f64
}

/// Mean structural similarity with an 11x11 Gaussian window (sigma 1.5) over
/// fully covered positions; RGB is the mean over channels.
pub fn ssim(a: &Tensor<f32>, b: &Tensor<f32>, luma_only: bool) -> Result<f64> {
    a.check_same("ssim", b)?;
    let (pa, h, w) = planes(a, luma_only)?;
    let (pb, _, _) = planes(b, luma_only)?;
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::InvalidArgument(format!(
            "ssim needs images of at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {h}x{w}"
        )));
    }
    let total: f64 = pa.iter().zip(&pb).map(|(x, y)| ssim_plane(x, y, h, w)).sum();
    Ok(total / pa.len() as f64)
}
