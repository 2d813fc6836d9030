use crate::error::{Error, Result};

/// Relative PSNR gain of a run over a baseline; positive favours the run.
pub fn contrast_metric(psnr_run: f64, psnr_base: f64) -> Result<f64> {
    if !(psnr_base > 0.0) {
        return Err(Error::InvalidArgument(format!("baseline PSNR must be positive, got {psnr_base}")));
    }
    Ok((psnr_run - psnr_base) / psnr_base)
}

/// Pointwise contrast over the iterations both series share.
pub fn contrast_series(run: &[(u64, f64)], base: &[(u64, f64)]) -> Result<Vec<(u64, f64)>> {
    let mut out = Vec::new();
    let mut j = 0;
    for &(it, v) in run {
        while j < base.len() && base[j].0 < it {
            j += 1;
        }
        if j < base.len() && base[j].0 == it {
            out.push((it, contrast_metric(v, base[j].1)?));
        }
    }
    Ok(out)
}
