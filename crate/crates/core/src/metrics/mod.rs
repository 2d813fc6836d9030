//! Fidelity metrics, report aggregation and training-dynamics measures.

mod contrast;
mod fidelity;
mod lpips;
mod maps;
mod report;

pub use contrast::{contrast_metric, contrast_series};
pub use fidelity::{luma, psnr, psnr_from_mse, ssim, LUMA, PSNR_CAP, SSIM_SIGMA, SSIM_WINDOW};
pub use lpips::{CommandLpips, LpipsAdapter, LPIPS_UNAVAILABLE};
pub use maps::{distortion_maps, DistortionMaps};
pub use report::{image_metrics, median, std_dev, ImageMetrics, MetricsReport, Summary};
