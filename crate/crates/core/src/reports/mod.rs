//! Run configuration, evaluation, tiled inference, embedding export, plots
//! and the embedding-loss ablation sweep.

mod ablation;
mod analysis;
mod config;
mod embeddings;
mod eval;
mod plots;
mod tiling;
mod tsne;

pub use ablation::{run_ablation, AblationConfig, AblationReport, AblationRow};
pub use analysis::{contrast_curves, emit_plots, load_run, read_curves, PlotOutputs, RunCurves, COMPLEXITY_INPUT};
pub use config::{config_diff, DataConfig, RunConfig};
pub use embeddings::{export_embeddings, EmbeddingRow, EmbeddingTable, Role};
pub use eval::{evaluate_images, evaluate_pairs, ocr_samples, prepare_test_images, TestImage};
pub use plots::{
    marker_radii, plot_curves_log_x, plot_gflops_scatter, published_scatter_entries, read_series_csv,
    write_series_csv, CurveSeries, ScatterEntry, MAX_MARKER_RADIUS,
};
pub use tiling::stitched_infer;
pub use tsne::{tsne, TsneConfig};
