//! Dataset ingestion, degradation and batching.

mod batching;
pub mod cache;
pub mod image_io;
mod manifest;
mod patches;
pub mod resample;
pub mod synth;

pub use batching::{make_batches, shuffled_batches, stack_pairs, IndexBatch, PairBatch};
pub use manifest::{load_manifest, parse_manifest, write_manifest, ImageRecord, Manifest, Split};
pub use patches::{
    build_pairs, crop, default_stride, extract_patch_pair, extract_patches, patch_offsets,
    DegradationSpec, PatchOrigin, PatchPair, ResampleKernel,
};
