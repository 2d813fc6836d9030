//! The super-resolution generator and its cost accounting.

mod blocks;
mod config;
mod sr;
mod upscaler;

pub use blocks::{CaTrace, ChannelAttention, RdbTrace, ResidualDenseBlock};
pub use config::{count_params_flops, Complexity, SrModelConfig};
pub use sr::{SrModel, SrTrace};
pub use upscaler::{BicubicUpscaler, NearestUpscaler, Upscaler};
