pub mod data;
pub mod error;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod pecl;
pub mod recognition;
pub mod reports;
pub mod tensor;
pub mod train;
pub mod tensor_file;

pub use error::{Error, Result};
pub use tensor::{Real, Tensor};
