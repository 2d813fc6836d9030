use std::path::PathBuf;
use std::process::Command;

use crate::data::image_io::save_rgb;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Note recorded in reports when no perceptual adapter is configured.
pub const LPIPS_UNAVAILABLE: &str = "adapter unavailable";

/// Source of a learned perceptual distance between two images.
pub trait LpipsAdapter {
    fn name(&self) -> &str;
    fn distance(&self, a: &Tensor<f32>, b: &Tensor<f32>) -> Result<f64>;
}

/// Runs an external program as `program [args..] <a.png> <b.png>` and reads
/// a single number from its standard output.
#[derive(Clone, Debug)]
pub struct CommandLpips {
    pub program: PathBuf,
    pub args: Vec<String>,
}

impl LpipsAdapter for CommandLpips {
    fn name(&self) -> &str {
        self.program.to_str().unwrap_or("lpips-command")
    }

    fn distance(&self, a: &Tensor<f32>, b: &Tensor<f32>) -> Result<f64> {
        let dir = tempfile::tempdir().map_err(|e| Error::Adapter(e.to_string()))?;
        let (pa, pb) = (dir.path().join("a.png"), dir.path().join("b.png"));
        save_rgb(a, &pa)?;
        save_rgb(b, &pb)?;
        let out = Command::new(&self.program)
            .args(&self.args)
            .arg(&pa)
            .arg(&pb)
            .output()
            .map_err(|e| Error::Adapter(format!("{}: {e}", self.program.display())))?;
        if !out.status.success() {
            return Err(Error::Adapter(format!("{} exited with {}", self.program.display(), out.status)));
        }
        let text = String::from_utf8_lossy(&out.stdout);
        text.trim()
            .parse()
            .map_err(|_| Error::Adapter(format!("could not parse {:?} as a distance", text.trim())))
    }
}
