//! On-disk cache of extracted patch pairs.
//!
//! A cache directory holds `pairs.safetensors` (stacked HR/LR tensors and
//! origins) and `index.json` recording the key hash, seed and counts. A cache
//! is reused only when its key hash matches.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::patches::{DegradationSpec, PatchOrigin, PatchPair};
use crate::error::{Error, Result};
use crate::tensor::Tensor;
use crate::tensor_file::{read_tensor_file, write_tensor_file};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CacheIndex {
    pub spec_hash: String,
    pub seed: u64,
    pub count: usize,
    pub hr_patch_size: usize,
    pub scale: usize,
}

/// Hash over everything that determines the extracted pairs.
pub fn cache_key(spec: &DegradationSpec, hr_patch_size: usize, stride: Option<usize>, sources: &[String]) -> String {
    let mut h = Sha256::new();
    h.update(serde_json::to_vec(spec).expect("spec serializes"));
    h.update(hr_patch_size.to_le_bytes());
    h.update(format!("{stride:?}").as_bytes());
    for s in sources {
        h.update(s.as_bytes());
        h.update([0]);
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

pub fn save_patch_cache(dir: impl AsRef<Path>, pairs: &[PatchPair], spec_hash: &str, seed: u64) -> Result<()> {
    let dir = dir.as_ref();
    let first = pairs
        .first()
        .ok_or_else(|| Error::InvalidArgument("refusing to cache zero patch pairs".into()))?;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let hr: Vec<&Tensor<f32>> = pairs.iter().map(|p| &p.hr).collect();
    let lr: Vec<&Tensor<f32>> = pairs.iter().map(|p| &p.lr).collect();
    let origins: Vec<f32> = pairs
        .iter()
        .flat_map(|p| [p.origin.record as f32, p.origin.y as f32, p.origin.x as f32])
        .collect();
    let mut tensors = BTreeMap::new();
    tensors.insert("hr".to_string(), Tensor::stack(&hr)?);
    tensors.insert("lr".to_string(), Tensor::stack(&lr)?);
    tensors.insert("origins".to_string(), Tensor::from_vec(&[pairs.len(), 3], origins)?);
    write_tensor_file(dir.join("pairs.safetensors"), &tensors, HashMap::new())?;
    let index = CacheIndex {
        spec_hash: spec_hash.to_string(),
        seed,
        count: pairs.len(),
        hr_patch_size: first.hr.shape()[1],
        scale: first.scale,
    };
    let p = dir.join("index.json");
    std::fs::write(&p, serde_json::to_string_pretty(&index)?).map_err(|e| Error::io(&p, e))
}

/// Loads cached pairs if the directory exists and its key matches.
pub fn load_patch_cache(dir: impl AsRef<Path>, spec_hash: &str) -> Result<Option<Vec<PatchPair>>> {
    let dir = dir.as_ref();
    let index_path = dir.join("index.json");
    if !index_path.exists() {
        return Ok(None);
    }
    let text = std::fs::read_to_string(&index_path).map_err(|e| Error::io(&index_path, e))?;
    let index: CacheIndex = serde_json::from_str(&text)?;
    if index.spec_hash != spec_hash {
        log::info!("patch cache {} is stale, rebuilding", dir.display());
        return Ok(None);
    }
    let f = read_tensor_file(dir.join("pairs.safetensors"))?;
    let hr = f.get::<f32>("hr")?;
    let lr = f.get::<f32>("lr")?;
    let origins = f.get::<f32>("origins")?;
    if hr.shape()[0] != index.count || lr.shape()[0] != index.count {
        return Err(Error::Checkpoint(format!("patch cache {} count mismatch", dir.display())));
    }
    Ok(Some(
        (0..index.count)
            .map(|i| {
                let o = origins.sample(i);
                PatchPair {
                    hr: hr.sample_tensor(i),
                    lr: lr.sample_tensor(i),
                    scale: index.scale,
                    origin: PatchOrigin {
                        record: o[0] as usize,
                        y: o[1] as usize,
                        x: o[2] as usize,
                    },
                }
            })
            .collect(),
    ))
}
