//! Self-describing checkpoint files: parameters, optimizer moments and
//! training state in one safetensors container.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::optim::{Adam, AdamHyper};
use super::trainer::TrainState;
use crate::error::{Error, Result};
use crate::model::{SrModel, SrModelConfig};
use crate::nn::Module;
use crate::pecl::{Pecl, PeclConfig};
use crate::tensor::Tensor;
use crate::tensor_file::{read_tensor_file, write_tensor_file, TensorFile};

pub const CHECKPOINT_FORMAT: &str = "platesr-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Everything restored from a checkpoint.
pub struct Checkpoint {
    pub model: SrModel<f32>,
    pub pecl: Option<Pecl<f32>>,
    pub adam: Option<Adam<f32>>,
    pub state: TrainState,
}

pub fn save_checkpoint(
    path: impl AsRef<Path>,
    model: &SrModel<f32>,
    pecl: Option<&Pecl<f32>>,
    adam: Option<&Adam<f32>>,
    state: &TrainState,
) -> Result<()> {
    let mut tensors: BTreeMap<String, Tensor<f32>> = BTreeMap::new();
    model.visit_params("model", &mut |n, p| {
        tensors.insert(n.to_string(), p.value.clone());
    });
    if let Some(p) = pecl {
        p.visit_params("pecl", &mut |n, p| {
            tensors.insert(n.to_string(), p.value.clone());
        });
    }
    let mut meta = HashMap::new();
    meta.insert("format".into(), CHECKPOINT_FORMAT.into());
    meta.insert("format_version".into(), CHECKPOINT_VERSION.to_string());
    meta.insert("model_config".into(), serde_json::to_string(model.config())?);
    if let Some(p) = pecl {
        meta.insert("pecl_config".into(), serde_json::to_string(p.config())?);
    }
    meta.insert("train_state".into(), serde_json::to_string(state)?);
    if let Some(a) = adam {
        meta.insert("adam_step".into(), a.step.to_string());
        for (k, (m, v)) in &a.moments {
            tensors.insert(format!("adam.m.{k}"), m.clone());
            tensors.insert(format!("adam.v.{k}"), v.clone());
        }
    }
    write_tensor_file(path, &tensors, meta)
}

fn restore<M: Module<f32>>(m: &mut M, prefix: &str, file: &TensorFile) -> Result<()> {
    let mut err = None;
    m.visit_params_mut(prefix, &mut |name, p| match file.get::<f32>(name) {
        Ok(t) if t.shape() == p.value.shape() => p.value = t,
        Ok(t) => {
            err.get_or_insert(Error::Checkpoint(format!(
                "{name}: stored shape {:?}, model expects {:?}",
                t.shape(),
                p.value.shape()
            )));
        }
        Err(e) => {
            err.get_or_insert(e);
        }
    });
    err.map_or(Ok(()), Err)
}

/// Reads only the model configuration of a checkpoint.
pub fn checkpoint_model_config(path: impl AsRef<Path>) -> Result<SrModelConfig> {
    let file = read_tensor_file(path)?;
    Ok(serde_json::from_str(file.meta("model_config")?)?)
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let file = read_tensor_file(path)?;
    if file.meta("format")? != CHECKPOINT_FORMAT {
        return Err(Error::Checkpoint(format!("{} is not a model checkpoint", path.display())));
    }
    let version: u32 = file
        .meta("format_version")?
        .parse()
        .map_err(|_| Error::Checkpoint("bad format_version".into()))?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!(
            "checkpoint format version {version} is not supported (expected {CHECKPOINT_VERSION})"
        )));
    }
    let config: SrModelConfig = serde_json::from_str(file.meta("model_config")?)?;
    // Parameters are overwritten below; the seed only fills the shapes.
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut model = SrModel::new(config, &mut rng)?;
    restore(&mut model, "model", &file)?;
    let pecl = match file.metadata.get("pecl_config") {
        Some(text) => {
            let mut cfg: PeclConfig = serde_json::from_str(text)?;
            cfg.pretrained = None;
            let mut p = Pecl::new(cfg, &mut rng)?;
            restore(&mut p, "pecl", &file)?;
            Some(p)
        }
        None => None,
    };
    let state: TrainState = serde_json::from_str(file.meta("train_state")?)?;
    let adam = match file.metadata.get("adam_step") {
        Some(step) => {
            let mut a = Adam::new(AdamHyper::default());
            a.step = step.parse().map_err(|_| Error::Checkpoint("bad adam_step".into()))?;
            for name in file.tensors.keys() {
                if let Some(k) = name.strip_prefix("adam.m.") {
                    let m = file.get::<f32>(name)?;
                    let v = file.get::<f32>(&format!("adam.v.{k}"))?;
                    a.moments.insert(k.to_string(), (m, v));
                }
            }
            Some(a)
        }
        None => None,
    };
    Ok(Checkpoint {
        model,
        pecl,
        adam,
        state,
    })
}
