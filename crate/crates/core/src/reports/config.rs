use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::cache::{cache_key, load_patch_cache, save_patch_cache};
use crate::data::{build_pairs, load_manifest, DegradationSpec, ImageRecord, PatchPair, Split};
use crate::error::{Error, Result};
use crate::model::SrModelConfig;
use crate::model::SrModel;
use crate::pecl::{Pecl, PeclConfig};
use crate::train::{LossKind, TrainConfig, Trainer};

/// Where patches come from and how they are cut.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub train_manifest: PathBuf,
    pub val_manifest: PathBuf,
    #[serde(default)]
    pub test_manifest: Option<PathBuf>,
    /// HR patch side; LR patches are `patch_size / scale`.
    pub patch_size: usize,
    /// Training stride; defaults to half the patch size.
    #[serde(default)]
    pub train_stride: Option<usize>,
    /// Keep at most this many training patches (taken in extraction order).
    #[serde(default)]
    pub max_train_patches: Option<usize>,
    #[serde(default)]
    pub max_val_patches: Option<usize>,
    /// Directory for the safetensors patch cache; off when absent.
    #[serde(default)]
    pub cache_dir: Option<PathBuf>,
}

/// Everything one training run needs, loaded from a TOML document.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub out_dir: PathBuf,
    pub train: TrainConfig,
    pub model: SrModelConfig,
    #[serde(default)]
    pub pecl: Option<PeclConfig>,
    pub degradation: DegradationSpec,
    pub data: DataConfig,
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Parses and validates a config file; relative paths resolve against its directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: Self = toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        resolve(&mut cfg.out_dir);
        resolve(&mut cfg.data.train_manifest);
        resolve(&mut cfg.data.val_manifest);
        if let Some(p) = cfg.data.test_manifest.as_mut() {
            resolve(p);
        }
        if let Some(p) = cfg.data.cache_dir.as_mut() {
            resolve(p);
        }
        if let Some(p) = cfg.pecl.as_mut().and_then(|c| c.pretrained.as_mut()) {
            resolve(p);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Schema and cross-field checks, run before any data is touched.
    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        self.model.validate()?;
        self.degradation.validate()?;
        if let Some(p) = &self.pecl {
            p.validate()?;
        }
        let s = self.train.scale;
        if self.model.scale != s || self.degradation.scale != s {
            return Err(Error::Config(format!(
                "train.scale ({s}), model.scale ({}) and degradation.scale ({}) must agree",
                self.model.scale, self.degradation.scale
            )));
        }
        if (self.train.loss == LossKind::Pecl) != self.pecl.is_some() {
            return Err(Error::Config("a [pecl] section is required exactly when train.loss = \"pecl\"".into()));
        }
        let d = &self.data;
        if d.patch_size == 0 || d.patch_size % s != 0 {
            return Err(Error::Config(format!("data.patch_size {} must be a positive multiple of {s}", d.patch_size)));
        }
        if d.train_stride == Some(0) {
            return Err(Error::Config("data.train_stride must be positive".into()));
        }
        Ok(())
    }

    /// Checks that manifest paths exist, naming the offending field.
    pub fn check_paths(&self) -> Result<()> {
        let d = &self.data;
        let mut fields = vec![("data.train_manifest", &d.train_manifest), ("data.val_manifest", &d.val_manifest)];
        if let Some(t) = &d.test_manifest {
            fields.push(("data.test_manifest", t));
        }
        for (name, p) in fields {
            if !p.exists() {
                return Err(Error::Config(format!("{name}: {} does not exist", p.display())));
            }
        }
        Ok(())
    }
}

impl RunConfig {
    /// A freshly initialised trainer; the generator and the loss draw from separate streams of `train.seed`.
    pub fn trainer(&self) -> Result<Trainer> {
        let seed = self.train.seed;
        let model = SrModel::new(self.model.clone(), &mut ChaCha8Rng::seed_from_u64(seed))?;
        let mut loss_rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
        let pecl = self.pecl.clone().map(|p| Pecl::new(p, &mut loss_rng)).transpose()?;
        Trainer::new(self.train.clone(), model, pecl)
    }

    /// Records of `split` from the manifest configured for it.
    pub fn records(&self, split: Split) -> Result<Vec<ImageRecord>> {
        let d = &self.data;
        let (field, path) = match split {
            Split::Train => ("data.train_manifest", &d.train_manifest),
            Split::Val => ("data.val_manifest", &d.val_manifest),
            Split::Test => match &d.test_manifest {
                Some(p) => ("data.test_manifest", p),
                None => return Err(Error::Config("data.test_manifest is not set".into())),
            },
        };
        if !path.exists() {
            return Err(Error::Config(format!("{field}: {} does not exist", path.display())));
        }
        let records: Vec<ImageRecord> = load_manifest(path)?.split(split).cloned().collect();
        if records.is_empty() {
            return Err(Error::Config(format!("{field}: {} has no {split} records", path.display())));
        }
        Ok(records)
    }

    /// Patch pairs for training or validation, read through the cache when one is configured.
    pub fn pairs(&self, split: Split) -> Result<Vec<PatchPair>> {
        let records = self.records(split)?;
        let d = &self.data;
        let stride = match split {
            Split::Train => d.train_stride,
            _ => None,
        };
        let key = cache_key(
            &self.degradation,
            d.patch_size,
            stride,
            &records.iter().map(|r| r.path.display().to_string()).collect::<Vec<_>>(),
        );
        let cache = d.cache_dir.as_ref().map(|c| c.join(split.to_string()));
        let mut pairs = match cache.as_ref().map(|c| load_patch_cache(c, &key)).transpose()?.flatten() {
            Some(p) => p,
            None => {
                let p = build_pairs(&records, &self.degradation, d.patch_size, stride)?;
                if let (Some(c), false) = (&cache, p.is_empty()) {
                    save_patch_cache(c, &p, &key, self.train.seed)?;
                }
                p
            }
        };
        let cap = match split {
            Split::Train => d.max_train_patches,
            _ => d.max_val_patches,
        };
        if let Some(n) = cap {
            pairs.truncate(n);
        }
        if pairs.is_empty() {
            return Err(Error::InvalidArgument(format!("no {split} patches of {}px could be extracted", d.patch_size)));
        }
        Ok(pairs)
    }
}

/// Dotted paths of every field whose value differs between two serializable values.
pub fn config_diff<A: Serialize, B: Serialize>(a: &A, b: &B) -> Result<Vec<String>> {
    fn walk(prefix: &str, a: &serde_json::Value, b: &serde_json::Value, out: &mut Vec<String>) {
        use serde_json::Value::Object;
        match (a, b) {
            (Object(x), Object(y)) => {
                let mut keys: Vec<&String> = x.keys().chain(y.keys()).collect();
                keys.sort();
                keys.dedup();
                let null = serde_json::Value::Null;
                for k in keys {
                    let p = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                    walk(&p, x.get(k).unwrap_or(&null), y.get(k).unwrap_or(&null), out);
                }
            }
            _ if a != b => out.push(prefix.to_string()),
            _ => {}
        }
    }
    let mut out = Vec::new();
    walk("", &serde_json::to_value(a)?, &serde_json::to_value(b)?, &mut out);
    Ok(out)
}
