//! JSON-lines dataset manifests.
//!
//! One object per line: `{"path": "...", "plate_text": "...", "split": "train"}`.
//! `plate_text` and `source` are optional. Relative paths resolve against the
//! manifest's directory. Images are not opened here.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "train" => Some(Split::Train),
            "val" => Some(Split::Val),
            "test" => Some(Split::Test),
            _ => None,
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageRecord {
    pub path: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plate_text: Option<String>,
    pub split: Split,
    #[serde(default)]
    pub source_tag: String,
}

#[derive(Clone, Debug, Default)]
pub struct Manifest {
    pub records: Vec<ImageRecord>,
    pub split_counts: BTreeMap<Split, usize>,
    pub warnings: Vec<String>,
}

impl Manifest {
    pub fn split(&self, split: Split) -> impl Iterator<Item = &ImageRecord> {
        self.records.iter().filter(move |r| r.split == split)
    }
}

pub fn load_manifest(path: impl AsRef<Path>) -> Result<Manifest> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new(""));
    let default_tag = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let mut manifest = parse_manifest(&text, base, &default_tag)?;
    if manifest.records.is_empty() {
        let msg = format!("{}: manifest contains no records", path.display());
        log::warn!("{msg}");
        manifest.warnings.push(msg);
    }
    Ok(manifest)
}

/// Parses manifest text; relative paths are joined onto `base`.
pub fn parse_manifest(text: &str, base: &Path, default_tag: &str) -> Result<Manifest> {
    let mut manifest = Manifest::default();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let err = |msg: &str| Error::Manifest {
            line: line_no,
            msg: msg.to_string(),
        };
        let value: Value = serde_json::from_str(line).map_err(|e| err(&format!("invalid JSON ({e})")))?;
        let obj = value.as_object().ok_or_else(|| err("expected a JSON object"))?;
        let raw_path = match obj.get("path") {
            Some(Value::String(p)) if !p.is_empty() => p,
            Some(_) => return Err(err("path must be a non-empty string")),
            None => return Err(err("missing path")),
        };
        let split = match obj.get("split") {
            Some(Value::String(s)) => {
                Split::parse(s).ok_or_else(|| err(&format!("unknown split {s:?}")))?
            }
            Some(_) => return Err(err("split must be a string")),
            None => return Err(err("missing split")),
        };
        let plate_text = match obj.get("plate_text") {
            None | Some(Value::Null) => None,
            Some(Value::String(s)) => Some(s.clone()),
            Some(_) => return Err(err("plate_text must be a string")),
        };
        let source_tag = match obj.get("source") {
            Some(Value::String(s)) => s.clone(),
            _ => default_tag.to_string(),
        };
        let p = PathBuf::from(raw_path);
        let path = if p.is_absolute() { p } else { base.join(p) };
        *manifest.split_counts.entry(split).or_default() += 1;
        manifest.records.push(ImageRecord {
            path,
            plate_text,
            split,
            source_tag,
        });
    }
    Ok(manifest)
}

/// Writes records back out in manifest form, paths as given.
pub fn write_manifest(path: impl AsRef<Path>, records: &[ImageRecord]) -> Result<()> {
    let mut out = String::new();
    for r in records {
        let mut obj = serde_json::Map::new();
        obj.insert("path".into(), Value::String(r.path.to_string_lossy().into_owned()));
        if let Some(t) = &r.plate_text {
            obj.insert("plate_text".into(), Value::String(t.clone()));
        }
        obj.insert("split".into(), Value::String(r.split.to_string()));
        if !r.source_tag.is_empty() {
            obj.insert("source".into(), Value::String(r.source_tag.clone()));
        }
        out.push_str(&serde_json::to_string(&Value::Object(obj))?);
        out.push('\n');
    }
    std::fs::write(path.as_ref(), out).map_err(|e| Error::io(path.as_ref(), e))
}
