use std::path::Path;

use serde::{Deserialize, Serialize};

use super::tsne::{tsne, TsneConfig};
use crate::data::{stack_pairs, PatchPair};
use crate::error::{Error, Result};
use crate::model::Upscaler;
use crate::pecl::{l2_normalize, SiameseEncoder};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Role {
    #[serde(rename = "HR")]
    Hr,
    #[serde(rename = "SR")]
    Sr,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Hr => "HR",
            Role::Sr => "SR",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingRow {
    pub id: String,
    pub role: Role,
    /// Unit-normalized embedding.
    pub vector: Vec<f64>,
}

/// HR and SR embeddings of every pair, in pair order (HR row then SR row).
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingTable {
    pub rows: Vec<EmbeddingRow>,
}

impl EmbeddingTable {
    /// `id,role,e0..e{d-1}`.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let d = self.rows.first().map_or(0, |r| r.vector.len());
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["id".to_string(), "role".to_string()];
        header.extend((0..d).map(|i| format!("e{i}")));
        w.write_record(&header)?;
        for r in &self.rows {
            let mut rec = vec![r.id.clone(), r.role.as_str().to_string()];
            rec.extend(r.vector.iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    /// Two-dimensional t-SNE coordinates, one per row.
    pub fn project(&self, cfg: &TsneConfig) -> Result<Vec<[f64; 2]>> {
        let pts: Vec<Vec<f64>> = self.rows.iter().map(|r| r.vector.clone()).collect();
        tsne(&pts, cfg)
    }

    /// `id,role,x,y`.
    pub fn write_projection_csv(&self, coords: &[[f64; 2]], path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        if coords.len() != self.rows.len() {
            return Err(Error::InvalidArgument("one coordinate per row required".into()));
        }
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["id", "role", "x", "y"])?;
        for (r, c) in self.rows.iter().zip(coords) {
            w.write_record([r.id.clone(), r.role.as_str().to_string(), c[0].to_string(), c[1].to_string()])?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Embeds each pair's HR patch and the upscaler's SR output with the Siamese encoder.
pub fn export_embeddings(
    upscaler: &dyn Upscaler,
    encoder: Option<&SiameseEncoder<f32>>,
    pairs: &[PatchPair],
) -> Result<EmbeddingTable> {
    let encoder = encoder.ok_or_else(|| Error::Checkpoint("checkpoint has no Siamese encoder parameters".into()))?;
    let mut rows = Vec::with_capacity(2 * pairs.len());
    for chunk in pairs.chunks(16) {
        let (lr, hr) = stack_pairs(chunk.iter())?;
        let sr = upscaler.upscale(&lr)?;
        let eh = encoder.forward(&hr)?;
        let es = encoder.forward(&sr)?;
        let d = encoder.embed_dim();
        for (i, p) in chunk.iter().enumerate() {
            let id = p.origin.id();
            for (role, e) in [(Role::Hr, &eh), (Role::Sr, &es)] {
                let v: Vec<f64> = e.data()[i * d..(i + 1) * d].iter().map(|&x| x as f64).collect();
                rows.push(EmbeddingRow {
                    id: id.clone(),
                    role,
                    vector: l2_normalize(&v).v,
                });
            }
        }
    }
    Ok(EmbeddingTable { rows })
}
