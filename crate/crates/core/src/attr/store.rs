//! On-disk embedding store: `f32` little-endian rows plus a JSON sidecar.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Correction, GradientEmbedding, ProjectionInit};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbeddingMeta {
    pub q: usize,
    pub normalized: bool,
    pub correction: Correction,
    pub projection: Option<ProjectionInit>,
    pub projection_seed: Option<u64>,
    pub damping: f64,
    pub dtype: String,
    pub example_ids: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingStore {
    pub meta: EmbeddingMeta,
    rows: Vec<f32>,
}

fn sidecar_path(bin: &Path) -> PathBuf {
    let mut s = bin.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

impl EmbeddingStore {
    pub fn new(
        embeddings: &[GradientEmbedding],
        correction: Correction,
        projection: Option<(ProjectionInit, u64)>,
        damping: f64,
    ) -> Result<Self> {
        let q = embeddings.first().map_or(0, GradientEmbedding::q);
        let normalized = embeddings.first().is_some_and(|e| e.normalized);
        let mut rows = Vec::with_capacity(q * embeddings.len());
        for e in embeddings {
            if e.q() != q {
                return Err(Error::DimensionMismatch { expected: q, got: e.q() });
            }
            if e.normalized != normalized {
                return Err(Error::EmbeddingFlavor("mixed normalized and raw embeddings".into()));
            }
            rows.extend(e.phi.iter().map(|&v| v as f32));
        }
        Ok(EmbeddingStore {
            meta: EmbeddingMeta {
                q,
                normalized,
                correction,
                projection: projection.map(|p| p.0),
                projection_seed: projection.map(|p| p.1),
                damping,
                dtype: "float32-le".into(),
                example_ids: embeddings.iter().map(|e| e.example_id).collect(),
            },
            rows,
        })
    }

    pub fn len(&self) -> usize {
        self.meta.example_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn embeddings(&self) -> Vec<GradientEmbedding> {
        let q = self.meta.q;
        self.meta
            .example_ids
            .iter()
            .enumerate()
            .map(|(i, &id)| GradientEmbedding {
                example_id: id,
                phi: self.rows[i * q..(i + 1) * q].iter().map(|&v| f64::from(v)).collect(),
                normalized: self.meta.normalized,
            })
            .collect()
    }

    pub fn to_bytes(&self) -> (Vec<u8>, String) {
        let bin = self.rows.iter().flat_map(|v| v.to_le_bytes()).collect();
        let json = serde_json::to_string_pretty(&self.meta).expect("meta serializes");
        (bin, json)
    }

    pub fn from_bytes(bin: &[u8], sidecar: &str) -> Result<Self> {
        let meta: EmbeddingMeta = serde_json::from_str(sidecar)?;
        if meta.dtype != "float32-le" {
            return Err(Error::Format(format!("unsupported dtype {:?}", meta.dtype)));
        }
        let expected = meta
            .q
            .checked_mul(meta.example_ids.len())
            .and_then(|n| n.checked_mul(4))
            .ok_or_else(|| Error::Format("embedding shape overflows".into()))?;
        if bin.len() != expected {
            return Err(Error::Format(format!("expected {expected} bytes of embeddings, got {}", bin.len())));
        }
        let rows: Vec<f32> = bin.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("chunk of 4"))).collect();
        if rows.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("stored embedding".into()));
        }
        Ok(EmbeddingStore { meta, rows })
    }

    /// Writes `path` (payload) and `path.json` (sidecar).
    pub fn save(&self, path: &Path) -> Result<()> {
        let (bin, json) = self.to_bytes();
        fs::write(path, bin)?;
        fs::write(sidecar_path(path), json)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bin = fs::read(path)?;
        let json = fs::read_to_string(sidecar_path(path))?;
        EmbeddingStore::from_bytes(&bin, &json)
    }
}
