//! Score matrices on disk: `scores.bin` (little-endian `f64`, row-major) plus
//! a `scores.json` sidecar, with a `scores.csv` copy for reading by eye.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use tda_lab::matrix::Matrix;

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Layout {
    /// `M × N_v`: one row per subset of an instance, one column per validation example.
    Subsets,
    /// `|test| × |train|` pairwise scores.
    Pairs,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoreMeta {
    pub rows: usize,
    pub cols: usize,
    pub dtype: String,
    pub method: String,
    pub layout: Layout,
    /// Orientation of the method: true when smaller scores mean more helpful.
    pub lower_is_better: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreFile {
    pub meta: ScoreMeta,
    pub matrix: Matrix,
}

impl ScoreFile {
    pub fn new(matrix: Matrix, method: String, layout: Layout, lower_is_better: bool) -> Self {
        ScoreFile {
            meta: ScoreMeta {
                rows: matrix.rows(),
                cols: matrix.cols(),
                dtype: "float64-le".into(),
                method,
                layout,
                lower_is_better,
            },
            matrix,
        }
    }

    pub fn from_bytes(bin: &[u8], sidecar: &[u8]) -> Result<Self> {
        let meta: ScoreMeta = serde_json::from_slice(sidecar).map_err(|e| CliError::Config(format!("score sidecar: {e}")))?;
        if meta.dtype != "float64-le" {
            return Err(tda_lab::Error::Format(format!("unsupported dtype {}", meta.dtype)).into());
        }
        let matrix = Matrix::from_le_bytes(bin, meta.rows, meta.cols)?;
        if matrix.as_slice().iter().any(|v| !v.is_finite()) {
            return Err(tda_lab::Error::Format("non-finite score".into()).into());
        }
        Ok(ScoreFile { meta, matrix })
    }

    /// Reads `scores.bin` and `scores.json` from a run directory, or from the
    /// directory holding a `scores.bin` path.
    pub fn load(path: &Path) -> Result<Self> {
        let dir = if path.is_dir() { path } else { path.parent().unwrap_or(Path::new(".")) };
        let bin = dir.join("scores.bin");
        let side = dir.join("scores.json");
        let b = fs::read(&bin).map_err(CliError::io(&bin))?;
        let s = fs::read(&side).map_err(CliError::io(&side))?;
        ScoreFile::from_bytes(&b, &s)
    }

    /// Scores oriented so that larger means more helpful.
    pub fn oriented(&self, lower_is_better: Option<bool>) -> Matrix {
        if lower_is_better.unwrap_or(self.meta.lower_is_better) {
            self.matrix.map(|v| -v)
        } else {
            self.matrix.clone()
        }
    }

    pub fn to_csv(&self, row_ids: &[usize], col_ids: &[usize]) -> String {
        let header = match self.meta.layout {
            Layout::Subsets => "subset_id,target_id,score",
            Layout::Pairs => "test_id,train_id,score",
        };
        let mut s = format!("{header}\n");
        for (r, rid) in row_ids.iter().enumerate() {
            for (c, cid) in col_ids.iter().enumerate() {
                s.push_str(&format!("{rid},{cid},{}\n", self.matrix.get(r, c)));
            }
        }
        s
    }

    pub fn sidecar(&self) -> Vec<u8> {
        let mut v = serde_json::to_vec_pretty(&self.meta).expect("meta serializes");
        v.push(b'\n');
        v
    }
}
