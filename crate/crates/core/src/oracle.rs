//! Retraining oracles and the cross-validation label pipeline.
//!
//! A [`CrossValInstance`] is one generation unit: a validation split, a
//! training split, `M` subsets drawn from the training split with
//! replacement, the loss of every subset-trained model on every validation
//! example, and per-target normalized labels
//! `r̂ = −(ℓ − mean) / var` (mean and population variance over the `M`
//! models, per validation column).

use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{parse_manifest, sample_subsets, split_pool, write_manifest, Dataset, Example, SubsetRef};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::models::{train, train_examples, train_from, ModelSpec, TrainConfig};
use crate::rng::RngSeed;

/// Columns whose loss variance over the `M` models falls below this are degenerate.
pub const EPS_VAR: f64 = 1e-12;

/// Largest pool accepted by the leave-one-out oracle.
pub const LOO_POOL_CAP: usize = 500;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetrainOutcome {
    pub subset_id: usize,
    pub target_id: usize,
    /// `ℓ(x; θ*_S)`.
    pub r: f64,
}

/// Trains on `subset` and reports the loss of the result on every target.
pub fn retrain_and_eval(
    spec: &ModelSpec,
    subset: &SubsetRef,
    pool: &Dataset,
    targets: &Dataset,
    cfg: &TrainConfig,
) -> Result<Vec<RetrainOutcome>> {
    let model = train(spec, subset, pool, cfg)?;
    targets
        .examples()
        .iter()
        .map(|x| {
            let r = model.loss(x)?;
            if !r.is_finite() {
                return Err(Error::NonFinite(format!("loss on target {}", x.id)));
            }
            Ok(RetrainOutcome {
                subset_id: subset.subset_id,
                target_id: x.id,
                r,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum NormalizeMode {
    #[default]
    Variance,
    Stddev,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedLabels {
    pub labels: Matrix,
    pub degenerate: Vec<bool>,
}

/// Per-column `−(ℓ − mean)/var` (or `/std`). Columns with population variance
/// below [`EPS_VAR`] are zeroed and flagged.
pub fn normalize_labels(losses: &Matrix, mode: NormalizeMode) -> Result<NormalizedLabels> {
    let (m, nv) = losses.shape();
    if m < 2 {
        return Err(Error::InvalidSize(format!("need at least 2 models to normalize, got {m}")));
    }
    let mut labels = Matrix::zeros(m, nv);
    let mut degenerate = vec![false; nv];
    for j in 0..nv {
        let col = losses.column(j);
        let mean = col.iter().sum::<f64>() / m as f64;
        let var = col.iter().map(|l| (l - mean) * (l - mean)).sum::<f64>() / m as f64;
        if !(var >= EPS_VAR) {
            degenerate[j] = true;
            continue;
        }
        let scale = match mode {
            NormalizeMode::Variance => var,
            NormalizeMode::Stddev => var.sqrt(),
        };
        for (i, l) in col.iter().enumerate() {
            labels.set(i, j, -(l - mean) / scale);
        }
    }
    Ok(NormalizedLabels { labels, degenerate })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenConfig {
    pub n_valid: usize,
    pub n_train: usize,
    pub m_subsets: usize,
    pub n_per_subset: usize,
    pub model: ModelSpec,
    pub train: TrainConfig,
    #[serde(default)]
    pub normalize: NormalizeMode,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrossValInstance {
    pub valid: Dataset,
    pub train_pool: Dataset,
    pub subsets: Vec<SubsetRef>,
    /// `losses[i][j] = ℓ(x_j; θ_i)`, shape `M × N_v`.
    pub losses: Matrix,
    /// Normalized labels `r̂`, shape `M × N_v`.
    pub labels: Matrix,
    pub degenerate: Vec<bool>,
    pub normalize: NormalizeMode,
}

impl CrossValInstance {
    pub fn m(&self) -> usize {
        self.subsets.len()
    }

    pub fn n_valid(&self) -> usize {
        self.valid.len()
    }

    /// Validation columns usable as ranking targets.
    pub fn active_targets(&self) -> Vec<usize> {
        (0..self.n_valid()).filter(|&j| !self.degenerate[j]).collect()
    }

    /// Writes `valid.jsonl`, `train.jsonl`, `subsets.json`, `losses.bin`,
    /// `labels.bin` and the `shape.json` sidecar into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let mut buf = Vec::new();
        self.valid.write_jsonl(&mut buf)?;
        fs::write(dir.join("valid.jsonl"), &buf)?;
        buf.clear();
        self.train_pool.write_jsonl(&mut buf)?;
        fs::write(dir.join("train.jsonl"), &buf)?;
        buf.clear();
        write_manifest(&self.subsets, &mut buf)?;
        fs::write(dir.join("subsets.json"), &buf)?;
        fs::write(dir.join("losses.bin"), self.losses.to_le_bytes())?;
        fs::write(dir.join("labels.bin"), self.labels.to_le_bytes())?;
        let sidecar = ShapeSidecar {
            rows: self.losses.rows(),
            cols: self.losses.cols(),
            dtype: "float64-le".into(),
            normalize: self.normalize,
            degenerate_columns: (0..self.degenerate.len()).filter(|&j| self.degenerate[j]).collect(),
        };
        fs::write(dir.join("shape.json"), serde_json::to_vec_pretty(&sidecar)?)?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let read = |name: &str| fs::read(dir.join(name));
        CrossValInstance::from_parts(&InstanceParts {
            valid: &read("valid.jsonl")?,
            train: &read("train.jsonl")?,
            subsets: &read("subsets.json")?,
            shape: &read("shape.json")?,
            losses: &read("losses.bin")?,
            labels: &read("labels.bin")?,
        })
    }

    /// Decodes an instance from the raw contents of its six files.
    pub fn from_parts(parts: &InstanceParts) -> Result<Self> {
        let valid = Dataset::read_jsonl(parts.valid)?;
        let train_pool = Dataset::read_jsonl(parts.train)?;
        let subsets = parse_manifest(parts.subsets, "train", Some(&train_pool))?;
        let sidecar: ShapeSidecar = serde_json::from_slice(parts.shape)?;
        if sidecar.dtype != "float64-le" {
            return Err(Error::Format(format!("unsupported dtype {}", sidecar.dtype)));
        }
        if sidecar.rows != subsets.len() || sidecar.cols != valid.len() {
            return Err(Error::Format(format!(
                "shape {}x{} does not match {} subsets x {} validation examples",
                sidecar.rows,
                sidecar.cols,
                subsets.len(),
                valid.len()
            )));
        }
        let losses = Matrix::from_le_bytes(parts.losses, sidecar.rows, sidecar.cols)?;
        let labels = Matrix::from_le_bytes(parts.labels, sidecar.rows, sidecar.cols)?;
        let mut degenerate = vec![false; sidecar.cols];
        for &j in &sidecar.degenerate_columns {
            *degenerate
                .get_mut(j)
                .ok_or_else(|| Error::Format(format!("degenerate column {j} out of range")))? = true;
        }
        Ok(CrossValInstance {
            valid,
            train_pool,
            subsets,
            losses,
            labels,
            degenerate,
            normalize: sidecar.normalize,
        })
    }
}

/// File contents of a saved instance, by file.
#[derive(Debug, Clone, Copy)]
pub struct InstanceParts<'a> {
    pub valid: &'a [u8],
    pub train: &'a [u8],
    pub subsets: &'a [u8],
    pub shape: &'a [u8],
    pub losses: &'a [u8],
    pub labels: &'a [u8],
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShapeSidecar {
    pub rows: usize,
    pub cols: usize,
    pub dtype: String,
    pub normalize: NormalizeMode,
    pub degenerate_columns: Vec<usize>,
}

/// Split, sample subsets, retrain on each (in parallel, seed `seed ⊕ subset_id`),
/// evaluate on the validation split, and normalize.
pub fn generate_instance(full: &Dataset, cfg: &GenConfig, seed: RngSeed) -> Result<CrossValInstance> {
    cfg.model.validate()?;
    cfg.train.validate()?;
    cfg.model.check_dataset_kind(full.kind())?;
    let (valid, train_pool) = split_pool(full, cfg.n_valid, cfg.n_train, seed.derive(1))?;
    let subsets = sample_subsets(&train_pool, "train", cfg.m_subsets, cfg.n_per_subset, seed.derive(2))?;
    let rows: Vec<Vec<f64>> = subsets
        .par_iter()
        .map(|s| {
            let mut tcfg = cfg.train.clone();
            tcfg.seed = seed.for_subset(s.subset_id);
            retrain_and_eval(&cfg.model, s, &train_pool, &valid, &tcfg).map(|out| out.into_iter().map(|o| o.r).collect())
        })
        .collect::<Result<_>>()?;
    let losses = Matrix::from_rows(rows)?;
    let NormalizedLabels { labels, degenerate } = normalize_labels(&losses, cfg.normalize)?;
    Ok(CrossValInstance {
        valid,
        train_pool,
        subsets,
        losses,
        labels,
        degenerate,
        normalize: cfg.normalize,
    })
}

/// Brute-force leave-one-out effects, shape `|pool| × |targets|`:
/// `ℓ(x_j; θ*_{pool∖z_i}) − ℓ(x_j; θ*_pool)`. Positive means removing `z_i` hurts `x_j`.
///
/// Convex families warm-start each retraining from the full-pool optimum.
pub fn loo_influence_oracle(spec: &ModelSpec, pool: &Dataset, targets: &Dataset, cfg: &TrainConfig) -> Result<Matrix> {
    if pool.len() > LOO_POOL_CAP {
        return Err(Error::PoolTooLarge {
            n: pool.len(),
            cap: LOO_POOL_CAP,
        });
    }
    if pool.len() < 2 {
        return Err(Error::InvalidSize("leave-one-out needs at least 2 pool examples".into()));
    }
    spec.check_dataset_kind(pool.kind())?;
    let all: Vec<&Example> = pool.examples().iter().collect();
    let full = train_examples(spec, &all, cfg)?;
    let base: Vec<f64> = targets.examples().iter().map(|x| full.loss(x)).collect::<Result<_>>()?;
    let rows: Vec<Vec<f64>> = (0..pool.len())
        .into_par_iter()
        .map(|i| {
            let rest: Vec<&Example> = all.iter().enumerate().filter(|&(k, _)| k != i).map(|(_, z)| *z).collect();
            let model = if spec.is_convex() {
                train_from(spec, full.theta.clone(), &rest, cfg)?
            } else {
                train_examples(spec, &rest, cfg)?
            };
            targets
                .examples()
                .iter()
                .zip(&base)
                .map(|(x, b)| Ok(model.loss(x)? - b))
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;
    Matrix::from_rows(rows)
}
