use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tda_lab::data::{Dataset, DatasetKind};
use tda_lab::eval::{synth_planted_dataset, PlantedConfig};
use tda_lab::models::{ModelSpec, TrainConfig};
use tda_lab::oracle::{generate_instance, GenConfig, NormalizeMode};
use tda_lab::rng::RngSeed;

use super::default_model;
use crate::config::{resolve_path, RunConfig};
use crate::error::{CliError, Result};
use crate::run_dir::RunDir;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub enum DataSource {
    Planted(PlantedConfig),
    Jsonl(PathBuf),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GenDataConfig {
    pub seed: u64,
    pub instances: usize,
    pub source: DataSource,
    pub n_valid: usize,
    pub n_train: usize,
    pub m_subsets: usize,
    pub n_per_subset: usize,
    /// Defaults to l2-regularized logistic (or linear) regression on the data.
    pub model: Option<ModelSpec>,
    pub train: TrainConfig,
    pub normalize: NormalizeMode,
}

impl Default for GenDataConfig {
    fn default() -> Self {
        GenDataConfig {
            seed: 0,
            instances: 4,
            source: DataSource::Planted(PlantedConfig { num_tasks: 10, per_task: 20, d: 3, noise: 0.3, separation: 3.0 }),
            n_valid: 50,
            n_train: 150,
            m_subsets: 60,
            n_per_subset: 50,
            model: None,
            train: TrainConfig { epochs: 2000, learning_rate: 0.1, tol: Some(1e-6), ..Default::default() },
            normalize: NormalizeMode::Variance,
        }
    }
}

impl RunConfig for GenDataConfig {
    fn resolve_paths(&mut self, base: &Path) {
        if let DataSource::Jsonl(p) = &mut self.source {
            resolve_path(base, p);
        }
    }
}

#[derive(Serialize)]
struct InstanceSummary {
    dir: String,
    m: usize,
    n_valid: usize,
    degenerate_columns: usize,
}

pub fn run(mut cfg: GenDataConfig, out: &Path) -> Result<String> {
    if cfg.instances == 0 {
        return Err(CliError::Config("instances must be at least 1".into()));
    }
    let full = match &cfg.source {
        DataSource::Planted(pc) => synth_planted_dataset(pc, RngSeed(cfg.seed))?,
        DataSource::Jsonl(p) => Dataset::read_jsonl(fs::read(p).map_err(CliError::io(p))?.as_slice())?,
    };
    let model = cfg.model.clone().unwrap_or_else(|| default_model(&full));
    cfg.model = Some(model.clone());
    let gen = GenConfig {
        n_valid: cfg.n_valid,
        n_train: cfg.n_train,
        m_subsets: cfg.m_subsets,
        n_per_subset: cfg.n_per_subset,
        model,
        train: cfg.train.clone(),
        normalize: cfg.normalize,
    };
    let run = RunDir::create(out)?;
    let inputs: Vec<&Path> = match &cfg.source {
        DataSource::Jsonl(p) => vec![p.as_path()],
        DataSource::Planted(_) => vec![],
    };
    run.record(&cfg, &inputs)?;
    let mut buf = Vec::new();
    full.write_jsonl(&mut buf)?;
    run.write("dataset.jsonl", &buf)?;
    let mut summary = Vec::new();
    for k in 0..cfg.instances {
        let inst = generate_instance(&full, &gen, RngSeed(cfg.seed).derive(k as u64))?;
        let name = format!("instance-{k}");
        inst.save(&run.path(&name))?;
        summary.push(InstanceSummary {
            dir: name,
            m: inst.m(),
            n_valid: inst.n_valid(),
            degenerate_columns: inst.degenerate.iter().filter(|&&d| d).count(),
        });
    }
    run.write_json("summary.json", &summary)?;
    let degenerate: usize = summary.iter().map(|s| s.degenerate_columns).sum();
    let kind = match full.kind() {
        DatasetKind::Regression => "regression".to_string(),
        DatasetKind::Classification { num_classes } => format!("{num_classes}-class"),
    };
    Ok(format!(
        "{} instances (M={}, n={}, N_v={}) from {} {kind} examples, {degenerate} degenerate columns",
        cfg.instances,
        cfg.m_subsets,
        cfg.n_per_subset,
        cfg.n_valid,
        full.len()
    ))
}
