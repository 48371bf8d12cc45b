use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tda_lab::airrep::{train_airrep, AirRepModel, AirRepSpec, AirRepTrainConfig, RankLossConfig};
use tda_lab::oracle::CrossValInstance;
use tda_lab::rng::RngSeed;

use crate::config::{resolve_path, RunConfig};
use crate::error::{CliError, Result};
use crate::run_dir::RunDir;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainAirRepConfig {
    /// Instance directories written by `gen-data`.
    pub instances: Vec<PathBuf>,
    pub init_seed: u64,
    pub airrep: AirRepSpec,
    pub train: AirRepTrainConfig,
    pub loss: RankLossConfig,
}

impl Default for TrainAirRepConfig {
    fn default() -> Self {
        TrainAirRepConfig {
            instances: Vec::new(),
            init_seed: 0,
            airrep: AirRepSpec::default(),
            train: AirRepTrainConfig { lr: 1e-2, ..Default::default() },
            loss: RankLossConfig::default(),
        }
    }
}

impl RunConfig for TrainAirRepConfig {
    fn resolve_paths(&mut self, base: &Path) {
        self.instances.iter_mut().for_each(|p| resolve_path(base, p));
    }
}

pub fn run(cfg: TrainAirRepConfig, out: &Path) -> Result<String> {
    if cfg.instances.is_empty() {
        return Err(CliError::Config("`instances` lists no instance directories".into()));
    }
    let insts: Vec<CrossValInstance> = cfg.instances.iter().map(|p| CrossValInstance::load(p)).collect::<tda_lab::Result<_>>()?;
    let run = RunDir::create(out)?;
    let inputs: Vec<&Path> = cfg.instances.iter().map(PathBuf::as_path).collect();
    run.record(&cfg, &inputs)?;
    let init = AirRepModel::init(insts[0].train_pool.d(), &cfg.airrep, RngSeed(cfg.init_seed))?;
    let (model, log) = train_airrep(&insts, init, &cfg.train, &cfg.loss)?;
    model.save(&run.path("airrep.bin"))?;
    run.write("training_log.csv", log.to_csv().as_bytes())?;
    let tail = |l: &[f64]| l.iter().sum::<f64>() / l.len().max(1) as f64;
    let k = log.losses.len().min(10);
    Ok(format!(
        "trained {} steps on {} instances; mean loss first {k} steps {:.4}, last {k} {:.4}",
        log.losses.len(),
        insts.len(),
        tail(&log.losses[..k]),
        tail(&log.losses[log.losses.len() - k..])
    ))
}
