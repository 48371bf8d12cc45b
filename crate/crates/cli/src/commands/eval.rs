use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tda_lab::eval::lds;
use tda_lab::oracle::CrossValInstance;

use crate::config::{resolve_opt, RunConfig};
use crate::error::{CliError, Result};
use crate::run_dir::RunDir;
use crate::scores::{Layout, ScoreFile};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    /// An `attribute` run directory (or its `scores.bin`) in subset layout.
    pub scores: Option<PathBuf>,
    pub instance: Option<PathBuf>,
    /// Overrides the orientation recorded with the scores.
    pub lower_is_better: Option<bool>,
}

impl RunConfig for EvalConfig {
    fn resolve_paths(&mut self, base: &Path) {
        resolve_opt(base, &mut self.scores);
        resolve_opt(base, &mut self.instance);
    }
}

#[derive(Serialize)]
struct Report {
    method: String,
    mean: f64,
    mean_x100: f64,
    per_target: Vec<TargetLds>,
    num_subsets: usize,
    degenerate_count: usize,
    degenerate_targets: Vec<usize>,
}

#[derive(Serialize)]
struct TargetLds {
    target_id: usize,
    spearman: f64,
}

pub fn run(cfg: EvalConfig, out: &Path) -> Result<String> {
    let (Some(scores), Some(instance)) = (&cfg.scores, &cfg.instance) else {
        return Err(CliError::Config("eval needs `scores` and `instance`".into()));
    };
    let file = ScoreFile::load(scores)?;
    if file.meta.layout != Layout::Subsets {
        return Err(CliError::Config("eval needs subset-layout scores (attribute with `instance`)".into()));
    }
    let inst = CrossValInstance::load(instance)?;
    let run = RunDir::create(out)?;
    run.record(&cfg, &[scores.as_path(), instance.as_path()])?;
    let rep = lds(&file.oriented(cfg.lower_is_better), &inst.labels)?;
    let ids: Vec<usize> = (0..inst.n_valid()).filter(|j| !rep.degenerate_targets.contains(j)).map(|j| inst.valid.examples()[j].id).collect();
    let report = Report {
        method: file.meta.method.clone(),
        mean: rep.mean,
        mean_x100: rep.mean * 100.0,
        per_target: ids.into_iter().zip(&rep.per_target).map(|(target_id, &spearman)| TargetLds { target_id, spearman }).collect(),
        num_subsets: rep.num_subsets,
        degenerate_count: rep.degenerate_count,
        degenerate_targets: rep.degenerate_targets.clone(),
    };
    run.write_json("report.json", &report)?;
    Ok(format!(
        "{}: LDS x100 = {:.2} over {} targets ({} degenerate)",
        file.meta.method,
        report.mean_x100,
        report.per_target.len(),
        report.degenerate_count
    ))
}
