use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tda_lab::eval::select_topk;

use crate::config::{resolve_opt, RunConfig};
use crate::error::{CliError, Result};
use crate::run_dir::RunDir;
use crate::scores::{Layout, ScoreFile};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SelectConfig {
    /// An `attribute` run in pair layout.
    pub scores: Option<PathBuf>,
    pub k: usize,
    pub lower_is_better: Option<bool>,
}

impl Default for SelectConfig {
    fn default() -> Self {
        SelectConfig { scores: None, k: 10, lower_is_better: None }
    }
}

impl RunConfig for SelectConfig {
    fn resolve_paths(&mut self, base: &Path) {
        resolve_opt(base, &mut self.scores);
    }
}

pub fn run(cfg: SelectConfig, out: &Path) -> Result<String> {
    let scores = cfg.scores.as_deref().ok_or_else(|| CliError::Config("select needs `scores`".into()))?;
    let file = ScoreFile::load(scores)?;
    if file.meta.layout != Layout::Pairs {
        return Err(CliError::Config("select needs pair-layout scores (attribute with `train` and `test`)".into()));
    }
    let run = RunDir::create(out)?;
    run.record(&cfg, &[scores])?;
    let sel = select_topk(&file.oriented(cfg.lower_is_better), cfg.k)?;
    let mut csv = String::from("rank,train_id,best_rank\n");
    for (r, (id, best)) in sel.selected_ids.iter().zip(&sel.scores).enumerate() {
        csv.push_str(&format!("{},{id},{best}\n", r + 1));
    }
    run.write("selection.csv", csv.as_bytes())?;
    run.write_json("selection.json", &sel)?;
    Ok(format!("selected {} of {} training examples", sel.selected_ids.len(), file.meta.cols))
}
