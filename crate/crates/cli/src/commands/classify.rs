use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tda_lab::eval::{argmax, classify_by_top1};

use super::read_dataset;
use crate::config::{resolve_opt, RunConfig};
use crate::error::{CliError, Result};
use crate::run_dir::RunDir;
use crate::scores::{Layout, ScoreFile};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct ClassifyConfig {
    /// An `attribute` run in pair layout over `train` and `test`.
    pub scores: Option<PathBuf>,
    pub train: Option<PathBuf>,
    pub test: Option<PathBuf>,
    pub lower_is_better: Option<bool>,
}

impl RunConfig for ClassifyConfig {
    fn resolve_paths(&mut self, base: &Path) {
        for p in [&mut self.scores, &mut self.train, &mut self.test] {
            resolve_opt(base, p);
        }
    }
}

#[derive(Serialize)]
struct Accuracy {
    accuracy: f64,
    n_test: usize,
}

pub fn run(cfg: ClassifyConfig, out: &Path) -> Result<String> {
    let (Some(scores), Some(train), Some(test)) = (&cfg.scores, &cfg.train, &cfg.test) else {
        return Err(CliError::Config("classify needs `scores`, `train` and `test`".into()));
    };
    let file = ScoreFile::load(scores)?;
    if file.meta.layout != Layout::Pairs {
        return Err(CliError::Config("classify needs pair-layout scores".into()));
    }
    let (train, test) = (read_dataset(train)?, read_dataset(test)?);
    let run = RunDir::create(out)?;
    run.record(&cfg, &[scores.as_path(), cfg.train.as_deref().unwrap(), cfg.test.as_deref().unwrap()])?;
    let m = file.oriented(cfg.lower_is_better);
    let tags = |d: &tda_lab::data::Dataset| d.examples().iter().map(|e| e.tag.clone()).collect::<Vec<_>>();
    let (train_tags, test_tags) = (tags(&train), tags(&test));
    let accuracy = classify_by_top1(&m, &train_tags, &test_tags)?;
    let mut csv = String::from("test_id,top1_train_id,predicted_tag,true_tag\n");
    for (j, x) in test.examples().iter().enumerate() {
        let i = argmax(m.row(j)).expect("non-empty row");
        let z = &train.examples()[i];
        csv.push_str(&format!("{},{},{},{}\n", x.id, z.id, z.tag.as_deref().unwrap_or(""), x.tag.as_deref().unwrap_or("")));
    }
    run.write("predictions.csv", csv.as_bytes())?;
    run.write_json("accuracy.json", &Accuracy { accuracy, n_test: test.len() })?;
    Ok(format!("top-1 accuracy {accuracy:.4} on {} test examples", test.len()))
}
