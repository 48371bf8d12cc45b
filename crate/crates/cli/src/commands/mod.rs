pub mod attribute;
pub mod classify;
pub mod eval;
pub mod gen_data;
pub mod select;
pub mod train_airrep;

use std::fs;
use std::path::Path;

use tda_lab::data::{Dataset, DatasetKind};
use tda_lab::models::ModelSpec;

use crate::error::{CliError, Result};

/// l2-regularized logistic regression for classification data, linear otherwise.
pub fn default_model(data: &Dataset) -> ModelSpec {
    match data.kind() {
        DatasetKind::Classification { num_classes } => ModelSpec::logistic_regression(data.d(), num_classes).with_l2(1e-2),
        DatasetKind::Regression => ModelSpec::linear_regression(data.d()).with_l2(1e-2),
    }
}

pub fn read_dataset(path: &Path) -> Result<Dataset> {
    let bytes = fs::read(path).map_err(CliError::io(path))?;
    Ok(Dataset::read_jsonl(bytes.as_slice())?)
}
