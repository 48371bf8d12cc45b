use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, DatasetKind, Example, Label};
use crate::error::{Error, Result};
use crate::rng::RngSeed;

/// Synthetic classification data where each task is one class with its own
/// feature cluster, so a task's training examples drive its test losses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlantedConfig {
    pub num_tasks: usize,
    pub per_task: usize,
    pub d: usize,
    /// Standard deviation of the isotropic within-cluster noise.
    pub noise: f64,
    /// Distance scale of the cluster centers.
    pub separation: f64,
}

impl Default for PlantedConfig {
    fn default() -> Self {
        PlantedConfig {
            num_tasks: 2,
            per_task: 30,
            d: 4,
            noise: 0.5,
            separation: 4.0,
        }
    }
}

/// Examples are laid out task by task; ids are dense, tags are `task-<t>`.
pub fn synth_planted_dataset(cfg: &PlantedConfig, seed: RngSeed) -> Result<Dataset> {
    if cfg.num_tasks < 2 || cfg.per_task == 0 || cfg.d == 0 {
        return Err(Error::InvalidSize("planted data needs >= 2 tasks, per_task >= 1, d >= 1".into()));
    }
    if !(cfg.noise >= 0.0 && cfg.noise.is_finite() && cfg.separation > 0.0 && cfg.separation.is_finite()) {
        return Err(Error::InvalidConfig("noise must be >= 0 and separation > 0".into()));
    }
    let mut rng = seed.derive(0x91a7).rng();
    let mut normal = || -> f64 { StandardNormal.sample(&mut rng) };
    // Orthogonal directions while they fit, so no two tasks share a center
    // direction by chance; beyond d the extra centers are plain random.
    let mut centers: Vec<Vec<f64>> = Vec::with_capacity(cfg.num_tasks);
    while centers.len() < cfg.num_tasks {
        let mut v: Vec<f64> = (0..cfg.d).map(|_| normal()).collect();
        if centers.len() < cfg.d {
            for c in &centers {
                let proj = v.iter().zip(c).map(|(a, b)| a * b).sum::<f64>() / (cfg.separation * cfg.separation);
                v.iter_mut().zip(c).for_each(|(a, b)| *a -= proj * b);
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm < 1e-8 {
            continue;
        }
        centers.push(v.into_iter().map(|x| x / norm * cfg.separation).collect());
    }
    let mut examples = Vec::with_capacity(cfg.num_tasks * cfg.per_task);
    for (t, c) in centers.iter().enumerate() {
        for _ in 0..cfg.per_task {
            let f = c.iter().map(|&m| m + cfg.noise * normal()).collect();
            examples.push(Example::new(examples.len(), f, Label::Class(t)).with_tag(format!("task-{t}")));
        }
    }
    Dataset::new(examples, cfg.d, DatasetKind::Classification { num_classes: cfg.num_tasks })
}
