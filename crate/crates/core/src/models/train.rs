use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::network::Network;
use super::{ModelSpec, Provenance, TrainedModel};
use crate::data::{Dataset, Example, SubsetRef};
use crate::error::{Error, Result};
use crate::rng::RngSeed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    #[default]
    Gd,
    Adamw,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub optimizer: Optimizer,
    pub learning_rate: f64,
    pub epochs: usize,
    /// Minibatch size; `None` trains full-batch.
    pub batch_size: Option<usize>,
    /// Decoupled weight decay applied after each step.
    pub weight_decay: f64,
    pub seed: RngSeed,
    /// Full-batch only: stop early once the objective gradient norm drops below this.
    pub tol: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            optimizer: Optimizer::Gd,
            learning_rate: 0.5,
            epochs: 2000,
            batch_size: None,
            weight_decay: 0.0,
            seed: RngSeed(0),
            tol: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig("learning_rate must be positive".into()));
        }
        if self.epochs == 0 {
            return Err(Error::InvalidConfig("epochs must be positive".into()));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(Error::InvalidConfig("weight_decay must be nonnegative".into()));
        }
        if self.batch_size == Some(0) {
            return Err(Error::InvalidConfig("batch_size must be positive".into()));
        }
        Ok(())
    }
}

/// Trains `spec` on the members of `subset` (duplicates count as repeats).
pub fn train(spec: &ModelSpec, subset: &SubsetRef, pool: &Dataset, cfg: &TrainConfig) -> Result<TrainedModel> {
    spec.check_dataset_kind(pool.kind())?;
    let members = pool.members(subset)?;
    let mut model = train_examples(spec, &members, cfg)?;
    model.provenance.subset_id = Some(subset.subset_id);
    Ok(model)
}

/// Trains from the default initialization: zeros for convex families,
/// seeded Glorot-uniform weights (zero biases) for an mlp.
pub fn train_examples(spec: &ModelSpec, data: &[&Example], cfg: &TrainConfig) -> Result<TrainedModel> {
    spec.validate()?;
    let init = initial_params(spec, cfg.seed);
    train_from(spec, init, data, cfg)
}

pub(crate) fn initial_params(spec: &ModelSpec, seed: RngSeed) -> Vec<f64> {
    let net = Network::new(spec);
    let mut theta = vec![0.0; net.num_params()];
    if !spec.is_convex() {
        let mut rng = seed.derive(0x1417).rng();
        for (off, inp, out) in net.weight_blocks() {
            let bound = (6.0 / (inp + out) as f64).sqrt();
            for w in &mut theta[off..off + inp * out] {
                *w = rng.random_range(-bound..bound);
            }
        }
    }
    theta
}

/// Trains starting from `init`. Deterministic in `(spec, init, data, cfg)`.
pub fn train_from(spec: &ModelSpec, init: Vec<f64>, data: &[&Example], cfg: &TrainConfig) -> Result<TrainedModel> {
    spec.validate()?;
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::EmptySubset);
    }
    for z in data {
        spec.check_example(z)?;
    }
    let net = Network::new(spec);
    let p = net.num_params();
    if init.len() != p {
        return Err(Error::DimensionMismatch { expected: p, got: init.len() });
    }
    let mut theta = init;
    let mut grad = vec![0.0; p];
    let mut m1 = vec![0.0; p];
    let mut m2 = vec![0.0; p];
    let (beta1, beta2, eps) = (0.9f64, 0.999f64, 1e-8);
    let mut step = 0i32;
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut rng = cfg.seed.derive(0xba7c).rng();
    let batch = cfg.batch_size.unwrap_or(data.len()).min(data.len());
    let mut epochs_run = 0;

    'outer: for epoch in 0..cfg.epochs {
        if batch < data.len() {
            order.shuffle(&mut rng);
        }
        for chunk in order.chunks(batch) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            let mut loss = 0.0;
            for &i in chunk {
                let z = data[i];
                loss += net.loss_and_grad(&theta, &z.features, z.label, &mut grad);
            }
            let inv = 1.0 / chunk.len() as f64;
            let mut norm2 = 0.0;
            for (g, t) in grad.iter_mut().zip(&theta) {
                *g = *g * inv + spec.l2_reg * t;
                norm2 += *g * *g;
            }
            let objective = loss * inv + 0.5 * spec.l2_reg * theta.iter().map(|t| t * t).sum::<f64>();
            if !objective.is_finite() || !norm2.is_finite() {
                return Err(Error::TrainingDiverged { epoch });
            }
            if let Some(tol) = cfg.tol {
                if batch == data.len() && norm2.sqrt() <= tol {
                    break 'outer;
                }
            }
            step += 1;
            match cfg.optimizer {
                Optimizer::Gd => {
                    for (t, g) in theta.iter_mut().zip(&grad) {
                        *t -= cfg.learning_rate * (g + cfg.weight_decay * *t);
                    }
                }
                Optimizer::Adamw => {
                    let c1 = 1.0 - beta1.powi(step);
                    let c2 = 1.0 - beta2.powi(step);
                    for k in 0..p {
                        m1[k] = beta1 * m1[k] + (1.0 - beta1) * grad[k];
                        m2[k] = beta2 * m2[k] + (1.0 - beta2) * grad[k] * grad[k];
                        let update = (m1[k] / c1) / ((m2[k] / c2).sqrt() + eps);
                        theta[k] -= cfg.learning_rate * (update + cfg.weight_decay * theta[k]);
                    }
                }
            }
        }
        epochs_run = epoch + 1;
        if theta.iter().any(|t| !t.is_finite()) {
            return Err(Error::TrainingDiverged { epoch });
        }
    }

    Ok(TrainedModel {
        spec: spec.clone(),
        theta,
        provenance: Provenance {
            subset_id: None,
            seed: cfg.seed.0,
            train: Some(cfg.clone()),
            epochs: epochs_run,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{DatasetKind, Label};

    fn quad_pool() -> Dataset {
        let ex = vec![
            Example::new(0, vec![1.0], Label::Real(0.0)),
            Example::new(1, vec![1.0], Label::Real(2.0)),
        ];
        Dataset::new(ex, 1, DatasetKind::Regression).unwrap()
    }

    #[test]
    fn one_d_least_squares_converges_to_mean() {
        let spec = ModelSpec::linear_regression(1).with_bias(false);
        let pool = quad_pool();
        let cfg = TrainConfig { learning_rate: 0.5, epochs: 200, ..Default::default() };
        let m = train(&spec, &SubsetRef::full(&pool, "q"), &pool, &cfg).unwrap();
        assert!((m.theta[0] - 1.0).abs() < 1e-6);
        // first-order optimality
        let g = m.objective_grad(pool.examples()).unwrap();
        assert!(g[0].abs() < 1e-9);
    }

    #[test]
    fn symmetric_balanced_data_keeps_zero() {
        let spec = ModelSpec::logistic_regression(2, 2).with_bias(false);
        let ex = vec![
            Example::new(0, vec![1.0, 0.5], Label::Class(0)),
            Example::new(1, vec![1.0, 0.5], Label::Class(1)),
            Example::new(2, vec![-2.0, 1.0], Label::Class(0)),
            Example::new(3, vec![-2.0, 1.0], Label::Class(1)),
        ];
        let pool = Dataset::new(ex, 2, DatasetKind::Classification { num_classes: 2 }).unwrap();
        let m = train(&spec, &SubsetRef::full(&pool, "s"), &pool, &TrainConfig::default()).unwrap();
        assert!(m.theta.iter().all(|&t| t == 0.0));
    }

    #[test]
    fn same_seed_is_bitwise_identical() {
        let spec = super::super::ModelSpec::mlp(1, vec![4], super::super::Activation::Tanh, None);
        let pool = quad_pool();
        let cfg = TrainConfig {
            optimizer: Optimizer::Adamw,
            learning_rate: 0.01,
            epochs: 50,
            batch_size: Some(1),
            seed: RngSeed(77),
            ..Default::default()
        };
        let a = train(&spec, &SubsetRef::full(&pool, "q"), &pool, &cfg).unwrap();
        let b = train(&spec, &SubsetRef::full(&pool, "q"), &pool, &cfg).unwrap();
        assert_eq!(
            a.theta.iter().map(|t| t.to_bits()).collect::<Vec<_>>(),
            b.theta.iter().map(|t| t.to_bits()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn convex_training_does_not_increase_loss() {
        let spec = ModelSpec::logistic_regression(2, 2).with_l2(0.01);
        let ex: Vec<Example> = (0..20)
            .map(|i| {
                let f = i as f64 * 0.37;
                Example::new(i, vec![f.sin(), f.cos()], Label::Class(usize::from(f.sin() > 0.1)))
            })
            .collect();
        let refs: Vec<&Example> = ex.iter().collect();
        let init = TrainedModel::from_params(spec.clone(), vec![0.0; 6]).unwrap();
        let m = train_examples(&spec, &refs, &TrainConfig { epochs: 100, ..Default::default() }).unwrap();
        assert!(m.objective(refs.iter().copied()).unwrap() <= init.objective(refs.iter().copied()).unwrap());
    }

    #[test]
    fn divergence_is_reported() {
        let spec = ModelSpec::linear_regression(1);
        let pool = Dataset::new(
            vec![Example::new(0, vec![100.0], Label::Real(1.0))],
            1,
            DatasetKind::Regression,
        )
        .unwrap();
        let cfg = TrainConfig { learning_rate: 10.0, epochs: 500, ..Default::default() };
        let err = train(&spec, &SubsetRef::full(&pool, "x"), &pool, &cfg).unwrap_err();
        assert!(err.to_string().starts_with("training diverged"));
    }
}
