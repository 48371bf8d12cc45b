use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::loss::{ranking_loss, RankLossConfig};
use super::{pool_scores_grad, AirRepModel, Encoded};
use crate::data::Example;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::models::{dot, Optimizer};
use crate::oracle::CrossValInstance;
use crate::rng::RngSeed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AirRepTrainConfig {
    pub steps: usize,
    pub lr: f64,
    pub subsets_per_step: usize,
    pub targets_per_step: usize,
    pub optimizer: Optimizer,
    pub weight_decay: f64,
    pub seed: RngSeed,
    /// Treat attention weights as constants when differentiating.
    pub detach_attention: bool,
}

impl Default for AirRepTrainConfig {
    fn default() -> Self {
        AirRepTrainConfig {
            steps: 500,
            lr: 1e-3,
            subsets_per_step: 8,
            targets_per_step: 64,
            optimizer: Optimizer::Adamw,
            weight_decay: 0.0,
            seed: RngSeed(0),
            detach_attention: false,
        }
    }
}

impl AirRepTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::InvalidConfig("lr must be positive".into()));
        }
        if self.subsets_per_step < 2 || self.targets_per_step == 0 {
            return Err(Error::InvalidConfig("need subsets_per_step >= 2 and targets_per_step >= 1".into()));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(Error::InvalidConfig("weight_decay must be nonnegative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainingLog {
    pub losses: Vec<f64>,
}

impl TrainingLog {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("step,loss\n");
        for (i, l) in self.losses.iter().enumerate() {
            s.push_str(&format!("{i},{l}\n"));
        }
        s
    }
}

/// Mean ranking loss over `targets` (validation indices) against the
/// `subsets` (row indices) of one instance, and its gradient in the weights.
pub fn step_objective(
    model: &AirRepModel,
    inst: &CrossValInstance,
    targets: &[usize],
    subsets: &[usize],
    loss_cfg: &RankLossConfig,
    detach_attention: bool,
) -> Result<(f64, Vec<f64>)> {
    if targets.is_empty() || subsets.len() < 2 {
        return Err(Error::InvalidSize("need at least one target and two subsets".into()));
    }
    let pool = inst.train_pool.examples();
    let mut slot: Vec<Option<usize>> = vec![None; pool.len()];
    let mut members: Vec<&Example> = Vec::new();
    let mut rows: Vec<Vec<usize>> = Vec::with_capacity(subsets.len());
    for &s in subsets {
        let subset = inst.subsets.get(s).ok_or_else(|| Error::InvalidSize(format!("no subset {s}")))?;
        let mut row = Vec::with_capacity(subset.n());
        for &id in &subset.member_ids {
            let z = inst.train_pool.get(id).ok_or_else(|| Error::InvalidDataset(format!("unknown member {id}")))?;
            let k = *slot[id].get_or_insert_with(|| {
                members.push(z);
                members.len() - 1
            });
            row.push(k);
        }
        if row.is_empty() {
            return Err(Error::EmptySubset);
        }
        rows.push(row);
    }
    let member_enc: Vec<Encoded> = members.iter().map(|z| model.forward(&z.features)).collect::<Result<_>>()?;
    let target_ex: Vec<&Example> = targets
        .iter()
        .map(|&j| inst.valid.examples().get(j).ok_or_else(|| Error::InvalidSize(format!("no target {j}"))))
        .collect::<Result<_>>()?;
    let target_enc: Vec<Encoded> = target_ex.iter().map(|x| model.forward(&x.features)).collect::<Result<_>>()?;

    let e = model.e;
    let inv_t = 1.0 / targets.len() as f64;
    let mut d_members = vec![vec![0.0; e]; members.len()];
    let mut d_targets = vec![vec![0.0; e]; targets.len()];
    let mut total = 0.0;
    for (t, (&j, u)) in targets.iter().zip(&target_enc).enumerate() {
        let mut f = Vec::with_capacity(rows.len());
        let mut dfds = Vec::with_capacity(rows.len());
        for row in &rows {
            let scores: Vec<f64> = row.iter().map(|&k| dot(&u.out, &member_enc[k].out)).collect();
            let (fs, d) = pool_scores_grad(model.pooling, &scores, detach_attention);
            f.push(fs);
            dfds.push(d);
        }
        let r: Vec<f64> = subsets.iter().map(|&s| inst.labels.get(s, j)).collect();
        let (loss, g) = ranking_loss(&f, &r, loss_cfg)?;
        total += loss * inv_t;
        for ((row, d), gs) in rows.iter().zip(&dfds).zip(&g) {
            if *gs == 0.0 {
                continue;
            }
            for (&k, di) in row.iter().zip(d) {
                let c = gs * di * inv_t;
                let v = &member_enc[k].out;
                for q in 0..e {
                    d_targets[t][q] += c * v[q];
                    d_members[k][q] += c * u.out[q];
                }
            }
        }
    }
    if !total.is_finite() {
        return Err(Error::NonFinite("ranking loss".into()));
    }
    let mut grad = vec![0.0; model.num_weights()];
    for ((x, enc), d) in target_ex.iter().zip(&target_enc).zip(&d_targets) {
        model.backward(&x.features, enc, d, &mut grad);
    }
    for ((z, enc), d) in members.iter().zip(&member_enc).zip(&d_members) {
        model.backward(&z.features, enc, d, &mut grad);
    }
    Ok((total, grad))
}

/// Trains the encoder: each step samples one instance, then targets from its
/// non-degenerate columns and subsets without replacement.
pub fn train_airrep(
    instances: &[CrossValInstance],
    init: AirRepModel,
    cfg: &AirRepTrainConfig,
    loss_cfg: &RankLossConfig,
) -> Result<(AirRepModel, TrainingLog)> {
    cfg.validate()?;
    loss_cfg.validate()?;
    if instances.is_empty() {
        return Err(Error::InvalidSize("no training instances".into()));
    }
    let active: Vec<Vec<usize>> = instances.iter().map(CrossValInstance::active_targets).collect();
    for (i, inst) in instances.iter().enumerate() {
        if inst.train_pool.d() != init.d {
            return Err(Error::DimensionMismatch { expected: init.d, got: inst.train_pool.d() });
        }
        if inst.m() < 2 {
            return Err(Error::InvalidSize(format!("instance {i} has fewer than two subsets")));
        }
        if active[i].is_empty() {
            return Err(Error::InvalidDataset(format!("instance {i} has no non-degenerate targets")));
        }
    }
    let mut model = init;
    let mut log = TrainingLog::default();
    let mut rng = cfg.seed.derive(0xa11e).rng();
    let p = model.num_weights();
    let (mut m1, mut m2) = (vec![0.0; p], vec![0.0; p]);
    let (beta1, beta2, eps) = (0.9f64, 0.999f64, 1e-8);
    for step in 0..cfg.steps {
        let i = rng.random_range(0..instances.len());
        let inst = &instances[i];
        let nt = cfg.targets_per_step.min(active[i].len());
        let targets: Vec<usize> = sample(&mut rng, active[i].len(), nt).into_iter().map(|k| active[i][k]).collect();
        let ns = cfg.subsets_per_step.min(inst.m());
        let subsets: Vec<usize> = sample(&mut rng, inst.m(), ns).into_vec();
        let (loss, grad) = step_objective(&model, inst, &targets, &subsets, loss_cfg, cfg.detach_attention)
            .map_err(|err| if err.is_numerical() { Error::TrainingDiverged { epoch: step } } else { err })?;
        log.losses.push(loss);
        match cfg.optimizer {
            Optimizer::Gd => {
                for (w, g) in model.weights.iter_mut().zip(&grad) {
                    *w -= cfg.lr * (g + cfg.weight_decay * *w);
                }
            }
            Optimizer::Adamw => {
                let t = step as i32 + 1;
                let (c1, c2) = (1.0 - beta1.powi(t), 1.0 - beta2.powi(t));
                for k in 0..p {
                    m1[k] = beta1 * m1[k] + (1.0 - beta1) * grad[k];
                    m2[k] = beta2 * m2[k] + (1.0 - beta2) * grad[k] * grad[k];
                    let update = (m1[k] / c1) / ((m2[k] / c2).sqrt() + eps);
                    model.weights[k] -= cfg.lr * (update + cfg.weight_decay * model.weights[k]);
                }
            }
        }
        if model.weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::TrainingDiverged { epoch: step });
        }
    }
    Ok((model, log))
}

/// `M × N_v` matrix of `f(x_j, S_i)` for one instance.
pub fn score_instance(model: &AirRepModel, inst: &CrossValInstance) -> Result<Matrix> {
    let groups: Vec<Vec<&Example>> = inst.subsets.iter().map(|s| inst.train_pool.members(s)).collect::<Result<_>>()?;
    let rows = model.score_many(inst.valid.examples(), &groups)?;
    Matrix::from_rows(rows)
}
