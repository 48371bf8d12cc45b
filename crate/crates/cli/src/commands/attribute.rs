use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use tda_lab::airrep::{score_instance, AirRepModel, Pooling};
use tda_lab::attr::{
    group_influence, rds_score, score_dot, Correction, CurvatureScale, Embedder, EmbeddingStore, GradientEmbedding,
    GroupInfluenceConfig, InfluenceSolver, Projection, ProjectionInit,
};
use tda_lab::data::{Dataset, Example};
use tda_lab::matrix::Matrix;
use tda_lab::models::{train_examples, ModelSpec, TrainConfig, TrainedModel};
use tda_lab::oracle::{loo_influence_oracle, CrossValInstance};
use tda_lab::rng::RngSeed;

use super::{default_model, read_dataset};
use crate::config::{resolve_opt, RunConfig};
use crate::error::{CliError, Result};
use crate::run_dir::RunDir;
use crate::scores::{Layout, ScoreFile};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    InfluenceExact,
    GradEmbed,
    Tracin,
    Rds,
    Airrep,
    /// Group influence truncated at the given order.
    GroupInfluence(usize),
    /// Brute-force leave-one-out retraining.
    Loo,
    /// The instance's own labels.
    Oracle,
}

impl Method {
    /// Influence-style scores predict a loss change, so negative means helpful.
    pub fn lower_is_better(self) -> bool {
        matches!(self, Method::InfluenceExact | Method::GroupInfluence(_))
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Ok(match s {
            "influence-exact" => Method::InfluenceExact,
            "grad-embed" => Method::GradEmbed,
            "tracin" => Method::Tracin,
            "rds" => Method::Rds,
            "airrep" => Method::Airrep,
            "loo" => Method::Loo,
            "oracle" => Method::Oracle,
            _ => match s.strip_prefix("group-influence-").map(str::parse::<usize>) {
                Some(Ok(k)) if k >= 1 => Method::GroupInfluence(k),
                _ => {
                    return Err(format!(
                        "unknown method {s:?} (expected influence-exact, grad-embed, tracin, rds, airrep, group-influence-<k>, loo or oracle)"
                    ))
                }
            },
        })
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::InfluenceExact => f.write_str("influence-exact"),
            Method::GradEmbed => f.write_str("grad-embed"),
            Method::Tracin => f.write_str("tracin"),
            Method::Rds => f.write_str("rds"),
            Method::Airrep => f.write_str("airrep"),
            Method::GroupInfluence(k) => write!(f, "group-influence-{k}"),
            Method::Loo => f.write_str("loo"),
            Method::Oracle => f.write_str("oracle"),
        }
    }
}

impl Serialize for Method {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Method {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProjectionConfig {
    pub init: ProjectionInit,
    pub q: usize,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AttributeConfig {
    pub method: Method,
    /// Score the subsets of this instance directory (`M × N_v`)...
    pub instance: Option<PathBuf>,
    /// ...or every test/train pair of two datasets (`|test| × |train|`).
    pub train: Option<PathBuf>,
    pub test: Option<PathBuf>,
    /// Reference model: loaded from `model_path`, else fit on the training pool.
    pub model_path: Option<PathBuf>,
    pub model: Option<ModelSpec>,
    pub fit: TrainConfig,
    pub airrep_path: Option<PathBuf>,
    /// Overrides the encoder's pooling (airrep in subset mode).
    pub airrep_pooling: Option<Pooling>,
    pub damping: f64,
    pub correction: Correction,
    pub normalize: bool,
    pub projection: Option<ProjectionConfig>,
    pub scale: CurvatureScale,
    /// Also write the training-pool embeddings (gradient methods only).
    pub save_embeddings: bool,
}

impl Default for AttributeConfig {
    fn default() -> Self {
        AttributeConfig {
            method: Method::GradEmbed,
            instance: None,
            train: None,
            test: None,
            model_path: None,
            model: None,
            fit: TrainConfig { epochs: 2000, learning_rate: 0.1, tol: Some(1e-6), ..Default::default() },
            airrep_path: None,
            airrep_pooling: None,
            damping: 1e-3,
            correction: Correction::Exact,
            normalize: false,
            projection: None,
            scale: CurvatureScale::Mean,
            save_embeddings: false,
        }
    }
}

impl RunConfig for AttributeConfig {
    fn resolve_paths(&mut self, base: &Path) {
        for p in [&mut self.instance, &mut self.train, &mut self.test, &mut self.model_path, &mut self.airrep_path] {
            resolve_opt(base, p);
        }
    }
}

enum Target {
    Subsets(CrossValInstance),
    Pairs { train: Dataset, test: Dataset },
}

impl Target {
    fn pool(&self) -> &Dataset {
        match self {
            Target::Subsets(i) => &i.train_pool,
            Target::Pairs { train, .. } => train,
        }
    }

    fn targets(&self) -> &Dataset {
        match self {
            Target::Subsets(i) => &i.valid,
            Target::Pairs { test, .. } => test,
        }
    }
}

fn reference_model(cfg: &AttributeConfig, pool: &Dataset, run: &RunDir) -> Result<TrainedModel> {
    let model = match &cfg.model_path {
        Some(p) => TrainedModel::load(p)?,
        None => {
            let spec = cfg.model.clone().unwrap_or_else(|| default_model(pool));
            let all: Vec<&Example> = pool.examples().iter().collect();
            let m = train_examples(&spec, &all, &cfg.fit)?;
            m.save(&run.path("model.bin"))?;
            m
        }
    };
    model.spec.check_dataset_kind(pool.kind())?;
    if model.spec.d != pool.d() {
        return Err(tda_lab::Error::DimensionMismatch { expected: model.spec.d, got: pool.d() }.into());
    }
    Ok(model)
}

fn projection(cfg: &AttributeConfig, model: &TrainedModel, pool: &Dataset) -> Result<Option<Projection>> {
    let Some(pc) = &cfg.projection else { return Ok(None) };
    Ok(Some(match pc.init {
        ProjectionInit::RandomGaussian => Projection::random_gaussian(pc.q, model.num_params(), RngSeed(pc.seed))?,
        ProjectionInit::PcaOfGradients => {
            let grads: Vec<Vec<f64>> = pool.examples().iter().map(|z| model.grad(z)).collect::<tda_lab::Result<_>>()?;
            Projection::pca(&grads, pc.q)?
        }
    }))
}

/// `|targets| × |pool|` pairwise embedding scores; optionally keeps the pool embeddings.
fn embedding_scores(embedder: &Embedder, pool: &Dataset, targets: &Dataset) -> Result<(Matrix, Vec<GradientEmbedding>)> {
    let phis: Vec<GradientEmbedding> = pool.examples().iter().map(|z| embedder.embed(z)).collect::<tda_lab::Result<_>>()?;
    let mut m = Matrix::zeros(targets.len(), pool.len());
    for (j, x) in targets.examples().iter().enumerate() {
        let px = embedder.embed(x)?;
        for (i, pz) in phis.iter().enumerate() {
            m.set(j, i, score_dot(&px, pz)?);
        }
    }
    Ok((m, phis))
}

/// Additive subset scores: `S[i][j] = Σ_{z ∈ S_i} P[j][z]`, duplicates counted.
fn sum_over_subsets(pairwise: &Matrix, inst: &CrossValInstance) -> Matrix {
    let mut out = Matrix::zeros(inst.m(), inst.n_valid());
    for (i, s) in inst.subsets.iter().enumerate() {
        for j in 0..inst.n_valid() {
            out.set(i, j, s.member_ids.iter().map(|&id| pairwise.get(j, id)).sum());
        }
    }
    out
}

pub fn run(cfg: AttributeConfig, out: &Path) -> Result<String> {
    let target = match (&cfg.instance, &cfg.train, &cfg.test) {
        (Some(dir), None, None) => Target::Subsets(CrossValInstance::load(dir)?),
        (None, Some(train), Some(test)) => Target::Pairs { train: read_dataset(train)?, test: read_dataset(test)? },
        _ => return Err(CliError::Config("set either `instance`, or both `train` and `test`".into())),
    };
    if cfg.method == Method::Airrep && cfg.airrep_path.is_none() {
        return Err(CliError::Config("method airrep needs `airrep_path` (a trained encoder)".into()));
    }
    let run = RunDir::create(out)?;
    let inputs: Vec<&Path> =
        [&cfg.instance, &cfg.train, &cfg.test, &cfg.model_path, &cfg.airrep_path].into_iter().flatten().map(PathBuf::as_path).collect();
    run.record(&cfg, &inputs)?;

    let (pool, targets) = (target.pool(), target.targets());
    let pairwise = |run: &RunDir| -> Result<Matrix> {
        match cfg.method {
            Method::InfluenceExact => {
                let model = reference_model(&cfg, pool, run)?;
                Ok(InfluenceSolver::new(&model, pool.examples(), cfg.damping)?.influence_matrix(targets.examples(), pool.examples())?)
            }
            Method::GradEmbed | Method::Tracin => {
                let model = reference_model(&cfg, pool, run)?;
                let proj = projection(&cfg, &model, pool)?;
                let correction = if cfg.method == Method::Tracin { Correction::None } else { cfg.correction };
                let init = cfg.projection.as_ref().map(|p| (p.init, p.seed));
                let embedder = Embedder::new(&model, pool.examples(), correction, cfg.damping, proj, cfg.normalize)?;
                let (m, phis) = embedding_scores(&embedder, pool, targets)?;
                if cfg.save_embeddings {
                    EmbeddingStore::new(&phis, correction, init, cfg.damping)?.save(&run.path("embeddings.bin"))?;
                }
                Ok(m)
            }
            Method::Rds => {
                let model = reference_model(&cfg, pool, run)?;
                let mut m = Matrix::zeros(targets.len(), pool.len());
                for (j, x) in targets.examples().iter().enumerate() {
                    for (i, z) in pool.examples().iter().enumerate() {
                        m.set(j, i, rds_score(&model, x, z)?);
                    }
                }
                Ok(m)
            }
            Method::Airrep => {
                let enc = AirRepModel::load(cfg.airrep_path.as_deref().expect("checked above"))?;
                let mut m = Matrix::zeros(targets.len(), pool.len());
                for (j, x) in targets.examples().iter().enumerate() {
                    for (i, z) in pool.examples().iter().enumerate() {
                        m.set(j, i, enc.pairwise_score(x, z)?);
                    }
                }
                Ok(m)
            }
            Method::Loo => {
                let spec = cfg.model.clone().unwrap_or_else(|| default_model(pool));
                Ok(loo_influence_oracle(&spec, pool, targets, &cfg.fit)?.transpose())
            }
            Method::GroupInfluence(_) | Method::Oracle => unreachable!("subset-only methods"),
        }
    };

    let (matrix, layout, row_ids, col_ids) = match &target {
        Target::Pairs { train, test } => {
            if matches!(cfg.method, Method::GroupInfluence(_) | Method::Oracle) {
                return Err(CliError::Config(format!("method {} needs an `instance`", cfg.method)));
            }
            let ids = |d: &Dataset| d.examples().iter().map(|e| e.id).collect::<Vec<_>>();
            (pairwise(&run)?, Layout::Pairs, ids(test), ids(train))
        }
        Target::Subsets(inst) => {
            let m = match cfg.method {
                Method::Oracle => inst.labels.clone(),
                Method::Loo => return Err(CliError::Config("method loo scores pairs; set `train` and `test`".into())),
                Method::Airrep => {
                    let enc = AirRepModel::load(cfg.airrep_path.as_deref().expect("checked above"))?;
                    let enc = cfg.airrep_pooling.map_or(enc.clone(), |p| enc.with_pooling(p));
                    score_instance(&enc, inst)?
                }
                Method::GroupInfluence(order) => {
                    if cfg.normalize {
                        return Err(CliError::Config("group influence needs raw embeddings; set normalize = false".into()));
                    }
                    let model = reference_model(&cfg, pool, &run)?;
                    let proj = projection(&cfg, &model, pool)?;
                    let embedder = Embedder::new(&model, pool.examples(), cfg.correction, cfg.damping, proj, false)?;
                    let phis: Vec<GradientEmbedding> = pool.examples().iter().map(|z| embedder.embed(z)).collect::<tda_lab::Result<_>>()?;
                    let phx: Vec<GradientEmbedding> = targets.examples().iter().map(|x| embedder.embed(x)).collect::<tda_lab::Result<_>>()?;
                    let mut m = Matrix::zeros(inst.m(), inst.n_valid());
                    for (i, s) in inst.subsets.iter().enumerate() {
                        let mut gcfg = GroupInfluenceConfig::new(order, pool.len(), s.n());
                        gcfg.scale = cfg.scale;
                        gcfg.damping = cfg.damping;
                        let members: Vec<GradientEmbedding> = s.member_ids.iter().map(|&id| phis[id].clone()).collect();
                        for (j, px) in phx.iter().enumerate() {
                            m.set(i, j, group_influence(&gcfg, &members, px)?);
                        }
                    }
                    m
                }
                _ => sum_over_subsets(&pairwise(&run)?, inst),
            };
            let rows = inst.subsets.iter().map(|s| s.subset_id).collect();
            (m, Layout::Subsets, rows, inst.valid.examples().iter().map(|e| e.id).collect())
        }
    };
    let file = ScoreFile::new(matrix, cfg.method.to_string(), layout, cfg.method.lower_is_better());
    run.write("scores.bin", &file.matrix.to_le_bytes())?;
    run.write("scores.json", &file.sidecar())?;
    run.write("scores.csv", file.to_csv(&row_ids, &col_ids).as_bytes())?;
    Ok(format!("{}: {}x{} {:?} scores", cfg.method, file.meta.rows, file.meta.cols, layout).to_lowercase())
}
