//! Small differentiable models with exact gradients and Hessians.
//!
//! Every family is a stack of dense layers:
//!
//! * `linear-regression`: `d → 1`, squared error `½(o − y)²`.
//! * `logistic-regression`: `d → C` logits, softmax cross-entropy.
//! * `mlp`: one or two `tanh`/`relu` hidden layers, then a regression or
//!   classification head.
//!
//! Parameters are laid out layer by layer: weights row-major (`out × in`),
//! then biases. The training objective is the *mean* example loss plus
//! `½·l2_reg·‖θ‖²`; Hessians follow the same mean convention.

mod hessian;
mod network;
pub mod scalar;
mod train;

pub use hessian::{hessian, HessianMode, HESSIAN_CAP};
pub use train::{train, train_examples, train_from, Optimizer, TrainConfig};

use serde::{Deserialize, Serialize};

use crate::data::{DatasetKind, Example, Label};
use crate::error::{Error, Result};
use network::Network;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    LinearRegression,
    LogisticRegression,
    Mlp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Tanh,
    Relu,
}

pub const MAX_HIDDEN_WIDTH: usize = 32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub family: Family,
    pub d: usize,
    /// Hidden layer widths (mlp only; one or two layers).
    #[serde(default)]
    pub hidden: Vec<usize>,
    #[serde(default)]
    pub activation: Activation,
    /// Class count for classification heads; `None` means a scalar regression head.
    #[serde(default)]
    pub num_classes: Option<usize>,
    #[serde(default)]
    pub l2_reg: f64,
    #[serde(default = "default_true")]
    pub bias: bool,
}

fn default_true() -> bool {
    true
}

impl ModelSpec {
    pub fn linear_regression(d: usize) -> Self {
        ModelSpec {
            family: Family::LinearRegression,
            d,
            hidden: vec![],
            activation: Activation::Tanh,
            num_classes: None,
            l2_reg: 0.0,
            bias: true,
        }
    }

    pub fn logistic_regression(d: usize, num_classes: usize) -> Self {
        ModelSpec {
            family: Family::LogisticRegression,
            num_classes: Some(num_classes),
            ..ModelSpec::linear_regression(d)
        }
    }

    pub fn mlp(d: usize, hidden: Vec<usize>, activation: Activation, num_classes: Option<usize>) -> Self {
        ModelSpec {
            family: Family::Mlp,
            d,
            hidden,
            activation,
            num_classes,
            l2_reg: 0.0,
            bias: true,
        }
    }

    pub fn with_l2(mut self, l2_reg: f64) -> Self {
        self.l2_reg = l2_reg;
        self
    }

    pub fn with_bias(mut self, bias: bool) -> Self {
        self.bias = bias;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return Err(Error::InvalidConfig("model input dimension must be positive".into()));
        }
        if !(self.l2_reg >= 0.0 && self.l2_reg.is_finite()) {
            return Err(Error::InvalidConfig("l2_reg must be a finite nonnegative number".into()));
        }
        match self.family {
            Family::LinearRegression => {
                if self.num_classes.is_some() || !self.hidden.is_empty() {
                    return Err(Error::InvalidConfig(
                        "linear-regression takes neither num_classes nor hidden layers".into(),
                    ));
                }
            }
            Family::LogisticRegression => {
                if !matches!(self.num_classes, Some(c) if c >= 2) || !self.hidden.is_empty() {
                    return Err(Error::InvalidConfig(
                        "logistic-regression needs num_classes >= 2 and no hidden layers".into(),
                    ));
                }
            }
            Family::Mlp => {
                if self.hidden.is_empty() || self.hidden.len() > 2 {
                    return Err(Error::InvalidConfig("mlp needs one or two hidden layers".into()));
                }
                if self.hidden.iter().any(|&w| w == 0 || w > MAX_HIDDEN_WIDTH) {
                    return Err(Error::InvalidConfig(format!(
                        "mlp hidden widths must be in 1..={MAX_HIDDEN_WIDTH}"
                    )));
                }
                if !self.bias {
                    return Err(Error::InvalidConfig("mlp layers always carry biases".into()));
                }
                if matches!(self.num_classes, Some(c) if c < 2) {
                    return Err(Error::InvalidConfig("classification head needs >= 2 classes".into()));
                }
            }
        }
        // Headers come from files; a parameter count that overflows is corrupt.
        let mut widths = vec![self.d];
        if self.family == Family::Mlp {
            widths.extend(&self.hidden);
        }
        widths.push(self.output_dim());
        widths
            .windows(2)
            .try_fold(0usize, |acc, w| {
                let layer = w[0].checked_mul(w[1])?.checked_add(if self.bias { w[1] } else { 0 })?;
                acc.checked_add(layer)
            })
            .ok_or_else(|| Error::InvalidConfig("model parameter count overflows".into()))?;
        Ok(())
    }

    /// Whether the training objective is convex in θ.
    pub fn is_convex(&self) -> bool {
        self.family != Family::Mlp
    }

    pub fn num_params(&self) -> usize {
        Network::new(self).num_params()
    }

    pub fn output_dim(&self) -> usize {
        self.num_classes.unwrap_or(1)
    }

    pub fn is_classifier(&self) -> bool {
        self.num_classes.is_some()
    }

    /// Checks that `kind` matches this model's head.
    pub fn check_dataset_kind(&self, kind: DatasetKind) -> Result<()> {
        match (self.num_classes, kind) {
            (None, DatasetKind::Regression) => Ok(()),
            (Some(c), DatasetKind::Classification { num_classes }) if c == num_classes => Ok(()),
            _ => Err(Error::InvalidConfig(format!(
                "model head ({:?} classes) does not match dataset kind {:?}",
                self.num_classes, kind
            ))),
        }
    }

    pub(crate) fn check_example(&self, z: &Example) -> Result<()> {
        if z.features.len() != self.d {
            return Err(Error::DimensionMismatch {
                expected: self.d,
                got: z.features.len(),
            });
        }
        match (self.num_classes, z.label) {
            (None, Label::Real(_)) => Ok(()),
            (Some(c), Label::Class(k)) if k < c => Ok(()),
            _ => Err(Error::InvalidConfig(format!(
                "label {:?} of example {} does not fit the model head",
                z.label, z.id
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Provenance {
    pub subset_id: Option<usize>,
    pub seed: u64,
    pub train: Option<TrainConfig>,
    pub epochs: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub spec: ModelSpec,
    pub theta: Vec<f64>,
    pub provenance: Provenance,
}

impl TrainedModel {
    /// Wraps explicit parameters, checking length and finiteness.
    pub fn from_params(spec: ModelSpec, theta: Vec<f64>) -> Result<Self> {
        spec.validate()?;
        if theta.len() != spec.num_params() {
            return Err(Error::DimensionMismatch {
                expected: spec.num_params(),
                got: theta.len(),
            });
        }
        if theta.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("model parameters".into()));
        }
        Ok(TrainedModel {
            spec,
            theta,
            provenance: Provenance {
                subset_id: None,
                seed: 0,
                train: None,
                epochs: 0,
            },
        })
    }

    pub fn num_params(&self) -> usize {
        self.theta.len()
    }

    /// Per-example loss (no regularizer).
    pub fn loss(&self, z: &Example) -> Result<f64> {
        self.spec.check_example(z)?;
        Ok(Network::new(&self.spec).loss(&self.theta, &z.features, z.label))
    }

    /// Gradient of the per-example loss with respect to θ.
    pub fn grad(&self, z: &Example) -> Result<Vec<f64>> {
        self.spec.check_example(z)?;
        let mut g = vec![0.0; self.theta.len()];
        Network::new(&self.spec).loss_and_grad(&self.theta, &z.features, z.label, &mut g);
        Ok(g)
    }

    /// Raw model outputs (the regression value or the class logits).
    pub fn predict(&self, features: &[f64]) -> Result<Vec<f64>> {
        if features.len() != self.spec.d {
            return Err(Error::DimensionMismatch {
                expected: self.spec.d,
                got: features.len(),
            });
        }
        Ok(Network::new(&self.spec).forward(&self.theta, features))
    }

    /// Representation used by the similarity baseline: activations of the
    /// last hidden layer for an mlp, the raw features for linear families.
    pub fn representation(&self, features: &[f64]) -> Result<Vec<f64>> {
        if features.len() != self.spec.d {
            return Err(Error::DimensionMismatch {
                expected: self.spec.d,
                got: features.len(),
            });
        }
        Ok(Network::new(&self.spec).last_hidden(&self.theta, features))
    }

    /// Mean loss over `data` plus `½·l2_reg·‖θ‖²`.
    pub fn objective<'a, I>(&self, data: I) -> Result<f64>
    where
        I: IntoIterator<Item = &'a Example>,
    {
        let mut total = 0.0;
        let mut n = 0usize;
        for z in data {
            total += self.loss(z)?;
            n += 1;
        }
        if n == 0 {
            return Err(Error::EmptySubset);
        }
        Ok(total / n as f64 + 0.5 * self.spec.l2_reg * dot(&self.theta, &self.theta))
    }

    /// Gradient of [`TrainedModel::objective`].
    pub fn objective_grad<'a, I>(&self, data: I) -> Result<Vec<f64>>
    where
        I: IntoIterator<Item = &'a Example>,
    {
        let net = Network::new(&self.spec);
        let mut acc = vec![0.0; self.theta.len()];
        let mut n = 0usize;
        for z in data {
            self.spec.check_example(z)?;
            net.loss_and_grad(&self.theta, &z.features, z.label, &mut acc);
            n += 1;
        }
        if n == 0 {
            return Err(Error::EmptySubset);
        }
        let inv = 1.0 / n as f64;
        for (a, t) in acc.iter_mut().zip(&self.theta) {
            *a = *a * inv + self.spec.l2_reg * t;
        }
        Ok(acc)
    }
}

const MODEL_MAGIC: &[u8; 8] = b"TDAMODL1";

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelHeader {
    spec: ModelSpec,
    provenance: Provenance,
}

impl TrainedModel {
    /// Magic, JSON header (spec and provenance), little-endian `f64` parameters.
    pub fn to_bytes(&self) -> Vec<u8> {
        let header = ModelHeader {
            spec: self.spec.clone(),
            provenance: self.provenance.clone(),
        };
        crate::container::encode(MODEL_MAGIC, &header, &self.theta)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (header, theta): (ModelHeader, Vec<f64>) = crate::container::decode(MODEL_MAGIC, bytes)?;
        let mut model = TrainedModel::from_params(header.spec, theta)?;
        model.provenance = header.provenance;
        Ok(model)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        TrainedModel::from_bytes(&std::fs::read(path)?)
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
