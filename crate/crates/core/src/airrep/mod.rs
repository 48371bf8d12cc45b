//! Learned representation scorer with attention-based group pooling.
//!
//! `f(x, S) = Enc(x)ᵀ Σ_i α_i Enc(z_i)` with
//! `α = softmax_i |Enc(x)ᵀEnc(z_i)|`, or the plain mean over `S`.
//! The encoder is an affine map or a one-hidden-layer `tanh` MLP over the
//! raw feature vector, trained with a weighted pairwise ranking loss on
//! retraining-oracle labels.

mod loss;
mod train;

pub use loss::{active_pairs, ranking_loss, RankLossConfig};
pub use train::{score_instance, step_objective, train_airrep, AirRepTrainConfig, TrainingLog};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Example;
use crate::error::{Error, Result};
use crate::models::dot;
use crate::rng::RngSeed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum EncoderKind {
    Affine,
    Mlp { hidden: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pooling {
    #[default]
    Attention,
    Mean,
}

/// Architecture choices for a fresh encoder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AirRepSpec {
    pub e: usize,
    pub encoder: EncoderKind,
    pub pooling: Pooling,
    pub bias: bool,
    /// Unit-normalize encoder outputs before scoring.
    pub normalize: bool,
}

impl Default for AirRepSpec {
    fn default() -> Self {
        AirRepSpec {
            e: 32,
            encoder: EncoderKind::Affine,
            pooling: Pooling::Attention,
            bias: true,
            normalize: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    d: usize,
    e: usize,
    encoder: EncoderKind,
    pooling: Pooling,
    bias: bool,
    normalize: bool,
    seed: RngSeed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AirRepModel {
    pub d: usize,
    pub e: usize,
    pub encoder: EncoderKind,
    pub pooling: Pooling,
    pub bias: bool,
    pub normalize: bool,
    pub seed: RngSeed,
    pub weights: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionWeights {
    pub alpha: Vec<f64>,
}

/// Forward intermediates for one encoded example.
#[derive(Debug, Clone)]
pub(crate) struct Encoded {
    hidden: Vec<f64>,
    raw: Vec<f64>,
    pub(crate) out: Vec<f64>,
}

const AIRREP_MAGIC: &[u8; 8] = b"TDAAIRR1";

fn num_weights(d: usize, e: usize, encoder: EncoderKind, bias: bool) -> Option<usize> {
    let b = usize::from(bias);
    let layer = |inp: usize, out: usize| inp.checked_mul(out)?.checked_add(b * out);
    match encoder {
        EncoderKind::Affine => layer(d, e),
        EncoderKind::Mlp { hidden } => layer(d, hidden)?.checked_add(layer(hidden, e)?),
    }
}

impl AirRepModel {
    /// Seeded Glorot-uniform weights, zero biases.
    pub fn init(d: usize, spec: &AirRepSpec, seed: RngSeed) -> Result<Self> {
        let p = num_weights(d, spec.e, spec.encoder, spec.bias).ok_or_else(|| Error::InvalidConfig("encoder size overflows".into()))?;
        let mut model = AirRepModel::from_weights(d, spec, seed, vec![0.0; p])?;
        let mut rng = seed.derive(0xa1).rng();
        for (off, inp, out) in model.weight_blocks() {
            let bound = (6.0 / (inp + out) as f64).sqrt();
            for w in &mut model.weights[off..off + inp * out] {
                *w = rng.random_range(-bound..bound);
            }
        }
        Ok(model)
    }

    pub fn from_weights(d: usize, spec: &AirRepSpec, seed: RngSeed, weights: Vec<f64>) -> Result<Self> {
        if d == 0 || spec.e == 0 {
            return Err(Error::InvalidConfig("encoder dimensions must be positive".into()));
        }
        if let EncoderKind::Mlp { hidden: 0 } = spec.encoder {
            return Err(Error::InvalidConfig("mlp encoder needs a positive hidden width".into()));
        }
        let p = num_weights(d, spec.e, spec.encoder, spec.bias).ok_or_else(|| Error::InvalidConfig("encoder size overflows".into()))?;
        if weights.len() != p {
            return Err(Error::DimensionMismatch { expected: p, got: weights.len() });
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::NonFinite("encoder weights".into()));
        }
        Ok(AirRepModel {
            d,
            e: spec.e,
            encoder: spec.encoder,
            pooling: spec.pooling,
            bias: spec.bias,
            normalize: spec.normalize,
            seed,
            weights,
        })
    }

    pub fn spec(&self) -> AirRepSpec {
        AirRepSpec {
            e: self.e,
            encoder: self.encoder,
            pooling: self.pooling,
            bias: self.bias,
            normalize: self.normalize,
        }
    }

    pub fn with_pooling(&self, pooling: Pooling) -> AirRepModel {
        AirRepModel { pooling, ..self.clone() }
    }

    pub fn num_weights(&self) -> usize {
        self.weights.len()
    }

    /// `(offset, fan_in, fan_out)` of each weight matrix.
    fn weight_blocks(&self) -> Vec<(usize, usize, usize)> {
        let b = usize::from(self.bias);
        match self.encoder {
            EncoderKind::Affine => vec![(0, self.d, self.e)],
            EncoderKind::Mlp { hidden } => vec![(0, self.d, hidden), (hidden * self.d + b * hidden, hidden, self.e)],
        }
    }

    fn dense(&self, off: usize, inp: usize, out: usize, x: &[f64]) -> Vec<f64> {
        let w = &self.weights[off..off + inp * out];
        let mut y: Vec<f64> = (0..out).map(|k| dot(&w[k * inp..(k + 1) * inp], x)).collect();
        if self.bias {
            for (yk, bk) in y.iter_mut().zip(&self.weights[off + inp * out..off + inp * out + out]) {
                *yk += bk;
            }
        }
        y
    }

    pub(crate) fn forward(&self, features: &[f64]) -> Result<Encoded> {
        if features.len() != self.d {
            return Err(Error::DimensionMismatch { expected: self.d, got: features.len() });
        }
        let (hidden, raw) = match self.encoder {
            EncoderKind::Affine => (Vec::new(), self.dense(0, self.d, self.e, features)),
            EncoderKind::Mlp { hidden } => {
                let h: Vec<f64> = self.dense(0, self.d, hidden, features).into_iter().map(f64::tanh).collect();
                let (off, inp, out) = self.weight_blocks()[1];
                let o = self.dense(off, inp, out, &h);
                (h, o)
            }
        };
        let out = if self.normalize {
            let n = dot(&raw, &raw).sqrt();
            if n > 0.0 {
                raw.iter().map(|v| v / n).collect()
            } else {
                raw.clone()
            }
        } else {
            raw.clone()
        };
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("encoder output".into()));
        }
        Ok(Encoded { hidden, raw, out })
    }

    /// Accumulates `∂L/∂weights` given `∂L/∂Enc(z)`.
    pub(crate) fn backward(&self, features: &[f64], enc: &Encoded, d_out: &[f64], grad: &mut [f64]) {
        let d_raw: Vec<f64> = if self.normalize {
            let n = dot(&enc.raw, &enc.raw).sqrt();
            if n > 0.0 {
                let proj = dot(&enc.out, d_out);
                d_out.iter().zip(&enc.out).map(|(g, u)| (g - u * proj) / n).collect()
            } else {
                d_out.to_vec()
            }
        } else {
            d_out.to_vec()
        };
        let dense_back = |off: usize, inp: usize, out: usize, x: &[f64], dy: &[f64], grad: &mut [f64]| {
            for k in 0..out {
                let row = &mut grad[off + k * inp..off + (k + 1) * inp];
                for (g, xi) in row.iter_mut().zip(x) {
                    *g += dy[k] * xi;
                }
            }
            if self.bias {
                for (g, d) in grad[off + inp * out..off + inp * out + out].iter_mut().zip(dy) {
                    *g += d;
                }
            }
        };
        match self.encoder {
            EncoderKind::Affine => dense_back(0, self.d, self.e, features, &d_raw, grad),
            EncoderKind::Mlp { hidden } => {
                let (off2, _, _) = self.weight_blocks()[1];
                dense_back(off2, hidden, self.e, &enc.hidden, &d_raw, grad);
                let w2 = &self.weights[off2..off2 + self.e * hidden];
                let da: Vec<f64> = (0..hidden)
                    .map(|j| {
                        let dh: f64 = (0..self.e).map(|k| w2[k * hidden + j] * d_raw[k]).sum();
                        dh * (1.0 - enc.hidden[j] * enc.hidden[j])
                    })
                    .collect();
                dense_back(0, self.d, hidden, features, &da, grad);
            }
        }
    }

    pub fn encode(&self, z: &Example) -> Result<Vec<f64>> {
        Ok(self.forward(&z.features)?.out)
    }

    pub fn pairwise_score(&self, x: &Example, z: &Example) -> Result<f64> {
        Ok(dot(&self.encode(x)?, &self.encode(z)?))
    }

    /// Attention-pooled representation of `S` relative to `x`.
    pub fn attention_pool(&self, x: &Example, s: &[&Example]) -> Result<(Vec<f64>, AttentionWeights)> {
        if s.is_empty() {
            return Err(Error::EmptySubset);
        }
        let u = self.encode(x)?;
        let vs: Vec<Vec<f64>> = s.iter().map(|z| self.encode(z)).collect::<Result<_>>()?;
        let scores: Vec<f64> = vs.iter().map(|v| dot(&u, v)).collect();
        let alpha = softmax_abs(&scores);
        let mut pooled = vec![0.0; self.e];
        for (a, v) in alpha.iter().zip(&vs) {
            for (p, vk) in pooled.iter_mut().zip(v) {
                *p += a * vk;
            }
        }
        Ok((pooled, AttentionWeights { alpha }))
    }

    /// `f(x, S)` under the model's pooling mode.
    pub fn score_group(&self, x: &Example, s: &[&Example]) -> Result<f64> {
        if s.is_empty() {
            return Err(Error::EmptySubset);
        }
        let u = self.encode(x)?;
        let scores: Vec<f64> = s.iter().map(|z| Ok(dot(&u, &self.encode(z)?))).collect::<Result<_>>()?;
        Ok(pool_scores(self.pooling, &scores))
    }

    /// Scores every `(x, S)` pair: rows follow `subsets`, columns `targets`.
    pub fn score_many(&self, targets: &[Example], subsets: &[Vec<&Example>]) -> Result<Vec<Vec<f64>>> {
        let us: Vec<Vec<f64>> = targets.par_iter().map(|x| self.encode(x)).collect::<Result<_>>()?;
        subsets
            .par_iter()
            .map(|s| {
                if s.is_empty() {
                    return Err(Error::EmptySubset);
                }
                let vs: Vec<Vec<f64>> = s.iter().map(|z| self.encode(z)).collect::<Result<_>>()?;
                Ok(us
                    .iter()
                    .map(|u| {
                        let scores: Vec<f64> = vs.iter().map(|v| dot(u, v)).collect();
                        pool_scores(self.pooling, &scores)
                    })
                    .collect())
            })
            .collect()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = Header {
            d: self.d,
            e: self.e,
            encoder: self.encoder,
            pooling: self.pooling,
            bias: self.bias,
            normalize: self.normalize,
            seed: self.seed,
        };
        crate::container::encode(AIRREP_MAGIC, &header, &self.weights)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (h, weights): (Header, Vec<f64>) = crate::container::decode(AIRREP_MAGIC, bytes)?;
        let spec = AirRepSpec {
            e: h.e,
            encoder: h.encoder,
            pooling: h.pooling,
            bias: h.bias,
            normalize: h.normalize,
        };
        AirRepModel::from_weights(h.d, &spec, h.seed, weights)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        AirRepModel::from_bytes(&std::fs::read(path)?)
    }
}

/// `softmax(|s|)`, max-shifted.
pub(crate) fn softmax_abs(scores: &[f64]) -> Vec<f64> {
    let max = scores.iter().fold(f64::NEG_INFINITY, |m, s| m.max(s.abs()));
    let ex: Vec<f64> = scores.iter().map(|s| (s.abs() - max).exp()).collect();
    let z: f64 = ex.iter().sum();
    ex.into_iter().map(|v| v / z).collect()
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Pooled score and `∂f/∂s_i` (through the attention weights unless `detach`).
pub(crate) fn pool_scores_grad(pooling: Pooling, scores: &[f64], detach: bool) -> (f64, Vec<f64>) {
    match pooling {
        Pooling::Mean => {
            let n = scores.len() as f64;
            (scores.iter().sum::<f64>() / n, vec![1.0 / n; scores.len()])
        }
        Pooling::Attention => {
            let alpha = softmax_abs(scores);
            let f: f64 = alpha.iter().zip(scores).map(|(a, s)| a * s).sum();
            let d = alpha
                .iter()
                .zip(scores)
                .map(|(a, s)| if detach { *a } else { a * (1.0 + sign(*s) * (s - f)) })
                .collect();
            (f, d)
        }
    }
}

fn pool_scores(pooling: Pooling, scores: &[f64]) -> f64 {
    match pooling {
        Pooling::Mean => scores.iter().sum::<f64>() / scores.len() as f64,
        Pooling::Attention => {
            let alpha = softmax_abs(scores);
            alpha.iter().zip(scores).map(|(a, s)| a * s).sum()
        }
    }
}
