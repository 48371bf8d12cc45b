//! Gradient-based attribution.
//!
//! * exact influence `f_IF(x, z) = −∇ℓ(x)ᵀ (H + λI)⁻¹ ∇ℓ(z)`, in loss-change
//!   orientation: negative means up-weighting `z` lowers the loss on `x`;
//! * gradient embeddings `φ(z) = norm₂(P · (H + λI)^{-1/2} · ∇ℓ(z))`, scored
//!   by inner product (higher means more helpful);
//! * the uncorrected gradient dot product and a representation-cosine baseline;
//! * high-order group influence through alignment weights (see [`group`]).

pub mod group;
mod projection;
mod store;

pub use group::{expansion_terms, group_constants, group_influence, group_influence_terms, CurvatureScale, ExpansionTerms, GroupInfluenceConfig};
pub use projection::{Projection, ProjectionInit};
pub use store::EmbeddingStore;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::Example;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::models::{dot, hessian, HessianMode, TrainedModel};

/// Curvature used to precondition gradients before embedding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Correction {
    Exact,
    Fim,
    /// Identity in place of `H^{-1/2}` (plain gradient dot products).
    None,
}

impl Correction {
    fn mode(self) -> Option<HessianMode> {
        match self {
            Correction::Exact => Some(HessianMode::Exact),
            Correction::Fim => Some(HessianMode::Fim),
            Correction::None => None,
        }
    }
}

/// Relative eigenvalue floor below which a curvature matrix counts as singular.
const SINGULAR_RTOL: f64 = 1e-12;

/// Eigen-decomposed symmetric curvature `H + λI`, shared read-only by all
/// embedding and influence computations for one model.
#[derive(Debug, Clone)]
pub struct Curvature {
    eigenvalues: DVector<f64>,
    eigenvectors: DMatrix<f64>,
}

impl Curvature {
    pub fn new(h: &DMatrix<f64>) -> Result<Self> {
        let eig = h.clone().symmetric_eigen();
        let max = eig.eigenvalues.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
        let min_abs = eig.eigenvalues.iter().fold(f64::INFINITY, |a, &v| a.min(v.abs()));
        if !(min_abs > SINGULAR_RTOL * max) {
            return Err(Error::SingularHessian { min_eigenvalue: eig.eigenvalues.min() });
        }
        Ok(Curvature {
            eigenvalues: eig.eigenvalues,
            eigenvectors: eig.eigenvectors,
        })
    }

    pub fn from_model<'a, I>(model: &TrainedModel, data: I, mode: HessianMode, damping: f64) -> Result<Self>
    where
        I: IntoIterator<Item = &'a Example>,
    {
        Curvature::new(&hessian(model, data, mode, damping)?)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues.min()
    }

    /// `H⁻¹ v`.
    pub fn solve(&self, v: &[f64]) -> Vec<f64> {
        self.apply(v, |l| 1.0 / l)
    }

    /// `H^{-1/2} v` with the symmetric inverse square root; needs `H ≻ 0`.
    pub fn inv_sqrt(&self, v: &[f64]) -> Result<Vec<f64>> {
        let min = self.min_eigenvalue();
        if min <= 0.0 {
            return Err(Error::NotPositiveDefinite { min_eigenvalue: min });
        }
        Ok(self.apply(v, |l| 1.0 / l.sqrt()))
    }

    fn apply(&self, v: &[f64], f: impl Fn(f64) -> f64) -> Vec<f64> {
        let v = DVector::from_column_slice(v);
        let mut c = self.eigenvectors.tr_mul(&v);
        for (ci, &l) in c.iter_mut().zip(self.eigenvalues.iter()) {
            *ci *= f(l);
        }
        (&self.eigenvectors * c).as_slice().to_vec()
    }
}

/// Exact influence `−∇ℓ(x)ᵀ(H + λI)⁻¹∇ℓ(z)` with `H` the mean training Hessian.
///
/// Under the mean-loss convention, removing `z` from an `n`-example pool
/// changes the loss on `x` by about `−f_IF(x, z)/n`.
pub fn influence_exact(model: &TrainedModel, train_pool: &[Example], x: &Example, z: &Example, damping: f64) -> Result<f64> {
    InfluenceSolver::new(model, train_pool, damping)?.influence(x, z)
}

pub struct InfluenceSolver<'m> {
    model: &'m TrainedModel,
    curvature: Curvature,
}

impl<'m> InfluenceSolver<'m> {
    pub fn new(model: &'m TrainedModel, train_pool: &[Example], damping: f64) -> Result<Self> {
        let curvature = Curvature::from_model(model, train_pool, HessianMode::Exact, damping)?;
        Ok(InfluenceSolver { model, curvature })
    }

    pub fn influence(&self, x: &Example, z: &Example) -> Result<f64> {
        let gx = self.model.grad(x)?;
        let gz = self.model.grad(z)?;
        Ok(-dot(&gx, &self.curvature.solve(&gz)))
    }

    /// `|targets| × |train|` matrix of `f_IF(x_j, z_i)`.
    pub fn influence_matrix(&self, targets: &[Example], train: &[Example]) -> Result<Matrix> {
        let solved: Vec<Vec<f64>> = train
            .iter()
            .map(|z| Ok(self.curvature.solve(&self.model.grad(z)?)))
            .collect::<Result<_>>()?;
        let mut out = Matrix::zeros(targets.len(), train.len());
        for (j, x) in targets.iter().enumerate() {
            let gx = self.model.grad(x)?;
            for (i, s) in solved.iter().enumerate() {
                out.set(j, i, -dot(&gx, s));
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientEmbedding {
    pub example_id: usize,
    pub phi: Vec<f64>,
    /// Unit-normalized (pairwise scorer) vs raw `H^{-1/2}∇ℓ` (group recursion).
    pub normalized: bool,
}

impl GradientEmbedding {
    pub fn q(&self) -> usize {
        self.phi.len()
    }
}

/// Builds embeddings for one model with a fixed preconditioner and projection.
pub struct Embedder<'m> {
    model: &'m TrainedModel,
    curvature: Option<Curvature>,
    projection: Option<Projection>,
    normalize: bool,
}

impl<'m> Embedder<'m> {
    /// `train_pool` supplies the curvature; it is ignored for `Correction::None`.
    pub fn new(
        model: &'m TrainedModel,
        train_pool: &[Example],
        correction: Correction,
        damping: f64,
        projection: Option<Projection>,
        normalize: bool,
    ) -> Result<Self> {
        let curvature = match correction.mode() {
            Some(mode) => {
                let c = Curvature::from_model(model, train_pool, mode, damping)?;
                if c.min_eigenvalue() <= 0.0 {
                    return Err(Error::NotPositiveDefinite {
                        min_eigenvalue: c.min_eigenvalue(),
                    });
                }
                Some(c)
            }
            None => None,
        };
        if let Some(p) = &projection {
            if p.input_dim() != model.num_params() {
                return Err(Error::DimensionMismatch {
                    expected: model.num_params(),
                    got: p.input_dim(),
                });
            }
        }
        Ok(Embedder {
            model,
            curvature,
            projection,
            normalize,
        })
    }

    pub fn output_dim(&self) -> usize {
        self.projection.as_ref().map_or(self.model.num_params(), Projection::output_dim)
    }

    pub fn embed(&self, z: &Example) -> Result<GradientEmbedding> {
        let g = self.model.grad(z)?;
        self.embed_gradient(z.id, &g)
    }

    /// Embeds an explicit gradient vector.
    pub fn embed_gradient(&self, example_id: usize, g: &[f64]) -> Result<GradientEmbedding> {
        let mut v = match &self.curvature {
            Some(c) => c.inv_sqrt(g)?,
            None => g.to_vec(),
        };
        if let Some(p) = &self.projection {
            v = p.apply(&v);
        }
        if self.normalize {
            let norm = dot(&v, &v).sqrt();
            if norm > 0.0 {
                v.iter_mut().for_each(|x| *x /= norm);
            }
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite(format!("embedding of example {example_id}")));
        }
        Ok(GradientEmbedding {
            example_id,
            phi: v,
            normalized: self.normalize,
        })
    }
}

/// One-shot [`Embedder::embed`].
pub fn embed_gradient(
    model: &TrainedModel,
    train_pool: &[Example],
    z: &Example,
    projection: Option<Projection>,
    correction: Correction,
    damping: f64,
    normalize: bool,
) -> Result<GradientEmbedding> {
    Embedder::new(model, train_pool, correction, damping, projection, normalize)?.embed(z)
}

/// `φ(a)ᵀφ(b)`; refuses to mix normalized and raw embeddings.
pub fn score_dot(a: &GradientEmbedding, b: &GradientEmbedding) -> Result<f64> {
    if a.q() != b.q() {
        return Err(Error::DimensionMismatch { expected: a.q(), got: b.q() });
    }
    if a.normalized != b.normalized {
        return Err(Error::EmbeddingFlavor("cannot score a normalized embedding against a raw one".into()));
    }
    Ok(dot(&a.phi, &b.phi))
}

/// Gradient dot product without curvature correction.
pub fn tracin_score(model: &TrainedModel, x: &Example, z: &Example, projection: Option<Projection>, normalize: bool) -> Result<f64> {
    let e = Embedder::new(model, &[], Correction::None, 0.0, projection, normalize)?;
    score_dot(&e.embed(x)?, &e.embed(z)?)
}

/// Cosine similarity of model representations (0 when either is the zero vector).
pub fn rds_score(model: &TrainedModel, x: &Example, z: &Example) -> Result<f64> {
    let a = model.representation(&x.features)?;
    let b = model.representation(&z.features)?;
    Ok(cosine(&a, &b))
}

pub(crate) fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let na = dot(a, a).sqrt();
    let nb = dot(b, b).sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (dot(a, b) / (na * nb)).clamp(-1.0, 1.0)
}
