//! High-order group influence.
//!
//! Up-weighting a subset `S` (|S| = m) of an n-example pool by `ε` is modeled
//! as `L_ε = (1 − ερ)·L + ερ·L_S` with `ρ = m/(n−m)`, where `L` and `L_S` are
//! the regularized mean losses over the pool and over `S`. `ε = −1` is exact
//! removal of `S`. With `θ(ε) − θ* = Σ_t Δ_t ε^t` and third derivatives
//! neglected,
//!
//! ```text
//! Δ_1 = −H⁻¹ (1/(n−m)) Σ_S ∇ℓ̃(z),    Δ_t = ρ (I − H⁻¹H_S) Δ_{t−1},
//! ```
//!
//! and the order-k group influence is `∇ℓ(x)ᵀ Σ_{t≤k} Δ_t`.
//!
//! In whitened coordinates `φ = H^{-1/2}∇ℓ` with `H_S ≈ κ Σ_S φφᵀ` (FIM), the
//! same recursion collapses onto the alignment weights `α_t`, so the result is
//! `Σ_t c_t Σ_i α_t(z_i) φ(x)ᵀφ(z_i)`. The constants `c_t` are read off the
//! recursion by tracking it as a polynomial in `F = Σ_S φφᵀ`.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::{score_dot, GradientEmbedding};
use crate::data::Example;
use crate::error::{Error, Result};
use crate::models::{dot, hessian, HessianMode, TrainedModel};

/// How the subset curvature `H_S` is normalized relative to `H`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CurvatureScale {
    /// `H_S` averages over `S`, matching the mean-loss `H` (κ = 1/m).
    #[default]
    Mean,
    /// `H_S` sums over `S` (κ = 1).
    Sum,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroupInfluenceConfig {
    pub order: usize,
    pub n: usize,
    pub m: usize,
    pub hessian_mode: HessianMode,
    pub damping: f64,
    #[serde(default)]
    pub scale: CurvatureScale,
}

impl GroupInfluenceConfig {
    pub fn new(order: usize, n: usize, m: usize) -> Self {
        GroupInfluenceConfig {
            order,
            n,
            m,
            hessian_mode: HessianMode::Fim,
            damping: 0.0,
            scale: CurvatureScale::Mean,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.order == 0 {
            return Err(Error::InvalidConfig("group influence order must be >= 1".into()));
        }
        if self.m == 0 || self.m >= self.n {
            return Err(Error::InvalidConfig(format!("need 1 <= m < n, got m = {}, n = {}", self.m, self.n)));
        }
        if !(self.damping >= 0.0 && self.damping.is_finite()) {
            return Err(Error::InvalidConfig("damping must be a finite nonnegative number".into()));
        }
        Ok(())
    }

    fn rho(&self) -> f64 {
        self.m as f64 / (self.n - self.m) as f64
    }

    fn kappa(&self) -> f64 {
        match self.scale {
            CurvatureScale::Mean => 1.0 / self.m as f64,
            CurvatureScale::Sum => 1.0,
        }
    }
}

/// `c_1 … c_k`, obtained by iterating `w_s = ρ(I − κF) w_{s−1}` from
/// `w_1 = −u/(n−m)` as polynomials in `F` and summing `w_1 … w_k`.
pub fn group_constants(cfg: &GroupInfluenceConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    let k = cfg.order;
    let (rho, kappa) = (cfg.rho(), cfg.kappa());
    // w[j] is the coefficient on F^j u.
    let mut w = vec![0.0; k];
    w[0] = -1.0 / (cfg.n - cfg.m) as f64;
    let mut c = w.clone();
    for s in 1..k {
        for j in (0..=s).rev() {
            let keep = w[j];
            let shifted = if j > 0 { w[j - 1] } else { 0.0 };
            w[j] = rho * (keep - kappa * shifted);
        }
        for j in 0..k {
            c[j] += w[j];
        }
    }
    Ok(c)
}

/// `Σ_t c_t Σ_i α_t(z_i) φ(x)ᵀφ(z_i)` over un-normalized embeddings of `S`.
///
/// At order 1 this is exactly `c_1 · Σ_i score_dot(φ(x), φ(z_i))`.
pub fn group_influence(cfg: &GroupInfluenceConfig, phis: &[GradientEmbedding], phi_x: &GradientEmbedding) -> Result<f64> {
    let total = group_influence_terms(cfg, phis, phi_x)?.into_iter().fold(0.0, |a, t| a + t);
    if !total.is_finite() {
        return Err(Error::NonFinite("group influence".into()));
    }
    Ok(total)
}

/// The per-order contributions `c_t Σ_i α_t(z_i) φ(x)ᵀφ(z_i)`, `t = 1..=k`.
pub fn group_influence_terms(cfg: &GroupInfluenceConfig, phis: &[GradientEmbedding], phi_x: &GradientEmbedding) -> Result<Vec<f64>> {
    let c = group_constants(cfg)?;
    if phis.is_empty() {
        return Err(Error::EmptySubset);
    }
    if phis.len() != cfg.m {
        return Err(Error::InvalidConfig(format!("config says m = {} but {} embeddings were given", cfg.m, phis.len())));
    }
    if phi_x.normalized || phis.iter().any(|p| p.normalized) {
        return Err(Error::EmbeddingFlavor("group influence needs un-normalized embeddings".into()));
    }
    let scores: Vec<f64> = phis.iter().map(|p| score_dot(phi_x, p)).collect::<Result<_>>()?;
    let q = phi_x.q();
    let mut alpha = vec![1.0; phis.len()];
    let mut terms = Vec::with_capacity(c.len());
    for (t, ct) in c.iter().enumerate() {
        if t > 0 {
            let mut v = vec![0.0; q];
            for (a, p) in alpha.iter().zip(phis) {
                for (vk, pk) in v.iter_mut().zip(&p.phi) {
                    *vk += a * pk;
                }
            }
            for (a, p) in alpha.iter_mut().zip(phis) {
                *a = dot(&p.phi, &v);
            }
        }
        let weighted: f64 = alpha.iter().zip(&scores).map(|(a, s)| a * s).sum();
        terms.push(ct * weighted);
    }
    Ok(terms)
}

/// Parameter-space terms `Δ_1 … Δ_k` with `H_S` from `cfg.hessian_mode`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpansionTerms {
    pub delta: Vec<Vec<f64>>,
    pub constants: Vec<f64>,
}

impl ExpansionTerms {
    /// `∇ℓ(x)ᵀ Σ_t Δ_t ε^t`.
    pub fn influence_on(&self, grad_x: &[f64], epsilon: f64) -> f64 {
        let mut e = 1.0;
        let mut acc = 0.0;
        for d in &self.delta {
            e *= epsilon;
            acc += e * dot(grad_x, d);
        }
        acc
    }

    /// `Σ_t Δ_t ε^t`.
    pub fn shift(&self, epsilon: f64) -> Vec<f64> {
        let p = self.delta.first().map_or(0, Vec::len);
        let mut out = vec![0.0; p];
        let mut e = 1.0;
        for d in &self.delta {
            e *= epsilon;
            for (o, v) in out.iter_mut().zip(d) {
                *o += e * v;
            }
        }
        out
    }
}

/// `H` is the pool curvature and `H_S` the subset curvature, both with the
/// same `l2_reg + damping` shift; gradients include the `l2_reg·θ` term.
pub fn expansion_terms(model: &TrainedModel, pool: &[Example], subset: &[&Example], cfg: &GroupInfluenceConfig) -> Result<ExpansionTerms> {
    cfg.validate()?;
    if subset.len() != cfg.m || pool.len() != cfg.n {
        return Err(Error::InvalidConfig(format!(
            "config says n = {}, m = {} but pool has {} and subset {}",
            cfg.n,
            cfg.m,
            pool.len(),
            subset.len()
        )));
    }
    let h = hessian(model, pool, HessianMode::Exact, cfg.damping)?;
    let hs = hessian(model, subset.iter().copied(), cfg.hessian_mode, cfg.damping)?;
    let lu = h.clone().lu();
    let p = model.num_params();
    let mut sum = DVector::<f64>::zeros(p);
    for z in subset {
        let g = model.grad(z)?;
        for k in 0..p {
            sum[k] += g[k] + model.spec.l2_reg * model.theta[k];
        }
    }
    sum /= -((cfg.n - cfg.m) as f64);
    let first = lu.solve(&sum).ok_or(Error::SingularHessian { min_eigenvalue: 0.0 })?;
    let rho = cfg.rho();
    let mut delta = vec![first];
    for _ in 1..cfg.order {
        let prev = delta.last().expect("nonempty");
        let hinv_hs = lu.solve(&(&hs * prev)).ok_or(Error::SingularHessian { min_eigenvalue: 0.0 })?;
        delta.push((prev - hinv_hs) * rho);
    }
    let delta: Vec<Vec<f64>> = delta.into_iter().map(|d| d.as_slice().to_vec()).collect();
    if delta.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("expansion terms".into()));
    }
    Ok(ExpansionTerms {
        delta,
        constants: group_constants(cfg)?,
    })
}
