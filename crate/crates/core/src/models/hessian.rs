use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::network::Network;
use super::scalar::Dual;
use super::TrainedModel;
use crate::data::Example;
use crate::error::{Error, Result};

/// Largest parameter count for which a dense `p × p` Hessian is materialized.
pub const HESSIAN_CAP: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HessianMode {
    /// Mean per-example loss Hessian.
    Exact,
    /// Mean outer product of per-example gradients.
    Fim,
}

/// Curvature of the training objective over `data`:
/// `mean ∇²ℓ` (or `mean ∇ℓ∇ℓᵀ` for FIM) `+ (l2_reg + damping)·I`.
pub fn hessian<'a, I>(model: &TrainedModel, data: I, mode: HessianMode, damping: f64) -> Result<DMatrix<f64>>
where
    I: IntoIterator<Item = &'a Example>,
{
    let p = model.num_params();
    if p > HESSIAN_CAP {
        return Err(Error::HessianTooLarge { p, cap: HESSIAN_CAP });
    }
    if !(damping >= 0.0 && damping.is_finite()) {
        return Err(Error::InvalidConfig("damping must be a finite nonnegative number".into()));
    }
    let data: Vec<&Example> = data.into_iter().collect();
    if data.is_empty() {
        return Err(Error::EmptySubset);
    }
    for z in &data {
        model.spec.check_example(z)?;
    }
    let net = Network::new(&model.spec);
    let mut h = DMatrix::<f64>::zeros(p, p);
    match mode {
        HessianMode::Exact => {
            let mut theta: Vec<Dual> = model.theta.iter().map(|&v| Dual::new(v, 0.0)).collect();
            let mut col = vec![Dual::new(0.0, 0.0); p];
            for j in 0..p {
                theta[j].d = 1.0;
                col.iter_mut().for_each(|c| *c = Dual::new(0.0, 0.0));
                for z in &data {
                    net.loss_and_grad(&theta, &z.features, z.label, &mut col);
                }
                for (i, c) in col.iter().enumerate() {
                    h[(i, j)] = c.d;
                }
                theta[j].d = 0.0;
            }
        }
        HessianMode::Fim => {
            let mut g = vec![0.0; p];
            for z in &data {
                g.iter_mut().for_each(|v| *v = 0.0);
                net.loss_and_grad(&model.theta, &z.features, z.label, &mut g);
                let gv = nalgebra::DVector::from_column_slice(&g);
                h.ger(1.0, &gv, &gv, 1.0);
            }
        }
    }
    h /= data.len() as f64;
    let asym = (&h - h.transpose()).amax();
    assert!(
        asym <= 1e-8 * (1.0 + h.amax()),
        "hessian lost symmetry (max asymmetry {asym:e})"
    );
    let h = (&h + h.transpose()) * 0.5;
    let shift = model.spec.l2_reg + damping;
    Ok(h + DMatrix::identity(p, p) * shift)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Label;
    use crate::models::ModelSpec;

    fn quad_points() -> Vec<Example> {
        vec![
            Example::new(0, vec![1.0], Label::Real(0.0)),
            Example::new(1, vec![1.0], Label::Real(2.0)),
        ]
    }

    #[test]
    fn quadratic_hessian_mean_convention() {
        // loss (θ − z)²/2 per point: averaged Hessian 1, summed 2.
        let m = TrainedModel::from_params(ModelSpec::linear_regression(1).with_bias(false), vec![0.3]).unwrap();
        let pts = quad_points();
        let h = hessian(&m, &pts, HessianMode::Exact, 0.0).unwrap();
        assert_eq!(h[(0, 0)], 1.0);
        assert_eq!(h[(0, 0)] * pts.len() as f64, 2.0);
    }

    #[test]
    fn fim_with_zero_gradients_is_damping() {
        // θ = 1 at z = 1 for both points: zero residuals.
        let m = TrainedModel::from_params(ModelSpec::linear_regression(2), vec![0.0, 0.0, 1.0]).unwrap();
        let pts = vec![
            Example::new(0, vec![1.0, 2.0], Label::Real(1.0)),
            Example::new(1, vec![-3.0, 0.5], Label::Real(1.0)),
        ];
        let h = hessian(&m, &pts, HessianMode::Fim, 0.25).unwrap();
        assert_eq!(h, DMatrix::identity(3, 3) * 0.25);
    }

    #[test]
    fn logistic_hessian_eigenvalues_bounded_by_damping() {
        let spec = ModelSpec::logistic_regression(3, 2);
        let theta = vec![0.4, -0.3, 1.2, 0.0, 0.9, -1.1, 0.2, 0.1];
        let m = TrainedModel::from_params(spec, theta).unwrap();
        let pts: Vec<Example> = (0..6)
            .map(|i| {
                let f = i as f64;
                Example::new(i, vec![f.sin(), f.cos(), 0.3 * f], Label::Class(i % 2))
            })
            .collect();
        let damping = 1e-3;
        let h = hessian(&m, &pts, HessianMode::Exact, damping).unwrap();
        let eig = h.symmetric_eigen();
        assert!(eig.eigenvalues.iter().all(|&l| l >= damping - 1e-12));
    }

    #[test]
    fn cap_is_enforced() {
        let spec = ModelSpec::logistic_regression(2100, 2);
        let m = TrainedModel::from_params(spec.clone(), vec![0.0; spec.num_params()]).unwrap();
        let pts = vec![Example::new(0, vec![0.0; 2100], Label::Class(0))];
        let err = hessian(&m, &pts, HessianMode::Exact, 0.0).unwrap_err();
        assert!(err.to_string().starts_with("hessian too large"));
    }
}
