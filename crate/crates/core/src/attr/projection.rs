use nalgebra::DMatrix;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::models::dot;
use crate::rng::RngSeed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProjectionInit {
    RandomGaussian,
    PcaOfGradients,
}

/// Linear map `ℝᵖ → ℝ^q` applied to preconditioned gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    matrix: Matrix,
    pub init: ProjectionInit,
    pub seed: RngSeed,
}

impl Projection {
    /// Entries drawn i.i.d. `N(0, 1)` and scaled by `1/√q`.
    pub fn random_gaussian(q: usize, p: usize, seed: RngSeed) -> Result<Self> {
        if q == 0 || p == 0 {
            return Err(Error::InvalidSize("projection dimensions must be positive".into()));
        }
        let mut rng = seed.derive(0x9e0).rng();
        let scale = 1.0 / (q as f64).sqrt();
        let data = (0..q * p)
            .map(|_| {
                let v: f64 = StandardNormal.sample(&mut rng);
                v * scale
            })
            .collect();
        Ok(Projection {
            matrix: Matrix::from_vec(q, p, data)?,
            init: ProjectionInit::RandomGaussian,
            seed,
        })
    }

    /// Top-`q` principal directions of the centered gradient rows.
    /// Each direction is sign-fixed so its largest-magnitude entry is positive.
    pub fn pca(gradients: &[Vec<f64>], q: usize) -> Result<Self> {
        let n = gradients.len();
        let p = gradients.first().map_or(0, Vec::len);
        if n == 0 || p == 0 {
            return Err(Error::EmptyPool);
        }
        if q == 0 || q > p {
            return Err(Error::InvalidSize(format!("pca needs 1 <= q <= p = {p}, got {q}")));
        }
        if gradients.iter().any(|g| g.len() != p) {
            return Err(Error::DimensionMismatch { expected: p, got: gradients.iter().map(Vec::len).find(|&l| l != p).unwrap_or(p) });
        }
        let mut mean = vec![0.0; p];
        for g in gradients {
            for (m, v) in mean.iter_mut().zip(g) {
                *m += v / n as f64;
            }
        }
        let centered = DMatrix::from_fn(n, p, |i, j| gradients[i][j] - mean[j]);
        let cov = centered.tr_mul(&centered) / n as f64;
        let eig = cov.symmetric_eigen();
        let mut order: Vec<usize> = (0..p).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
        let mut data = Vec::with_capacity(q * p);
        for &k in &order[..q] {
            let col: Vec<f64> = eig.eigenvectors.column(k).iter().copied().collect();
            let pivot = col.iter().copied().fold(0.0f64, |a, v| if v.abs() > a.abs() { v } else { a });
            let sign = if pivot < 0.0 { -1.0 } else { 1.0 };
            data.extend(col.iter().map(|v| v * sign));
        }
        Ok(Projection {
            matrix: Matrix::from_vec(q, p, data)?,
            init: ProjectionInit::PcaOfGradients,
            seed: RngSeed(0),
        })
    }

    pub fn from_matrix(matrix: Matrix, init: ProjectionInit, seed: RngSeed) -> Result<Self> {
        if matrix.as_slice().iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("projection matrix".into()));
        }
        Ok(Projection { matrix, init, seed })
    }

    pub fn matrix(&self) -> &Matrix {
        &self.matrix
    }

    pub fn output_dim(&self) -> usize {
        self.matrix.rows()
    }

    pub fn input_dim(&self) -> usize {
        self.matrix.cols()
    }

    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        (0..self.matrix.rows()).map(|r| dot(self.matrix.row(r), v)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gaussian_scale_and_determinism() {
        let a = Projection::random_gaussian(50, 40, RngSeed(3)).unwrap();
        let b = Projection::random_gaussian(50, 40, RngSeed(3)).unwrap();
        assert_eq!(a, b);
        // Column norms² concentrate at 1 with the 1/√q scaling.
        let m = a.matrix();
        let mean_sq: f64 = m.as_slice().iter().map(|v| v * v).sum::<f64>() / 40.0;
        assert!((mean_sq - 1.0).abs() < 0.15, "{mean_sq}");
        assert_ne!(a, Projection::random_gaussian(50, 40, RngSeed(4)).unwrap());
    }

    #[test]
    fn pca_finds_dominant_axis() {
        let grads: Vec<Vec<f64>> = (0..20).map(|i| {
            let t = i as f64 - 9.5;
            vec![0.01 * (i % 3) as f64, -3.0 * t, 0.1 * (i % 2) as f64]
        }).collect();
        let p = Projection::pca(&grads, 1).unwrap();
        let row = p.matrix().row(0);
        assert!((row[1] - 1.0).abs() < 1e-6, "{row:?}");
        assert!(Projection::pca(&grads, 4).is_err());
    }
}
