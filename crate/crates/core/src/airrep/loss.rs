use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RankLossConfig {
    /// Pairs whose label gap is below this carry no weight.
    pub t_min: f64,
    /// Pair weights are clipped at this gap.
    pub t_max: f64,
}

impl Default for RankLossConfig {
    fn default() -> Self {
        RankLossConfig { t_min: 0.1, t_max: 5.0 }
    }
}

impl RankLossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.t_min >= 0.0 && self.t_max >= self.t_min && self.t_max.is_finite()) {
            return Err(Error::InvalidConfig("need 0 <= t_min <= t_max < inf".into()));
        }
        Ok(())
    }

    pub fn weight(&self, gap: f64) -> f64 {
        if gap < self.t_min {
            0.0
        } else {
            gap.min(self.t_max)
        }
    }
}

/// `log(1 + e^x)` without overflow.
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `−Σ_{r_i > r_j} w_ij log σ(f_i − f_j)` and its gradient with respect to `f`.
pub fn ranking_loss(f: &[f64], r: &[f64], cfg: &RankLossConfig) -> Result<(f64, Vec<f64>)> {
    if f.len() != r.len() {
        return Err(Error::DimensionMismatch { expected: r.len(), got: f.len() });
    }
    if f.len() < 2 {
        return Err(Error::InvalidSize("ranking loss needs at least two scores".into()));
    }
    let mut loss = 0.0;
    let mut grad = vec![0.0; f.len()];
    for i in 0..f.len() {
        for j in 0..f.len() {
            if !(r[i] > r[j]) {
                continue;
            }
            let w = cfg.weight(r[i] - r[j]);
            if w == 0.0 {
                continue;
            }
            let diff = f[i] - f[j];
            loss += w * softplus(-diff);
            let g = w * sigmoid(-diff);
            grad[i] -= g;
            grad[j] += g;
        }
    }
    Ok((loss, grad))
}

/// Ordered pairs `(i, j)` with `r_i > r_j` that carry nonzero weight.
pub fn active_pairs(r: &[f64], cfg: &RankLossConfig) -> usize {
    let mut n = 0;
    for a in r {
        for b in r {
            if a > b && cfg.weight(a - b) > 0.0 {
                n += 1;
            }
        }
    }
    n
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_cases() {
        let cfg = RankLossConfig::default();
        let (l, g) = ranking_loss(&[0.0, 0.0], &[1.0, 0.0], &cfg).unwrap();
        assert!((l - std::f64::consts::LN_2).abs() < 1e-12);
        assert_eq!(g, vec![-0.5, 0.5]);
        let (l, g) = ranking_loss(&[3.0, -1.0, 2.0], &[0.02, 0.0, 0.05], &cfg).unwrap();
        assert_eq!(l, 0.0);
        assert_eq!(g, vec![0.0; 3]);
        assert_eq!(cfg.weight(7.0), 5.0);
        assert_eq!(cfg.weight(0.05), 0.0);
        assert!(ranking_loss(&[1.0], &[1.0], &cfg).is_err());
    }

    #[test]
    fn large_margins_stay_finite() {
        let (l, g) = ranking_loss(&[-800.0, 800.0], &[1.0, 0.0], &RankLossConfig::default()).unwrap();
        assert!((l - 1600.0).abs() < 1e-9);
        assert!(g.iter().all(|v| v.is_finite()));
    }
}
