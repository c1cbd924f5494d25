use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn check(pred: &[f64], mos: &[f64]) -> Result<()> {
    if pred.len() != mos.len() {
        return Err(Error::Dim(format!(
            "{} predictions for {} targets",
            pred.len(),
            mos.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::InputTooSmall("loss of an empty batch".into()));
    }
    Ok(())
}

/// Mean absolute error.
pub fn loss_precision(pred: &[f64], mos: &[f64]) -> Result<f64> {
    check(pred, mos)?;
    let sum: f64 = pred.iter().zip(mos).map(|(p, y)| (p - y).abs()).sum();
    Ok(sum / pred.len() as f64)
}

fn sign_weight(yi: f64, yj: f64) -> f64 {
    if yi >= yj {
        1.0
    } else {
        -1.0
    }
}

/// Pairwise hinge over all ordered pairs,
/// `(1/N²) Σ max(0, |y_i − y_j| − s_ij (ŷ_i − ŷ_j))`.
pub fn loss_ranking(pred: &[f64], mos: &[f64]) -> Result<f64> {
    check(pred, mos)?;
    let mut sum = 0.0;
    for (i, (&pi, &yi)) in pred.iter().zip(mos).enumerate() {
        for (j, (&pj, &yj)) in pred.iter().zip(mos).enumerate() {
            if i != j {
                sum += ((yi - yj).abs() - sign_weight(yi, yj) * (pi - pj)).max(0.0);
            }
        }
    }
    let n = pred.len() as f64;
    Ok(sum / (n * n))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub lambda1: f64,
    pub lambda2: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda1: 0.6,
            lambda2: 1.0,
        }
    }
}

impl LossWeights {
    pub fn new(lambda1: f64, lambda2: f64) -> Result<Self> {
        let w = Self { lambda1, lambda2 };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("lambda1", self.lambda1), ("lambda2", self.lambda2)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Config(format!(
                    "{name} must be a finite non-negative number, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// `λ1·L_p + λ2·L_r`.
pub fn loss_composite(pred: &[f64], mos: &[f64], lambda1: f64, lambda2: f64) -> Result<f64> {
    let w = LossWeights::new(lambda1, lambda2)?;
    Ok(w.lambda1 * loss_precision(pred, mos)? + w.lambda2 * loss_ranking(pred, mos)?)
}

/// Composite loss and its gradient with respect to `pred`. Kinks of the
/// absolute value and the hinge get a zero subgradient.
pub fn loss_with_grad(pred: &[f64], mos: &[f64], w: LossWeights) -> Result<(f64, Vec<f64>)> {
    check(pred, mos)?;
    w.validate()?;
    let n = pred.len() as f64;
    let mut grad = vec![0.0; pred.len()];

    let mut lp = 0.0;
    for ((g, &p), &y) in grad.iter_mut().zip(pred).zip(mos) {
        let d = p - y;
        lp += d.abs();
        if d != 0.0 {
            *g += w.lambda1 * d.signum() / n;
        }
    }

    let mut lr = 0.0;
    let scale = w.lambda2 / (n * n);
    for i in 0..pred.len() {
        for j in 0..pred.len() {
            if i == j {
                continue;
            }
            let s = sign_weight(mos[i], mos[j]);
            let t = (mos[i] - mos[j]).abs() - s * (pred[i] - pred[j]);
            if t > 0.0 {
                lr += t;
                grad[i] -= s * scale;
                grad[j] += s * scale;
            }
        }
    }
    Ok((w.lambda1 * lp / n + w.lambda2 * lr / (n * n), grad))
}
