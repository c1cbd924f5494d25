//! Quality regressor: an MLP trained with a precision + ranking loss.
//!
//! Each hidden layer applies affine → batch norm → GELU → dropout; the output
//! layer is affine. Training uses SGD with a single-cycle cosine learning
//! rate, weight decay on weight matrices only, and, over the last part of
//! training, stochastic weight averaging and early stopping on validation
//! RMSE.
//!
//! Inputs are z-scored and targets standardized with statistics of the
//! training split; both are stored with the weights so that
//! [`RegressorParams::predict`] takes raw features and returns MOS-scale
//! scores.
//!
//! ```
//! use campvqa::regressor::{loss_composite, loss_ranking};
//!
//! assert_eq!(loss_ranking(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 1.0);
//! let l = loss_composite(&[1.0, 0.0], &[0.0, 1.0], 0.6, 1.0).unwrap();
//! assert!((l - 1.6).abs() < 1e-12);
//! ```

mod io;
mod loss;
mod mlp;
mod train;

use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use loss::{loss_composite, loss_precision, loss_ranking, loss_with_grad, LossWeights};
pub use mlp::{
    gelu, gelu_grad, BatchNorm, BnMode, Dense, Gradients, Hidden, HiddenGrad, Mlp, ParamKind,
    Trace, BN_EPS,
};
pub use train::{
    cosine_lr, cross_validate, fit, make_batches, rmse, train, EpochLog, Selection, Split,
    SwaAccumulator, TrainReport, VALIDATION_FRACTION,
};

/// Datasets with at least this many videos use [`TrainConfig::large`].
pub const LARGE_DATASET_THRESHOLD: usize = 5000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub hidden: Vec<usize>,
    pub dropout: f64,
    /// Upper bound; the effective size is capped by the training split.
    pub batch_size: usize,
    pub epochs: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub momentum: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    /// Snapshots for weight averaging start at epoch `ceil(fraction·epochs)`.
    pub swa_start_fraction: f64,
    /// Epochs without improvement before stopping, counted from the epoch
    /// where weight averaging starts; 0 disables.
    pub patience: usize,
    /// Weight of the newest batch in the running statistics; 0 freezes them.
    pub bn_momentum: f64,
    pub seed: u64,
    /// Cross-validation folds over the training split; 0 uses a single
    /// held-out validation carve.
    pub folds: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::small()
    }
}

impl TrainConfig {
    pub fn small() -> Self {
        Self {
            hidden: vec![256, 128],
            dropout: 0.1,
            batch_size: 256,
            epochs: 200,
            lr: 1e-2,
            weight_decay: 5e-4,
            momentum: 0.0,
            lambda1: 0.6,
            lambda2: 1.0,
            swa_start_fraction: 0.75,
            patience: 5,
            bn_momentum: 0.1,
            seed: 0,
            folds: 0,
        }
    }

    pub fn large() -> Self {
        Self {
            epochs: 50,
            lr: 1e-1,
            weight_decay: 5e-3,
            folds: 10,
            ..Self::small()
        }
    }

    pub fn for_dataset_size(n: usize) -> Self {
        if n >= LARGE_DATASET_THRESHOLD {
            Self::large()
        } else {
            Self::small()
        }
    }

    pub fn loss_weights(&self) -> LossWeights {
        LossWeights {
            lambda1: self.lambda1,
            lambda2: self.lambda2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.loss_weights().validate()?;
        let bad = |msg: String| Err(Error::Config(msg));
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return bad(format!(
                "hidden sizes must be non-empty and positive, got {:?}",
                self.hidden
            ));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout must be in [0, 1), got {}", self.dropout));
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return bad("batch_size and epochs must be positive".into());
        }
        for (name, v) in [("lr", self.lr), ("weight_decay", self.weight_decay)] {
            if !(v.is_finite() && v >= 0.0) {
                return bad(format!("{name} must be finite and non-negative, got {v}"));
            }
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad(format!("momentum must be in [0, 1), got {}", self.momentum));
        }
        if !(self.swa_start_fraction > 0.0 && self.swa_start_fraction < 1.0) {
            return bad(format!(
                "swa_start_fraction must be in (0, 1), got {}",
                self.swa_start_fraction
            ));
        }
        if !(0.0..=1.0).contains(&self.bn_momentum) {
            return bad(format!(
                "bn_momentum must be in [0, 1], got {}",
                self.bn_momentum
            ));
        }
        if self.folds == 1 {
            return bad("folds must be 0 or at least 2".into());
        }
        Ok(())
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let json = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(&json)
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

/// Affine maps applied to inputs and targets around the network.
#[derive(Clone, Debug, PartialEq)]
pub struct Normalization {
    pub input_mean: Vec<f64>,
    pub input_scale: Vec<f64>,
    pub target_mean: f64,
    pub target_scale: f64,
}

fn mean_std(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let std = var.sqrt();
    (mean, if std > 1e-12 { std } else { 1.0 })
}

impl Normalization {
    pub fn identity(d_in: usize) -> Self {
        Self {
            input_mean: vec![0.0; d_in],
            input_scale: vec![1.0; d_in],
            target_mean: 0.0,
            target_scale: 1.0,
        }
    }

    /// Per-column mean and population standard deviation; constant columns
    /// get scale 1.
    pub fn fit(x: ArrayView2<f64>, y: &[f64]) -> Self {
        let (input_mean, input_scale) = x
            .axis_iter(Axis(1))
            .map(|c| mean_std(c.iter().copied()))
            .unzip();
        let (target_mean, target_scale) = mean_std(y.iter().copied());
        Self {
            input_mean,
            input_scale,
            target_mean,
            target_scale,
        }
    }

    pub fn d_in(&self) -> usize {
        self.input_mean.len()
    }

    pub fn inputs(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let mut out = x.to_owned();
        for mut row in out.axis_iter_mut(Axis(0)) {
            for ((v, m), s) in row.iter_mut().zip(&self.input_mean).zip(&self.input_scale) {
                *v = (*v - m) / s;
            }
        }
        out
    }

    pub fn target(&self, y: f64) -> f64 {
        (y - self.target_mean) / self.target_scale
    }

    pub fn score(&self, z: f64) -> f64 {
        z * self.target_scale + self.target_mean
    }
}

/// A trained regressor: network, normalization and provenance of training.
#[derive(Clone, Debug, PartialEq)]
pub struct RegressorParams {
    pub mlp: Mlp,
    pub norm: Normalization,
    pub seed: u64,
    pub config_hash: String,
}

impl RegressorParams {
    pub fn d_in(&self) -> usize {
        self.mlp.d_in()
    }

    pub fn validate(&self) -> Result<()> {
        if self.norm.d_in() != self.mlp.d_in() || self.norm.input_scale.len() != self.mlp.d_in() {
            return Err(Error::Dim(format!(
                "normalization width {} does not match network input {}",
                self.norm.d_in(),
                self.mlp.d_in()
            )));
        }
        if let Some(l) = self
            .mlp
            .hidden
            .iter()
            .position(|h| h.bn.running_var.iter().any(|&v| !(v >= 0.0)))
        {
            return Err(Error::InvalidData(format!(
                "layer {l} has a negative running variance"
            )));
        }
        Ok(())
    }

    /// Scores for each row of raw features.
    pub fn predict_batch(&self, x: ArrayView2<f64>) -> Result<Vec<f64>> {
        if x.ncols() != self.d_in() {
            return Err(Error::Dim(format!(
                "features have {} dimensions, regressor expects {}",
                x.ncols(),
                self.d_in()
            )));
        }
        let z = self.mlp.predict(self.norm.inputs(x).view())?;
        Ok(z.iter().map(|&v| self.norm.score(v)).collect())
    }

    pub fn predict(&self, features: &[f64]) -> Result<f64> {
        let view = ArrayView2::from_shape((1, features.len()), features).expect("row vector");
        Ok(self.predict_batch(view)?[0])
    }
}
