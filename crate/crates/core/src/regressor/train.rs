use std::path::Path;

use ndarray::{Array1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::loss::loss_with_grad;
use super::mlp::{BnMode, Gradients, Mlp, ParamKind};
use super::{Normalization, RegressorParams, TrainConfig};
use crate::error::{Error, Result};

/// Share of a training split held out for validation when not
/// cross-validating.
pub const VALIDATION_FRACTION: f64 = 0.125;

/// Disjoint row indices for training and validation.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
}

impl Split {
    /// Shuffles `indices` and holds out `round(fraction·n)` of them (at
    /// least one) for validation. Both halves are returned sorted.
    pub fn random(indices: &[usize], val_fraction: f64, seed: u64) -> Result<Self> {
        let mut order = indices.to_vec();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let n_val = ((order.len() as f64 * val_fraction).round() as usize).max(1);
        if order.len() < n_val + 2 {
            return Err(Error::Config(format!(
                "{} samples cannot be split into training and validation",
                order.len()
            )));
        }
        let mut train = order.split_off(n_val);
        let mut val = order;
        train.sort_unstable();
        val.sort_unstable();
        Ok(Self { train, val })
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if self.train.len() < 2 || self.val.is_empty() {
            return Err(Error::Config(format!(
                "need at least 2 training and 1 validation samples, got {} and {}",
                self.train.len(),
                self.val.len()
            )));
        }
        let mut seen = vec![false; n];
        for &i in self.train.iter().chain(&self.val) {
            match seen.get_mut(i) {
                None => {
                    return Err(Error::Config(format!(
                        "split index {i} out of range for {n} samples"
                    )))
                }
                Some(true) => {
                    return Err(Error::Config(format!(
                        "sample {i} appears twice in the split"
                    )))
                }
                Some(s) => *s = true,
            }
        }
        Ok(())
    }
}

/// `lr0·½(1 + cos(π·epoch/total))`: `lr0` at epoch 0, zero at `total`.
pub fn cosine_lr(epoch: usize, total: usize, lr0: f64) -> f64 {
    lr0 * 0.5 * (1.0 + (std::f64::consts::PI * epoch as f64 / total as f64).cos())
}

/// Consecutive chunks of `order`; a trailing chunk of one sample is merged
/// into the previous chunk so that batch statistics are defined.
pub fn make_batches(order: &[usize], batch: usize) -> Vec<Vec<usize>> {
    let mut out: Vec<Vec<usize>> = order.chunks(batch.max(1)).map(<[usize]>::to_vec).collect();
    if out.len() > 1 && out.last().is_some_and(|b| b.len() == 1) {
        let last = out.pop().expect("non-empty");
        out.last_mut().expect("non-empty").extend(last);
    }
    out
}

pub fn rmse(pred: &[f64], y: &[f64]) -> f64 {
    let sum: f64 = pred.iter().zip(y).map(|(p, t)| (p - t) * (p - t)).sum();
    (sum / pred.len() as f64).sqrt()
}

/// Running sum of parameter snapshots.
#[derive(Clone, Debug, Default)]
pub struct SwaAccumulator {
    sum: Vec<f64>,
    count: usize,
}

impl SwaAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, mlp: &Mlp) -> Result<()> {
        let flat = mlp.flat_params();
        if self.count == 0 {
            self.sum = flat;
        } else {
            if flat.len() != self.sum.len() {
                return Err(Error::Dim(format!(
                    "snapshot of {} parameters, expected {}",
                    flat.len(),
                    self.sum.len()
                )));
            }
            self.sum.iter_mut().zip(&flat).for_each(|(s, v)| *s += v);
        }
        self.count += 1;
        Ok(())
    }

    pub fn count(&self) -> usize {
        self.count
    }

    /// Sum of snapshots in insertion order divided by their number.
    pub fn average(&self) -> Option<Vec<f64>> {
        (self.count > 0).then(|| self.sum.iter().map(|s| s / self.count as f64).collect())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub val_rmse: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Selection {
    /// Weights after this epoch (1-based).
    Epoch(usize),
    /// Weight average.
    Swa,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainReport {
    pub log: Vec<EpochLog>,
    pub selection: Selection,
    /// Validation RMSE of the selected parameters.
    pub val_rmse: f64,
    pub swa_val_rmse: Option<f64>,
    pub stopped_early: bool,
    pub params: RegressorParams,
}

impl TrainReport {
    pub fn swa_applied(&self) -> bool {
        self.selection == Selection::Swa
    }

    pub fn write_log_csv(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        let mut w = csv::Writer::from_path(path)?;
        for row in &self.log {
            w.serialize(row)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

fn sgd_step(
    mlp: &mut Mlp,
    grads: &Gradients,
    velocity: &mut Gradients,
    lr: f64,
    cfg: &TrainConfig,
) {
    for (((kind, p), g), v) in mlp
        .learnable_mut()
        .into_iter()
        .zip(grads.tensors())
        .zip(velocity.tensors_mut())
    {
        let decay = if kind == ParamKind::Weight {
            lr * cfg.weight_decay
        } else {
            0.0
        };
        for ((p, &g), v) in p.iter_mut().zip(g).zip(v.iter_mut()) {
            *v = cfg.momentum * *v + g;
            *p -= decay * *p + lr * *v;
        }
    }
}

/// Replaces running statistics with the average batch statistics of one
/// pass over `x`, without dropout.
fn recompute_bn(mlp: &mut Mlp, x: ArrayView2<f64>, batch: usize) -> Result<()> {
    let order: Vec<usize> = (0..x.nrows()).collect();
    let batches = make_batches(&order, batch);
    let mut sums: Vec<(Array1<f64>, Array1<f64>)> = mlp
        .hidden
        .iter()
        .map(|h| {
            (
                Array1::zeros(h.dense.d_out()),
                Array1::zeros(h.dense.d_out()),
            )
        })
        .collect();
    for b in &batches {
        let xb = x.select(Axis(0), b);
        let (_, trace) = mlp.forward_train(xb.view(), BnMode::Batch, &[])?;
        let n = b.len() as f64;
        let correction = if n > 1.0 { n / (n - 1.0) } else { 1.0 };
        for ((sm, sv), (m, v)) in sums.iter_mut().zip(trace.batch_stats()) {
            *sm += m;
            *sv += &(v * correction);
        }
    }
    let k = batches.len() as f64;
    for (h, (sm, sv)) in mlp.hidden.iter_mut().zip(sums) {
        h.bn.running_mean = sm / k;
        h.bn.running_var = sv / k;
    }
    Ok(())
}

fn check_finite(x: ArrayView2<f64>, y: &[f64]) -> Result<()> {
    if x.nrows() != y.len() {
        return Err(Error::Dim(format!(
            "{} feature rows for {} targets",
            x.nrows(),
            y.len()
        )));
    }
    if let Some(i) = y.iter().position(|v| !v.is_finite()) {
        return Err(Error::InvalidData(format!("target {i} is not finite")));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidData(
            "features contain non-finite values".into(),
        ));
    }
    Ok(())
}

/// Trains on `split.train`, tracking RMSE on `split.val` after every epoch.
pub fn train(
    x: ArrayView2<f64>,
    y: &[f64],
    split: &Split,
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    cfg.validate()?;
    check_finite(x, y)?;
    split.validate(y.len())?;

    let x_train = x.select(Axis(0), &split.train);
    let y_train: Vec<f64> = split.train.iter().map(|&i| y[i]).collect();
    let norm = Normalization::fit(x_train.view(), &y_train);
    let x_train = norm.inputs(x_train.view());
    let z_train: Vec<f64> = y_train.iter().map(|&v| norm.target(v)).collect();
    let x_val = norm.inputs(x.select(Axis(0), &split.val).view());
    let y_val: Vec<f64> = split.val.iter().map(|&i| y[i]).collect();

    let val_rmse = |mlp: &Mlp| -> Result<f64> {
        let z = mlp.predict(x_val.view())?;
        let pred: Vec<f64> = z.iter().map(|&v| norm.score(v)).collect();
        Ok(rmse(&pred, &y_val))
    };

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut mlp = Mlp::new(x.ncols(), &cfg.hidden, cfg.dropout, &mut rng);
    let mut velocity = Gradients::zeros_like(&mlp);
    let weights = cfg.loss_weights();
    let batch = cfg.batch_size.min(split.train.len());
    let swa_start = ((cfg.swa_start_fraction * cfg.epochs as f64).ceil() as usize).max(1);

    let mut log = Vec::with_capacity(cfg.epochs);
    let mut swa = SwaAccumulator::new();
    let mut best = (f64::INFINITY, 0, mlp.clone());
    let mut waited = 0;
    let mut stopped_early = false;
    let mut order: Vec<usize> = (0..split.train.len()).collect();

    for epoch in 1..=cfg.epochs {
        let lr = cosine_lr(epoch - 1, cfg.epochs, cfg.lr);
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for b in make_batches(&order, batch) {
            let xb = x_train.select(Axis(0), &b);
            let zb: Vec<f64> = b.iter().map(|&i| z_train[i]).collect();
            let masks = mlp.dropout_masks(b.len(), &mut rng);
            let (out, trace) = mlp.forward_train(xb.view(), BnMode::Batch, &masks)?;
            let (loss, dout) = loss_with_grad(out.as_slice().expect("contiguous"), &zb, weights)?;
            let grads = mlp.backward(&trace, &masks, Array1::from(dout).view());
            mlp.update_running(&trace, cfg.bn_momentum);
            sgd_step(&mut mlp, &grads, &mut velocity, lr, cfg);
            loss_sum += loss * b.len() as f64;
        }
        let train_loss = loss_sum / split.train.len() as f64;
        if !train_loss.is_finite() {
            return Err(Error::InvalidData(format!(
                "training diverged at epoch {epoch}"
            )));
        }
        let rmse = val_rmse(&mlp)?;
        log.push(EpochLog {
            epoch,
            lr,
            train_loss,
            val_rmse: rmse,
        });
        if rmse < best.0 {
            best = (rmse, epoch, mlp.clone());
            waited = 0;
        } else if epoch >= swa_start {
            waited += 1;
        }
        if epoch >= swa_start {
            swa.add(&mlp)?;
        }
        if cfg.patience > 0 && waited >= cfg.patience {
            stopped_early = epoch < cfg.epochs;
            break;
        }
    }

    let (mut selected_rmse, best_epoch, mut selected) = best;
    let mut selection = Selection::Epoch(best_epoch);
    let mut swa_val_rmse = None;
    if let Some(avg) = swa.average() {
        let mut averaged = mlp;
        averaged.set_flat_params(&avg)?;
        recompute_bn(&mut averaged, x_train.view(), batch)?;
        let r = val_rmse(&averaged)?;
        swa_val_rmse = Some(r);
        if r < selected_rmse {
            selected_rmse = r;
            selected = averaged;
            selection = Selection::Swa;
        }
    }

    Ok(TrainReport {
        log,
        selection,
        val_rmse: selected_rmse,
        swa_val_rmse,
        stopped_early,
        params: RegressorParams {
            mlp: selected,
            norm,
            seed: cfg.seed,
            config_hash: cfg.hash(),
        },
    })
}

/// `cfg.folds`-fold cross-validation over `indices`; fold `f` trains with
/// seed `cfg.seed + f`.
pub fn cross_validate(
    x: ArrayView2<f64>,
    y: &[f64],
    indices: &[usize],
    cfg: &TrainConfig,
) -> Result<Vec<TrainReport>> {
    let k = cfg.folds;
    if k < 2 || indices.len() < 2 * k {
        return Err(Error::Config(format!(
            "cannot run {k}-fold cross-validation on {} samples",
            indices.len()
        )));
    }
    let mut order = indices.to_vec();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(cfg.seed));
    (0..k)
        .map(|f| {
            let (mut val, mut tr) = (Vec::new(), Vec::new());
            for (p, &i) in order.iter().enumerate() {
                if p % k == f {
                    val.push(i)
                } else {
                    tr.push(i)
                }
            }
            val.sort_unstable();
            tr.sort_unstable();
            let fold_cfg = TrainConfig {
                seed: cfg.seed.wrapping_add(f as u64),
                ..cfg.clone()
            };
            train(x, y, &Split { train: tr, val }, &fold_cfg)
        })
        .collect()
}

/// Trains a model on `indices`: with a random validation carve, or, when
/// `cfg.folds > 0`, keeps the fold model with the lowest validation RMSE.
pub fn fit(
    x: ArrayView2<f64>,
    y: &[f64],
    indices: &[usize],
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    if cfg.folds == 0 {
        let split = Split::random(indices, VALIDATION_FRACTION, cfg.seed)?;
        return train(x, y, &split, cfg);
    }
    let reports = cross_validate(x, y, indices, cfg)?;
    let mut best: Option<TrainReport> = None;
    for r in reports {
        if best.as_ref().map_or(true, |b| r.val_rmse < b.val_rmse) {
            best = Some(r);
        }
    }
    Ok(best.expect("at least two folds"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use rand::Rng;

    fn planted(n: usize, d: usize, seed: u64) -> (Array2<f64>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let x = Array2::from_shape_simple_fn((n, d), || rng.random_range(-1.0..1.0));
        let y = x
            .rows()
            .into_iter()
            .map(|r| {
                r.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>()
                    + 0.01 * rng.random_range(-1.0..1.0)
            })
            .collect();
        (x, y)
    }

    fn quick() -> TrainConfig {
        TrainConfig {
            hidden: vec![16, 8],
            epochs: 20,
            batch_size: 32,
            ..TrainConfig::small()
        }
    }

    #[test]
    fn cosine_endpoints() {
        assert_eq!(cosine_lr(0, 50, 0.1), 0.1);
        assert!(cosine_lr(50, 50, 0.1).abs() <= 1e-3 * 0.1);
        assert!((cosine_lr(25, 50, 0.1) - 0.05).abs() < 1e-15);
        let lrs: Vec<f64> = (0..=50).map(|e| cosine_lr(e, 50, 0.1)).collect();
        assert!(lrs.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn batching() {
        let order: Vec<usize> = (0..10).collect();
        let sizes = |b| {
            make_batches(&order, b)
                .iter()
                .map(Vec::len)
                .collect::<Vec<_>>()
        };
        assert_eq!(sizes(4), [4, 4, 2]);
        assert_eq!(sizes(3), [3, 3, 4]);
        assert_eq!(sizes(10), [10]);
        assert_eq!(sizes(20), [10]);
        assert_eq!(make_batches(&[5], 4), [vec![5]]);
        assert_eq!(make_batches(&order, 3).concat(), order);
    }

    #[test]
    fn splits() {
        let idx: Vec<usize> = (0..80).collect();
        let s = Split::random(&idx, VALIDATION_FRACTION, 1).unwrap();
        assert_eq!((s.train.len(), s.val.len()), (70, 10));
        s.validate(80).unwrap();
        assert_eq!(s, Split::random(&idx, VALIDATION_FRACTION, 1).unwrap());
        assert!(Split::random(&[0, 1], 0.5, 0).is_err());
        let overlap = Split {
            train: vec![0, 1],
            val: vec![1],
        };
        assert!(matches!(overlap.validate(3), Err(Error::Config(_))));
        let empty = Split {
            train: vec![0, 1],
            val: vec![],
        };
        assert!(matches!(empty.validate(3), Err(Error::Config(_))));
    }

    #[test]
    fn swa_average_is_exact_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let snaps: Vec<Mlp> = (0..7)
            .map(|_| Mlp::new(3, &[5, 4], 0.1, &mut rng))
            .collect();
        let mut acc = SwaAccumulator::new();
        assert!(acc.average().is_none());
        for s in &snaps {
            acc.add(s).unwrap();
        }
        let avg = acc.average().unwrap();
        let flats: Vec<Vec<f64>> = snaps.iter().map(Mlp::flat_params).collect();
        for (k, a) in avg.iter().enumerate() {
            let mut s = 0.0;
            for f in &flats {
                s += f[k];
            }
            assert_eq!(*a, s / 7.0);
        }
        assert!(acc.add(&Mlp::zeros(2, &[1], 0.0)).is_err());
    }

    #[test]
    fn patience_one_with_constant_rmse_stops_after_two_epochs() {
        let (x, y) = planted(40, 3, 2);
        let cfg = TrainConfig {
            lr: 0.0,
            bn_momentum: 0.0,
            patience: 1,
            swa_start_fraction: 0.01,
            ..quick()
        };
        let split = Split::random(&(0..40).collect::<Vec<_>>(), 0.25, 0).unwrap();
        let r = train(x.view(), &y, &split, &cfg).unwrap();
        assert_eq!(r.log.len(), 2);
        assert_eq!(r.log[0].val_rmse, r.log[1].val_rmse);
        assert!(r.stopped_early);
        assert_eq!(r.val_rmse, r.log[0].val_rmse.min(r.swa_val_rmse.unwrap()));
    }

    #[test]
    fn patience_counts_only_late_epochs() {
        let (x, y) = planted(40, 3, 2);
        let cfg = TrainConfig {
            lr: 0.0,
            bn_momentum: 0.0,
            patience: 2,
            epochs: 20,
            swa_start_fraction: 0.5,
            ..quick()
        };
        let split = Split::random(&(0..40).collect::<Vec<_>>(), 0.25, 0).unwrap();
        let r = train(x.view(), &y, &split, &cfg).unwrap();
        // Averaging starts at epoch 10; epochs 10 and 11 fail to improve.
        assert_eq!(r.log.len(), 11);
        assert!(r.stopped_early);
    }

    #[test]
    fn deterministic() {
        let (x, y) = planted(120, 4, 3);
        let split = Split::random(&(0..120).collect::<Vec<_>>(), 0.2, 5).unwrap();
        let a = train(x.view(), &y, &split, &quick()).unwrap();
        let b = train(x.view(), &y, &split, &quick()).unwrap();
        assert_eq!(a, b);
        let c = train(x.view(), &y, &split, &TrainConfig { seed: 1, ..quick() }).unwrap();
        assert_ne!(a.params, c.params);
    }

    #[test]
    fn selection_is_minimal_rmse() {
        let (x, y) = planted(200, 4, 8);
        let split = Split::random(&(0..200).collect::<Vec<_>>(), 0.2, 0).unwrap();
        let r = train(
            x.view(),
            &y,
            &split,
            &TrainConfig {
                patience: 0,
                ..quick()
            },
        )
        .unwrap();
        let min_epoch = r
            .log
            .iter()
            .map(|e| e.val_rmse)
            .fold(f64::INFINITY, f64::min);
        let min_all = r.swa_val_rmse.map_or(min_epoch, |s| s.min(min_epoch));
        assert_eq!(r.val_rmse, min_all);
        assert!(r.swa_val_rmse.is_some());
        let pred = r
            .params
            .predict_batch(x.select(Axis(0), &split.val).view())
            .unwrap();
        let yv: Vec<f64> = split.val.iter().map(|&i| y[i]).collect();
        assert!((rmse(&pred, &yv) - r.val_rmse).abs() < 1e-12);
    }

    #[test]
    fn planted_linear_is_learned() {
        let (x, y) = planted(1000, 8, 1);
        let split = Split::random(&(0..1000).collect::<Vec<_>>(), 0.2, 0).unwrap();
        let cfg = TrainConfig {
            hidden: vec![64, 32],
            ..TrainConfig::small()
        };
        let r = train(x.view(), &y, &split, &cfg).unwrap();
        let pred = r
            .params
            .predict_batch(x.select(Axis(0), &split.val).view())
            .unwrap();
        let yv: Vec<f64> = split.val.iter().map(|&i| y[i]).collect();
        let s = crate::eval::srcc(&pred, &yv).unwrap();
        assert!(s >= 0.95, "validation SRCC {s}");
    }

    #[test]
    fn rejects_bad_inputs() {
        let (x, mut y) = planted(20, 2, 0);
        let split = Split::random(&(0..20).collect::<Vec<_>>(), 0.2, 0).unwrap();
        let empty = Split {
            train: vec![],
            val: vec![0],
        };
        assert!(matches!(
            train(x.view(), &y, &empty, &quick()),
            Err(Error::Config(_))
        ));
        y[3] = f64::NAN;
        assert!(matches!(
            train(x.view(), &y, &split, &quick()),
            Err(Error::InvalidData(_))
        ));
    }

    #[test]
    fn fold_fit_picks_best_fold() {
        let (x, y) = planted(100, 3, 6);
        let idx: Vec<usize> = (0..100).collect();
        let cfg = TrainConfig {
            folds: 4,
            epochs: 5,
            ..quick()
        };
        let reports = cross_validate(x.view(), &y, &idx, &cfg).unwrap();
        assert_eq!(reports.len(), 4);
        let best = reports
            .iter()
            .map(|r| r.val_rmse)
            .fold(f64::INFINITY, f64::min);
        assert_eq!(fit(x.view(), &y, &idx, &cfg).unwrap().val_rmse, best);
    }
}
