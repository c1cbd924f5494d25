//! Correlation metrics and the repeated random-split protocol.
//!
//! ```
//! use campvqa::eval::{krcc, plcc, srcc};
//!
//! let pred = [1.0, 2.0, 3.0, 4.0];
//! let mos = [1.0, 3.0, 2.0, 4.0];
//! assert!((srcc(&pred, &mos).unwrap() - 0.8).abs() < 1e-12);
//! assert!((krcc(&pred, &mos).unwrap() - 2.0 / 3.0).abs() < 1e-12);
//! assert!((plcc(&pred, &pred).unwrap() - 1.0).abs() < 1e-12);
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::regressor::{fit, TrainConfig};

fn check(pred: &[f64], mos: &[f64]) -> Result<()> {
    if pred.len() != mos.len() {
        return Err(Error::Dim(format!(
            "{} predictions for {} scores",
            pred.len(),
            mos.len()
        )));
    }
    if pred.len() < 2 {
        return Err(Error::InputTooSmall(
            "correlation needs at least 2 samples".into(),
        ));
    }
    if pred.iter().chain(mos).any(|v| !v.is_finite()) {
        return Err(Error::InvalidData("correlation input is not finite".into()));
    }
    Ok(())
}

fn degenerate() -> Error {
    Error::DegenerateInput("correlation is undefined for a constant input".into())
}

fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(degenerate());
    }
    Ok((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}

/// 1-based ranks; tied values share the mean of their ranks.
pub fn fractional_ranks(v: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&i, &j| v[i].total_cmp(&v[j]));
    let mut ranks = vec![0.0; v.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && v[order[end]] == v[order[start]] {
            end += 1;
        }
        let rank = (start + end + 1) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = rank;
        }
        start = end;
    }
    ranks
}

/// Spearman rank correlation.
pub fn srcc(pred: &[f64], mos: &[f64]) -> Result<f64> {
    check(pred, mos)?;
    pearson(&fractional_ranks(pred), &fractional_ranks(mos))
}

/// Pearson linear correlation.
pub fn plcc(pred: &[f64], mos: &[f64]) -> Result<f64> {
    check(pred, mos)?;
    pearson(pred, mos)
}

/// Kendall tau-b.
pub fn krcc(pred: &[f64], mos: &[f64]) -> Result<f64> {
    check(pred, mos)?;
    let n = pred.len();
    let (mut concordant, mut discordant, mut ties_a, mut ties_b) = (0i64, 0i64, 0i64, 0i64);
    for i in 0..n {
        for j in i + 1..n {
            let a = (pred[i] - pred[j]).partial_cmp(&0.0).expect("finite");
            let b = (mos[i] - mos[j]).partial_cmp(&0.0).expect("finite");
            use std::cmp::Ordering::Equal;
            match (a, b) {
                (Equal, Equal) => {
                    ties_a += 1;
                    ties_b += 1;
                }
                (Equal, _) => ties_a += 1,
                (_, Equal) => ties_b += 1,
                _ if a == b => concordant += 1,
                _ => discordant += 1,
            }
        }
    }
    let pairs = (n * (n - 1) / 2) as i64;
    let (da, db) = (pairs - ties_a, pairs - ties_b);
    if da == 0 || db == 0 {
        return Err(degenerate());
    }
    Ok((concordant - discordant) as f64 / ((da as f64) * (db as f64)).sqrt())
}

/// Four-parameter logistic `(b1 − b2) / (1 + exp(−(x − b3)/b4)) + b2`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Logistic {
    pub b1: f64,
    pub b2: f64,
    pub b3: f64,
    pub b4: f64,
}

impl Logistic {
    pub fn apply(&self, x: f64) -> f64 {
        let t = (-(x - self.b3) / self.b4).clamp(-700.0, 700.0);
        (self.b1 - self.b2) / (1.0 + t.exp()) + self.b2
    }

    fn params(&self) -> [f64; 4] {
        [self.b1, self.b2, self.b3, self.b4]
    }

    fn from_params(p: [f64; 4]) -> Self {
        Self {
            b1: p[0],
            b2: p[1],
            b3: p[2],
            b4: p[3],
        }
    }

    fn sse(&self, x: &[f64], y: &[f64]) -> f64 {
        x.iter()
            .zip(y)
            .map(|(&a, &b)| (self.apply(a) - b).powi(2))
            .sum()
    }

    /// Row of partial derivatives at `x`.
    fn jacobian(&self, x: f64) -> [f64; 4] {
        let t = (-(x - self.b3) / self.b4).clamp(-700.0, 700.0);
        let s = 1.0 / (1.0 + t.exp());
        let ds = s * (1.0 - s);
        let amp = self.b1 - self.b2;
        [
            s,
            1.0 - s,
            -amp * ds / self.b4,
            -amp * ds * (x - self.b3) / (self.b4 * self.b4),
        ]
    }
}

fn solve4(mut a: [[f64; 4]; 4], mut b: [f64; 4]) -> Option<[f64; 4]> {
    for c in 0..4 {
        let p = (c..4).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs()))?;
        if a[p][c].abs() < 1e-300 {
            return None;
        }
        a.swap(c, p);
        b.swap(c, p);
        for r in c + 1..4 {
            let f = a[r][c] / a[c][c];
            for k in c..4 {
                a[r][k] -= f * a[c][k];
            }
            b[r] -= f * b[c];
        }
    }
    let mut x = [0.0; 4];
    for r in (0..4).rev() {
        let s: f64 = (r + 1..4).map(|k| a[r][k] * x[k]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}

/// Levenberg–Marquardt least-squares fit of a [`Logistic`] mapping `x` to `y`.
pub fn fit_logistic(x: &[f64], y: &[f64]) -> Result<Logistic> {
    check(x, y)?;
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let std = (x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    if std == 0.0 {
        return Err(degenerate());
    }
    let ymax = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let ymin = y.iter().copied().fold(f64::INFINITY, f64::min);
    let mut cur = Logistic {
        b1: ymax,
        b2: ymin,
        b3: mean,
        b4: std,
    };
    let mut sse = cur.sse(x, y);
    let mut mu = 1e-3;
    for _ in 0..500 {
        let mut jtj = [[0.0; 4]; 4];
        let mut jtr = [0.0; 4];
        for (&a, &b) in x.iter().zip(y) {
            let j = cur.jacobian(a);
            let r = b - cur.apply(a);
            for p in 0..4 {
                jtr[p] += j[p] * r;
                for q in 0..4 {
                    jtj[p][q] += j[p] * j[q];
                }
            }
        }
        let mut improved = false;
        while mu < 1e12 {
            let mut damped = jtj;
            for (p, row) in damped.iter_mut().enumerate() {
                row[p] += mu * jtj[p][p].max(1e-12);
            }
            if let Some(step) = solve4(damped, jtr) {
                let mut p = cur.params();
                p.iter_mut().zip(step).for_each(|(v, s)| *v += s);
                let cand = Logistic::from_params(p);
                let cand_sse = cand.sse(x, y);
                if cand.b4 != 0.0 && cand_sse.is_finite() && cand_sse < sse {
                    let gain = sse - cand_sse;
                    cur = cand;
                    sse = cand_sse;
                    mu = (mu / 10.0).max(1e-12);
                    improved = gain > 1e-15 * sse.max(1e-300);
                    break;
                }
            }
            mu *= 10.0;
        }
        if !improved {
            break;
        }
    }
    Ok(cur)
}

/// SRCC, KRCC and PLCC of one prediction set.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub srcc: f64,
    pub krcc: f64,
    pub plcc: f64,
}

/// All three correlations; with `logistic`, PLCC is taken after fitting a
/// [`Logistic`] from predictions to scores.
pub fn metrics(pred: &[f64], mos: &[f64], logistic: bool) -> Result<Metrics> {
    let plcc = if logistic {
        let f = fit_logistic(pred, mos)?;
        let mapped: Vec<f64> = pred.iter().map(|&p| f.apply(p)).collect();
        plcc(&mapped, mos)?
    } else {
        plcc(pred, mos)?
    };
    Ok(Metrics {
        srcc: srcc(pred, mos)?,
        krcc: krcc(pred, mos)?,
        plcc,
    })
}

/// Median; the mean of the two middle values for even lengths.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 {
        v[m]
    } else {
        (v[m - 1] + v[m]) / 2.0
    })
}

/// Fused features and scores of a set of videos.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub ids: Vec<String>,
    pub features: Array2<f64>,
    pub mos: Vec<f64>,
}

impl Dataset {
    pub fn new(ids: Vec<String>, rows: Vec<Vec<f64>>, mos: Vec<f64>) -> Result<Self> {
        if ids.len() != rows.len() || ids.len() != mos.len() {
            return Err(Error::Dim(format!(
                "{} ids, {} feature rows and {} scores",
                ids.len(),
                rows.len(),
                mos.len()
            )));
        }
        let d = rows.first().map_or(0, Vec::len);
        if let Some(i) = rows.iter().position(|r| r.len() != d) {
            return Err(Error::Dim(format!(
                "{}: feature length {} differs from {d}",
                ids[i],
                rows[i].len()
            )));
        }
        let flat: Vec<f64> = rows.into_iter().flatten().collect();
        let features = Array2::from_shape_vec((ids.len(), d), flat).expect("checked shape");
        Ok(Self { ids, features, mos })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.features.view()
    }
}

/// Smallest dataset accepted by [`run_protocol`].
pub const MIN_VIDEOS: usize = 10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub repeats: usize,
    pub test_fraction: f64,
    /// Run `i` uses split seed `first_seed + i`.
    pub first_seed: u64,
    pub logistic: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            repeats: 21,
            test_fraction: 0.2,
            first_seed: 0,
            logistic: false,
        }
    }
}

impl EvalConfig {
    pub fn seeds(&self) -> Vec<u64> {
        (0..self.repeats as u64)
            .map(|i| self.first_seed + i)
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.repeats == 0 {
            return Err(Error::Config("repeats must be positive".into()));
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(Error::Config(format!(
                "test_fraction must be in (0, 1), got {}",
                self.test_fraction
            )));
        }
        Ok(())
    }
}

/// By-video train/test split for one repeat. Both halves are sorted.
pub fn split_by_seed(n: usize, test_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_test = ((n as f64 * test_fraction).round() as usize).clamp(1, n - 1);
    let mut train = order.split_off(n_test);
    let mut test = order;
    train.sort_unstable();
    test.sort_unstable();
    (train, test)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub seed: u64,
    pub n_train: usize,
    pub n_test: usize,
    pub srcc: f64,
    pub krcc: f64,
    pub plcc: f64,
    pub val_rmse: f64,
    pub swa_applied: bool,
}

impl RunResult {
    pub fn metrics(&self) -> Metrics {
        Metrics {
            srcc: self.srcc,
            krcc: self.krcc,
            plcc: self.plcc,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dimension: Option<String>,
    pub n: usize,
    pub repeats: usize,
    pub logistic: bool,
    pub runs: Vec<RunResult>,
    pub median: Metrics,
}

impl EvalReport {
    pub fn from_runs(n: usize, logistic: bool, runs: Vec<RunResult>) -> Result<Self> {
        let med = |f: fn(&RunResult) -> f64| {
            median(&runs.iter().map(f).collect::<Vec<_>>())
                .ok_or_else(|| Error::InputTooSmall("no runs to summarize".into()))
        };
        let median = Metrics {
            srcc: med(|r| r.srcc)?,
            krcc: med(|r| r.krcc)?,
            plcc: med(|r| r.plcc)?,
        };
        Ok(Self {
            dimension: None,
            n,
            repeats: runs.len(),
            logistic,
            runs,
            median,
        })
    }

    /// One row per run followed by a `median` row.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        write_reports_csv(std::slice::from_ref(self), path)
    }
}

/// Rows of several reports in one file.
pub fn write_reports_csv(reports: &[EvalReport], path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["dimension", "run", "seed", "srcc", "krcc", "plcc"])?;
    for r in reports {
        let dim = r.dimension.as_deref().unwrap_or("overall");
        for (i, run) in r.runs.iter().enumerate() {
            w.write_record([
                dim.to_string(),
                i.to_string(),
                run.seed.to_string(),
                run.srcc.to_string(),
                run.krcc.to_string(),
                run.plcc.to_string(),
            ])?;
        }
        let m = r.median;
        w.write_record([
            dim.to_string(),
            "median".into(),
            String::new(),
            m.srcc.to_string(),
            m.krcc.to_string(),
            m.plcc.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn run_once(
    ds: &Dataset,
    train_cfg: &TrainConfig,
    cfg: &EvalConfig,
    seed: u64,
) -> Result<RunResult> {
    let (train_idx, test_idx) = split_by_seed(ds.len(), cfg.test_fraction, seed);
    let run_cfg = TrainConfig {
        seed: train_cfg.seed.wrapping_add(seed),
        ..train_cfg.clone()
    };
    let report = fit(ds.view(), &ds.mos, &train_idx, &run_cfg)?;
    let pred = report
        .params
        .predict_batch(ds.features.select(Axis(0), &test_idx).view())?;
    let mos: Vec<f64> = test_idx.iter().map(|&i| ds.mos[i]).collect();
    let m = metrics(&pred, &mos, cfg.logistic)?;
    Ok(RunResult {
        seed,
        n_train: train_idx.len(),
        n_test: test_idx.len(),
        srcc: m.srcc,
        krcc: m.krcc,
        plcc: m.plcc,
        val_rmse: report.val_rmse,
        swa_applied: report.swa_applied(),
    })
}

/// Trains and tests once per seed on fresh random splits, in parallel, and
/// reports per-run and median correlations.
pub fn run_protocol(ds: &Dataset, train_cfg: &TrainConfig, cfg: &EvalConfig) -> Result<EvalReport> {
    cfg.validate()?;
    train_cfg.validate()?;
    if ds.len() < MIN_VIDEOS {
        return Err(Error::Config(format!(
            "evaluation needs at least {MIN_VIDEOS} videos, got {}",
            ds.len()
        )));
    }
    let runs = cfg
        .seeds()
        .into_par_iter()
        .map(|seed| run_once(ds, train_cfg, cfg, seed))
        .collect::<Result<Vec<_>>>()?;
    EvalReport::from_runs(ds.len(), cfg.logistic, runs)
}

/// Runs the protocol once per requested dimension, each with its own
/// regressor trained on that dimension's scores.
pub fn per_dimension_eval(
    ids: &[String],
    features: ArrayView2<f64>,
    scores: &BTreeMap<String, Vec<f64>>,
    dimensions: &[String],
    train_cfg: &TrainConfig,
    cfg: &EvalConfig,
) -> Result<Vec<EvalReport>> {
    dimensions
        .iter()
        .map(|dim| {
            let mos = scores
                .get(dim)
                .ok_or_else(|| Error::Config(format!("no scores for dimension {dim:?}")))?;
            let ds = Dataset {
                ids: ids.to_vec(),
                features: features.to_owned(),
                mos: mos.clone(),
            };
            if ds.mos.len() != ds.ids.len() {
                return Err(Error::Dim(format!(
                    "dimension {dim:?} has {} scores for {} videos",
                    ds.mos.len(),
                    ds.ids.len()
                )));
            }
            let mut report = run_protocol(&ds, train_cfg, cfg)?;
            report.dimension = Some(dim.clone());
            Ok(report)
        })
        .collect()
}
