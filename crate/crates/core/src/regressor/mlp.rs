use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;

use crate::error::{Error, Result};

pub const BN_EPS: f64 = 1e-5;

const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Exact GELU, `x·Φ(x)`.
pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + libm::erf(x * std::f64::consts::FRAC_1_SQRT_2))
}

pub fn gelu_grad(x: f64) -> f64 {
    0.5 * (1.0 + libm::erf(x * std::f64::consts::FRAC_1_SQRT_2))
        + x * FRAC_1_SQRT_2PI * (-0.5 * x * x).exp()
}

/// Fully connected layer, `y = x Wᵀ + b` with `W` of shape `out × in`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Dense {
    pub fn zeros(d_in: usize, d_out: usize) -> Self {
        Self {
            weight: Array2::zeros((d_out, d_in)),
            bias: Array1::zeros(d_out),
        }
    }

    /// Uniform in `±1/sqrt(d_in)` for weights and bias.
    pub fn init<R: Rng + ?Sized>(d_in: usize, d_out: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (d_in as f64).sqrt();
        let mut u = || rng.random_range(-bound..=bound);
        let weight = Array2::from_shape_simple_fn((d_out, d_in), &mut u);
        let bias = Array1::from_shape_simple_fn(d_out, &mut u);
        Self { weight, bias }
    }

    pub fn d_in(&self) -> usize {
        self.weight.ncols()
    }

    pub fn d_out(&self) -> usize {
        self.weight.nrows()
    }

    fn apply(&self, x: ArrayView2<f64>) -> Array2<f64> {
        x.dot(&self.weight.t()) + &self.bias
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BatchNorm {
    pub gamma: Array1<f64>,
    pub beta: Array1<f64>,
    pub running_mean: Array1<f64>,
    pub running_var: Array1<f64>,
}

impl BatchNorm {
    pub fn identity(d: usize) -> Self {
        Self {
            gamma: Array1::ones(d),
            beta: Array1::zeros(d),
            running_mean: Array1::zeros(d),
            running_var: Array1::ones(d),
        }
    }
}

/// Affine, batch norm, GELU, dropout.
#[derive(Clone, Debug, PartialEq)]
pub struct Hidden {
    pub dense: Dense,
    pub bn: BatchNorm,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BnMode {
    /// Normalize with the stored running statistics.
    Running,
    /// Normalize with the statistics of the current batch.
    Batch,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamKind {
    Weight,
    Bias,
    Gamma,
    Beta,
}

/// Multilayer perceptron with a scalar output.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    pub hidden: Vec<Hidden>,
    pub output: Dense,
    pub dropout: f64,
}

/// Intermediate values of a forward pass needed by [`Mlp::backward`].
#[derive(Clone, Debug)]
pub struct Trace {
    bn: BnMode,
    inputs: Vec<Array2<f64>>,
    zhat: Vec<Array2<f64>>,
    pre: Vec<Array2<f64>>,
    inv_std: Vec<Array1<f64>>,
    mean: Vec<Array1<f64>>,
    var: Vec<Array1<f64>>,
    last: Array2<f64>,
}

impl Trace {
    /// Per-layer `(mean, biased variance)` used for normalization.
    pub fn batch_stats(&self) -> impl Iterator<Item = (&Array1<f64>, &Array1<f64>)> {
        self.mean.iter().zip(&self.var)
    }

    pub fn batch_len(&self) -> usize {
        self.last.nrows()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct HiddenGrad {
    pub dense: Dense,
    pub gamma: Array1<f64>,
    pub beta: Array1<f64>,
}

/// Gradients of a loss with respect to every learnable tensor of an [`Mlp`].
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub hidden: Vec<HiddenGrad>,
    pub output: Dense,
}

impl Gradients {
    pub fn zeros_like(mlp: &Mlp) -> Self {
        Self {
            hidden: mlp
                .hidden
                .iter()
                .map(|h| HiddenGrad {
                    dense: Dense::zeros(h.dense.d_in(), h.dense.d_out()),
                    gamma: Array1::zeros(h.dense.d_out()),
                    beta: Array1::zeros(h.dense.d_out()),
                })
                .collect(),
            output: Dense::zeros(mlp.output.d_in(), 1),
        }
    }

    /// Tensors in [`Mlp::learnable`] order.
    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out = Vec::new();
        for h in &self.hidden {
            out.push(slice(&h.dense.weight));
            out.push(slice(&h.dense.bias));
            out.push(slice(&h.gamma));
            out.push(slice(&h.beta));
        }
        out.push(slice(&self.output.weight));
        out.push(slice(&self.output.bias));
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::new();
        for h in &mut self.hidden {
            out.push(slice_mut(&mut h.dense.weight));
            out.push(slice_mut(&mut h.dense.bias));
            out.push(slice_mut(&mut h.gamma));
            out.push(slice_mut(&mut h.beta));
        }
        out.push(slice_mut(&mut self.output.weight));
        out.push(slice_mut(&mut self.output.bias));
        out
    }

    pub fn flat(&self) -> Vec<f64> {
        self.tensors().concat()
    }
}

/// `dot` may return column-major results; flat views need row-major.
fn standard(a: Array2<f64>) -> Array2<f64> {
    if a.is_standard_layout() {
        a
    } else {
        a.as_standard_layout().into_owned()
    }
}

fn slice<D: ndarray::Dimension>(a: &ndarray::Array<f64, D>) -> &[f64] {
    a.as_slice().expect("standard layout")
}

fn slice_mut<D: ndarray::Dimension>(a: &mut ndarray::Array<f64, D>) -> &mut [f64] {
    a.as_slice_mut().expect("standard layout")
}

impl Mlp {
    /// Randomly initialized network with identity batch norm.
    pub fn new<R: Rng + ?Sized>(d_in: usize, hidden: &[usize], dropout: f64, rng: &mut R) -> Self {
        let mut layers = Vec::with_capacity(hidden.len());
        let mut prev = d_in;
        for &h in hidden {
            layers.push(Hidden {
                dense: Dense::init(prev, h, rng),
                bn: BatchNorm::identity(h),
            });
            prev = h;
        }
        Self {
            hidden: layers,
            output: Dense::init(prev, 1, rng),
            dropout,
        }
    }

    /// All weights and biases zero, identity batch norm.
    pub fn zeros(d_in: usize, hidden: &[usize], dropout: f64) -> Self {
        let mut prev = d_in;
        let layers = hidden
            .iter()
            .map(|&h| {
                let l = Hidden {
                    dense: Dense::zeros(prev, h),
                    bn: BatchNorm::identity(h),
                };
                prev = h;
                l
            })
            .collect();
        Self {
            hidden: layers,
            output: Dense::zeros(prev, 1),
            dropout,
        }
    }

    pub fn d_in(&self) -> usize {
        self.hidden
            .first()
            .map_or(self.output.d_in(), |h| h.dense.d_in())
    }

    pub fn hidden_sizes(&self) -> Vec<usize> {
        self.hidden.iter().map(|h| h.dense.d_out()).collect()
    }

    fn check_input(&self, d: usize) -> Result<()> {
        if d != self.d_in() {
            return Err(Error::Dim(format!(
                "input has {d} features, network expects {}",
                self.d_in()
            )));
        }
        Ok(())
    }

    /// Learnable tensors with their kind, in a fixed order: per hidden layer
    /// weight, bias, gamma, beta; then output weight and bias.
    pub fn learnable(&self) -> Vec<(ParamKind, &[f64])> {
        let mut out = Vec::new();
        for h in &self.hidden {
            out.push((ParamKind::Weight, slice(&h.dense.weight)));
            out.push((ParamKind::Bias, slice(&h.dense.bias)));
            out.push((ParamKind::Gamma, slice(&h.bn.gamma)));
            out.push((ParamKind::Beta, slice(&h.bn.beta)));
        }
        out.push((ParamKind::Weight, slice(&self.output.weight)));
        out.push((ParamKind::Bias, slice(&self.output.bias)));
        out
    }

    pub fn learnable_mut(&mut self) -> Vec<(ParamKind, &mut [f64])> {
        let mut out = Vec::new();
        for h in &mut self.hidden {
            out.push((ParamKind::Weight, slice_mut(&mut h.dense.weight)));
            out.push((ParamKind::Bias, slice_mut(&mut h.dense.bias)));
            out.push((ParamKind::Gamma, slice_mut(&mut h.bn.gamma)));
            out.push((ParamKind::Beta, slice_mut(&mut h.bn.beta)));
        }
        out.push((ParamKind::Weight, slice_mut(&mut self.output.weight)));
        out.push((ParamKind::Bias, slice_mut(&mut self.output.bias)));
        out
    }

    pub fn flat_params(&self) -> Vec<f64> {
        self.learnable()
            .into_iter()
            .flat_map(|(_, t)| t.iter().copied())
            .collect()
    }

    pub fn set_flat_params(&mut self, flat: &[f64]) -> Result<()> {
        let total: usize = self.learnable().iter().map(|(_, t)| t.len()).sum();
        if flat.len() != total {
            return Err(Error::Dim(format!(
                "{} parameter values for a network with {total}",
                flat.len()
            )));
        }
        let mut offset = 0;
        for (_, t) in self.learnable_mut() {
            t.copy_from_slice(&flat[offset..offset + t.len()]);
            offset += t.len();
        }
        Ok(())
    }

    /// Inference: running batch-norm statistics, no dropout.
    pub fn predict(&self, x: ArrayView2<f64>) -> Result<Array1<f64>> {
        Ok(self.forward_train(x, BnMode::Running, &[])?.0)
    }

    pub fn forward_one(&self, x: &[f64]) -> Result<f64> {
        let view = ArrayView2::from_shape((1, x.len()), x).expect("row vector");
        Ok(self.predict(view)?[0])
    }

    /// One inverted-dropout mask per hidden layer; empty when dropout is 0.
    pub fn dropout_masks<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<Array2<f64>> {
        if self.dropout <= 0.0 {
            return Vec::new();
        }
        let keep = 1.0 - self.dropout;
        self.hidden
            .iter()
            .map(|h| {
                Array2::from_shape_simple_fn((n, h.dense.d_out()), || {
                    if rng.random::<f64>() < self.dropout {
                        0.0
                    } else {
                        1.0 / keep
                    }
                })
            })
            .collect()
    }

    /// Forward pass recording what [`Mlp::backward`] needs. `masks` is empty
    /// or holds one mask per hidden layer.
    pub fn forward_train(
        &self,
        x: ArrayView2<f64>,
        bn: BnMode,
        masks: &[Array2<f64>],
    ) -> Result<(Array1<f64>, Trace)> {
        self.check_input(x.ncols())?;
        if x.nrows() == 0 {
            return Err(Error::InputTooSmall("empty batch".into()));
        }
        if !masks.is_empty() && masks.len() != self.hidden.len() {
            return Err(Error::Internal(format!(
                "{} dropout masks for {} hidden layers",
                masks.len(),
                self.hidden.len()
            )));
        }
        let mut trace = Trace {
            bn,
            inputs: Vec::new(),
            zhat: Vec::new(),
            pre: Vec::new(),
            inv_std: Vec::new(),
            mean: Vec::new(),
            var: Vec::new(),
            last: Array2::zeros((0, 0)),
        };
        let mut a = x.to_owned();
        for (l, layer) in self.hidden.iter().enumerate() {
            let z = layer.dense.apply(a.view());
            let (mean, var) = match bn {
                BnMode::Running => (layer.bn.running_mean.clone(), layer.bn.running_var.clone()),
                BnMode::Batch => {
                    let m = z.mean_axis(Axis(0)).expect("non-empty batch");
                    let v = (&z - &m)
                        .mapv(|d| d * d)
                        .mean_axis(Axis(0))
                        .expect("non-empty batch");
                    (m, v)
                }
            };
            let inv_std = var.mapv(|v| 1.0 / (v + BN_EPS).sqrt());
            let zhat = (&z - &mean) * &inv_std;
            let pre = &zhat * &layer.bn.gamma + &layer.bn.beta;
            let mut act = pre.mapv(gelu);
            if let Some(m) = masks.get(l) {
                act *= m;
            }
            trace.inputs.push(std::mem::replace(&mut a, act));
            trace.zhat.push(zhat);
            trace.pre.push(pre);
            trace.inv_std.push(inv_std);
            trace.mean.push(mean);
            trace.var.push(var);
        }
        let out = self.output.apply(a.view()).column(0).to_owned();
        trace.last = a;
        Ok((out, trace))
    }

    /// Gradients given `dout = ∂L/∂output` for each row of the traced batch.
    pub fn backward(
        &self,
        trace: &Trace,
        masks: &[Array2<f64>],
        dout: ArrayView1<f64>,
    ) -> Gradients {
        let n = dout.len() as f64;
        let d_out = dout.to_owned().insert_axis(Axis(1));
        let output = Dense {
            weight: standard(d_out.t().dot(&trace.last)),
            bias: d_out.sum_axis(Axis(0)),
        };
        let mut da = d_out.dot(&self.output.weight);
        let mut hidden = Vec::with_capacity(self.hidden.len());
        for (l, layer) in self.hidden.iter().enumerate().rev() {
            if let Some(m) = masks.get(l) {
                da *= m;
            }
            let dy = &da * &trace.pre[l].mapv(gelu_grad);
            let gamma = (&dy * &trace.zhat[l]).sum_axis(Axis(0));
            let beta = dy.sum_axis(Axis(0));
            let dzhat = &dy * &layer.bn.gamma;
            let dz = match trace.bn {
                BnMode::Running => &dzhat * &trace.inv_std[l],
                BnMode::Batch => {
                    let s1 = dzhat.sum_axis(Axis(0));
                    let s2 = (&dzhat * &trace.zhat[l]).sum_axis(Axis(0));
                    ((&dzhat * n - &s1) - &trace.zhat[l] * &s2) * &trace.inv_std[l] / n
                }
            };
            let dense = Dense {
                weight: standard(dz.t().dot(&trace.inputs[l])),
                bias: dz.sum_axis(Axis(0)),
            };
            da = dz.dot(&layer.dense.weight);
            hidden.push(HiddenGrad { dense, gamma, beta });
        }
        hidden.reverse();
        Gradients { hidden, output }
    }

    /// Exponential moving average of batch statistics, with the unbiased
    /// variance. No-op for a trace taken with running statistics.
    pub fn update_running(&mut self, trace: &Trace, momentum: f64) {
        if trace.bn != BnMode::Batch {
            return;
        }
        let n = trace.batch_len() as f64;
        let correction = if n > 1.0 { n / (n - 1.0) } else { 1.0 };
        for (layer, (mean, var)) in self.hidden.iter_mut().zip(trace.batch_stats()) {
            let bn = &mut layer.bn;
            bn.running_mean = &bn.running_mean * (1.0 - momentum) + mean * momentum;
            bn.running_var = &bn.running_var * (1.0 - momentum) + var * (momentum * correction);
        }
    }
}
