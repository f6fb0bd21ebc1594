//! Dense feed-forward network with optional batch normalization and dropout.
//!
//! Each layer computes `z = a W + b`, optionally batch-normalizes `z` (the bias
//! is unused in that case, the shift `beta` replaces it), applies the
//! activation, and finally applies inverted dropout in training mode.
//! Batches are row-major: one sample per row.

use ndarray::{Array1, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use super::activation::Activation;
use crate::error::{Error, Result};

pub const BN_MOMENTUM: f64 = 0.9;
pub const BN_EPSILON: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub n_in: usize,
    pub n_out: usize,
    pub activation: Activation,
    pub batch_norm: bool,
    pub dropout_rate: f64,
}

impl LayerSpec {
    pub fn dense(n_in: usize, n_out: usize, activation: Activation) -> Self {
        Self {
            n_in,
            n_out,
            activation,
            batch_norm: false,
            dropout_rate: 0.0,
        }
    }

    pub fn with_batch_norm(mut self) -> Self {
        self.batch_norm = true;
        self
    }

    pub fn with_dropout(mut self, rate: f64) -> Self {
        self.dropout_rate = rate;
        self
    }
}

/// Builds `hidden` ReLU layers of equal width followed by an output layer.
pub fn mlp_specs(
    n_in: usize,
    hidden: &[usize],
    n_out: usize,
    output: Activation,
    batch_norm: bool,
    dropout_rate: f64,
) -> Vec<LayerSpec> {
    let mut specs = Vec::with_capacity(hidden.len() + 1);
    let mut prev = n_in;
    for &width in hidden {
        let mut s = LayerSpec::dense(prev, width, Activation::Relu).with_dropout(dropout_rate);
        s.batch_norm = batch_norm;
        specs.push(s);
        prev = width;
    }
    specs.push(LayerSpec::dense(prev, n_out, output));
    specs
}

pub fn validate_specs(specs: &[LayerSpec]) -> Result<()> {
    if specs.is_empty() {
        return Err(Error::Config("a network needs at least one layer".into()));
    }
    for (l, s) in specs.iter().enumerate() {
        if s.n_in == 0 || s.n_out == 0 {
            return Err(Error::Config(format!("layer {l} has a zero dimension")));
        }
        if !(0.0..1.0).contains(&s.dropout_rate) {
            return Err(Error::Config(format!(
                "layer {l} dropout rate {} outside [0, 1)",
                s.dropout_rate
            )));
        }
        let last = l + 1 == specs.len();
        if s.activation == Activation::Softmax && !last {
            return Err(Error::Config(format!(
                "softmax is only allowed on the final layer (found on layer {l})"
            )));
        }
        if last && s.dropout_rate > 0.0 {
            return Err(Error::Config("the output layer cannot use dropout".into()));
        }
        if l > 0 && specs[l - 1].n_out != s.n_in {
            return Err(Error::Config(format!(
                "layer {l} expects {} inputs but layer {} produces {}",
                s.n_in,
                l - 1,
                specs[l - 1].n_out
            )));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm {
    pub gamma: Array1<f64>,
    pub beta: Array1<f64>,
    pub running_mean: Array1<f64>,
    pub running_var: Array1<f64>,
}

impl BatchNorm {
    fn new(n: usize) -> Self {
        Self {
            gamma: Array1::ones(n),
            beta: Array1::zeros(n),
            running_mean: Array1::zeros(n),
            running_var: Array1::ones(n),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub spec: LayerSpec,
    /// `n_in x n_out`.
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
    pub batch_norm: Option<BatchNorm>,
}

/// Per-feature z-scoring applied to network inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn identity(n: usize) -> Self {
        Self {
            mean: vec![0.0; n],
            std: vec![1.0; n],
        }
    }

    /// Column means and population standard deviations; constant columns get std 1.
    pub fn fit(x: &Array2<f64>) -> Self {
        let n = x.nrows().max(1) as f64;
        let mean: Vec<f64> = (0..x.ncols()).map(|j| x.column(j).sum() / n).collect();
        let std = (0..x.ncols())
            .map(|j| {
                let var = x.column(j).iter().map(|v| (v - mean[j]).powi(2)).sum::<f64>() / n;
                let s = var.sqrt();
                if s > 1e-12 {
                    s
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, std }
    }

    pub fn apply(&self, x: &Array2<f64>) -> Array2<f64> {
        let mut out = x.clone();
        for mut row in out.axis_iter_mut(Axis(0)) {
            for ((v, m), s) in row.iter_mut().zip(&self.mean).zip(&self.std) {
                *v = (*v - m) / s;
            }
        }
        out
    }
}

/// Weights, biases, batch-norm state, and input standardization of one network.
#[derive(Debug, Clone)]
pub struct NetworkParams {
    layers: Vec<DenseLayer>,
    input: Standardizer,
    /// Bumped on every mutable access so stale forward caches are detected.
    version: u64,
}

impl PartialEq for NetworkParams {
    fn eq(&self, other: &Self) -> bool {
        self.layers == other.layers && self.input == other.input
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train { seed: u64 },
    Infer,
}

/// Per-layer intermediates of a training-mode forward pass.
#[derive(Debug, Clone)]
struct LayerCache {
    input: Array2<f64>,
    /// Normalized `z` and `1/sqrt(var + eps)`, batch-norm layers only.
    normalized: Option<(Array2<f64>, Array1<f64>)>,
    batch_mean: Option<Array1<f64>>,
    batch_var: Option<Array1<f64>>,
    pre_activation: Array2<f64>,
    activated: Array2<f64>,
    mask: Option<Array2<f64>>,
}

#[derive(Debug, Clone)]
pub struct ForwardCache {
    layers: Vec<LayerCache>,
    version: u64,
}

impl ForwardCache {
    /// Batch mean and (biased) variance of each batch-norm layer, `None` elsewhere.
    pub fn batch_statistics(&self) -> Vec<Option<(&Array1<f64>, &Array1<f64>)>> {
        self.layers
            .iter()
            .map(|c| c.batch_mean.as_ref().zip(c.batch_var.as_ref()))
            .collect()
    }

    /// Pre-activation values of every layer, after batch normalization.
    pub fn pre_activations(&self) -> Vec<&Array2<f64>> {
        self.layers.iter().map(|c| &c.pre_activation).collect()
    }
}

/// Gradients shaped like the trainable parameters of a [`NetworkParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<LayerGradients>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGradients {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
    /// (d gamma, d beta) for batch-norm layers.
    pub batch_norm: Option<(Array1<f64>, Array1<f64>)>,
}

impl Gradients {
    pub fn zeros_like(net: &NetworkParams) -> Self {
        Self {
            layers: net
                .layers
                .iter()
                .map(|l| LayerGradients {
                    weights: Array2::zeros(l.weights.dim()),
                    bias: Array1::zeros(l.bias.len()),
                    batch_norm: l
                        .batch_norm
                        .as_ref()
                        .map(|bn| (Array1::zeros(bn.gamma.len()), Array1::zeros(bn.beta.len()))),
                })
                .collect(),
        }
    }

    /// Visits every tensor in the canonical parameter order.
    pub fn for_each_tensor(&self, mut f: impl FnMut(&[f64])) {
        for l in &self.layers {
            f(l.weights.as_slice().expect("standard layout"));
            f(l.bias.as_slice().expect("standard layout"));
            if let Some((g, b)) = &l.batch_norm {
                f(g.as_slice().expect("standard layout"));
                f(b.as_slice().expect("standard layout"));
            }
        }
    }

    pub fn for_each_tensor_mut(&mut self, mut f: impl FnMut(&mut [f64])) {
        for l in &mut self.layers {
            f(l.weights.as_slice_mut().expect("standard layout"));
            f(l.bias.as_slice_mut().expect("standard layout"));
            if let Some((g, b)) = &mut l.batch_norm {
                f(g.as_slice_mut().expect("standard layout"));
                f(b.as_slice_mut().expect("standard layout"));
            }
        }
    }

    /// Tensors in canonical order, each tagged with its layer.
    pub fn tensors(&self) -> Vec<(usize, &[f64])> {
        let mut out = Vec::new();
        for (l, g) in self.layers.iter().enumerate() {
            out.push((l, g.weights.as_slice().expect("standard layout")));
            out.push((l, g.bias.as_slice().expect("standard layout")));
            if let Some((dg, db)) = &g.batch_norm {
                out.push((l, dg.as_slice().expect("standard layout")));
                out.push((l, db.as_slice().expect("standard layout")));
            }
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<(usize, &mut [f64])> {
        let mut out = Vec::new();
        for (l, g) in self.layers.iter_mut().enumerate() {
            out.push((l, g.weights.as_slice_mut().expect("standard layout")));
            out.push((l, g.bias.as_slice_mut().expect("standard layout")));
            if let Some((dg, db)) = &mut g.batch_norm {
                out.push((l, dg.as_slice_mut().expect("standard layout")));
                out.push((l, db.as_slice_mut().expect("standard layout")));
            }
        }
        out
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        self.for_each_tensor(|t| out.extend_from_slice(t));
        out
    }

    pub fn max_abs(&self) -> f64 {
        let mut m: f64 = 0.0;
        self.for_each_tensor(|t| m = t.iter().fold(m, |a, v| a.max(v.abs())));
        m
    }
}

impl NetworkParams {
    /// Initializes weights uniformly with variance `2 / n_in`; biases start at zero.
    pub fn new(specs: &[LayerSpec], seed: u64) -> Result<Self> {
        validate_specs(specs)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = specs
            .iter()
            .map(|&spec| {
                let limit = (6.0 / spec.n_in as f64).sqrt();
                let dist = Uniform::new_inclusive(-limit, limit).expect("finite limit");
                let weights =
                    Array2::from_shape_simple_fn((spec.n_in, spec.n_out), || dist.sample(&mut rng));
                DenseLayer {
                    spec,
                    weights,
                    bias: Array1::zeros(spec.n_out),
                    batch_norm: spec.batch_norm.then(|| BatchNorm::new(spec.n_out)),
                }
            })
            .collect();
        Ok(Self {
            layers,
            input: Standardizer::identity(specs[0].n_in),
            version: 0,
        })
    }

    /// Assembles a network from explicit layers, validating shapes.
    pub fn from_layers(layers: Vec<DenseLayer>, input: Standardizer) -> Result<Self> {
        let specs: Vec<LayerSpec> = layers.iter().map(|l| l.spec).collect();
        validate_specs(&specs)?;
        for (i, l) in layers.iter().enumerate() {
            let ok = l.weights.dim() == (l.spec.n_in, l.spec.n_out)
                && l.bias.len() == l.spec.n_out
                && l.spec.batch_norm == l.batch_norm.is_some()
                && l.batch_norm.as_ref().is_none_or(|bn| {
                    [&bn.gamma, &bn.beta, &bn.running_mean, &bn.running_var]
                        .iter()
                        .all(|v| v.len() == l.spec.n_out)
                });
            if !ok {
                return Err(Error::Shape(format!("layer {i} tensors disagree with its spec")));
            }
        }
        if input.mean.len() != specs[0].n_in || input.std.len() != specs[0].n_in {
            return Err(Error::Shape("standardizer width differs from input width".into()));
        }
        Ok(Self {
            layers,
            input,
            version: 0,
        })
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [DenseLayer] {
        self.version += 1;
        &mut self.layers
    }

    pub fn specs(&self) -> Vec<LayerSpec> {
        self.layers.iter().map(|l| l.spec).collect()
    }

    pub fn n_inputs(&self) -> usize {
        self.layers[0].spec.n_in
    }

    pub fn n_outputs(&self) -> usize {
        self.layers.last().expect("non-empty").spec.n_out
    }

    pub fn standardizer(&self) -> &Standardizer {
        &self.input
    }

    pub fn set_standardizer(&mut self, s: Standardizer) -> Result<()> {
        if s.mean.len() != self.n_inputs() || s.std.len() != self.n_inputs() {
            return Err(Error::Shape(format!(
                "standardizer has {} features, network takes {}",
                s.mean.len(),
                self.n_inputs()
            )));
        }
        self.version += 1;
        self.input = s;
        Ok(())
    }

    pub fn n_params(&self) -> usize {
        let mut n = 0;
        self.for_each_tensor(|t| n += t.len());
        n
    }

    /// Visits trainable tensors in the same order as [`Gradients::for_each_tensor`].
    pub fn for_each_tensor(&self, mut f: impl FnMut(&[f64])) {
        for l in &self.layers {
            f(l.weights.as_slice().expect("standard layout"));
            f(l.bias.as_slice().expect("standard layout"));
            if let Some(bn) = &l.batch_norm {
                f(bn.gamma.as_slice().expect("standard layout"));
                f(bn.beta.as_slice().expect("standard layout"));
            }
        }
    }

    pub fn for_each_tensor_mut(&mut self, mut f: impl FnMut(&mut [f64])) {
        self.version += 1;
        for l in &mut self.layers {
            f(l.weights.as_slice_mut().expect("standard layout"));
            f(l.bias.as_slice_mut().expect("standard layout"));
            if let Some(bn) = &mut l.batch_norm {
                f(bn.gamma.as_slice_mut().expect("standard layout"));
                f(bn.beta.as_slice_mut().expect("standard layout"));
            }
        }
    }

    /// Trainable tensors in canonical order, each tagged with its layer.
    pub fn tensors_mut(&mut self) -> Vec<(usize, &mut [f64])> {
        self.version += 1;
        let mut out = Vec::new();
        for (l, layer) in self.layers.iter_mut().enumerate() {
            out.push((l, layer.weights.as_slice_mut().expect("standard layout")));
            out.push((l, layer.bias.as_slice_mut().expect("standard layout")));
            if let Some(bn) = &mut layer.batch_norm {
                out.push((l, bn.gamma.as_slice_mut().expect("standard layout")));
                out.push((l, bn.beta.as_slice_mut().expect("standard layout")));
            }
        }
        out
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        self.for_each_tensor(|t| out.extend_from_slice(t));
        out
    }

    pub fn all_finite(&self) -> bool {
        let mut ok = true;
        self.for_each_tensor(|t| ok &= t.iter().all(|v| v.is_finite()));
        ok && self.layers.iter().all(|l| {
            l.batch_norm.as_ref().is_none_or(|bn| {
                bn.running_mean.iter().chain(bn.running_var.iter()).all(|v| v.is_finite())
            })
        })
    }

    /// Inference-mode forward pass: running batch-norm statistics, no dropout.
    pub fn predict(&self, batch: &Array2<f64>) -> Result<Array2<f64>> {
        self.check_input(batch)?;
        let mut a = self.input.apply(batch);
        for (l, layer) in self.layers.iter().enumerate() {
            let mut z = a.dot(&layer.weights);
            match &layer.batch_norm {
                None => z += &layer.bias,
                Some(bn) => {
                    let inv_std = bn.running_var.mapv(|v| 1.0 / (v + BN_EPSILON).sqrt());
                    for mut row in z.axis_iter_mut(Axis(0)) {
                        for j in 0..row.len() {
                            row[j] = bn.gamma[j] * (row[j] - bn.running_mean[j]) * inv_std[j]
                                + bn.beta[j];
                        }
                    }
                }
            }
            a = layer.spec.activation.apply(&z);
            check_finite(&a, l)?;
        }
        Ok(a)
    }

    /// Forward pass in either mode. Training mode returns the cache needed by
    /// [`backward`](Self::backward); dropout masks are drawn from `seed`.
    pub fn forward(&self, batch: &Array2<f64>, mode: Mode) -> Result<(Array2<f64>, Option<ForwardCache>)> {
        match mode {
            Mode::Infer => Ok((self.predict(batch)?, None)),
            Mode::Train { seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let masks = self
                    .layers
                    .iter()
                    .map(|layer| {
                        let rate = layer.spec.dropout_rate;
                        (rate > 0.0).then(|| {
                            let keep = 1.0 - rate;
                            Array2::from_shape_simple_fn((batch.nrows(), layer.spec.n_out), || {
                                if rng.random::<f64>() < keep {
                                    1.0 / keep
                                } else {
                                    0.0
                                }
                            })
                        })
                    })
                    .collect();
                let (out, cache) = self.forward_with_masks(batch, masks)?;
                Ok((out, Some(cache)))
            }
        }
    }

    /// Training-mode forward pass with caller-supplied dropout masks (already
    /// scaled by `1/keep`). `None` entries disable dropout for that layer.
    pub fn forward_with_masks(
        &self,
        batch: &Array2<f64>,
        masks: Vec<Option<Array2<f64>>>,
    ) -> Result<(Array2<f64>, ForwardCache)> {
        self.check_input(batch)?;
        if masks.len() != self.layers.len() {
            return Err(Error::Shape(format!(
                "{} dropout masks for {} layers",
                masks.len(),
                self.layers.len()
            )));
        }
        let m = batch.nrows() as f64;
        let mut a = self.input.apply(batch);
        let mut caches = Vec::with_capacity(self.layers.len());
        for (l, (layer, mask)) in self.layers.iter().zip(masks).enumerate() {
            let mut z = a.dot(&layer.weights);
            let mut normalized = None;
            let mut stats = (None, None);
            match &layer.batch_norm {
                None => z += &layer.bias,
                Some(bn) => {
                    let mean = z.sum_axis(Axis(0)) / m;
                    let var = (&z - &mean).mapv(|v| v * v).sum_axis(Axis(0)) / m;
                    let inv_std = var.mapv(|v| 1.0 / (v + BN_EPSILON).sqrt());
                    let xhat = (&z - &mean) * &inv_std;
                    z = &xhat * &bn.gamma + &bn.beta;
                    normalized = Some((xhat, inv_std));
                    stats = (Some(mean), Some(var));
                }
            }
            let activated = layer.spec.activation.apply(&z);
            let out = match &mask {
                Some(mk) => {
                    if mk.dim() != activated.dim() {
                        return Err(Error::Shape(format!(
                            "dropout mask {:?} for layer {l} output {:?}",
                            mk.dim(),
                            activated.dim()
                        )));
                    }
                    &activated * mk
                }
                None => activated.clone(),
            };
            check_finite(&out, l)?;
            caches.push(LayerCache {
                input: a,
                normalized,
                batch_mean: stats.0,
                batch_var: stats.1,
                pre_activation: z,
                activated,
                mask,
            });
            a = out;
        }
        Ok((
            a,
            ForwardCache {
                layers: caches,
                version: self.version,
            },
        ))
    }

    /// Backpropagates dL/d(output) through a training-mode cache.
    pub fn backward(&self, cache: &ForwardCache, output_grad: &Array2<f64>) -> Result<Gradients> {
        if cache.version != self.version || cache.layers.len() != self.layers.len() {
            return Err(Error::Cache(
                "parameters changed since the forward pass".into(),
            ));
        }
        let last = cache.layers.last().expect("non-empty");
        if output_grad.dim() != last.activated.dim() {
            return Err(Error::Shape(format!(
                "output gradient {:?} vs output {:?}",
                output_grad.dim(),
                last.activated.dim()
            )));
        }
        let mut grad = output_grad.clone();
        let mut layers = Vec::with_capacity(self.layers.len());
        for (layer, c) in self.layers.iter().zip(&cache.layers).rev() {
            if let Some(mask) = &c.mask {
                grad *= mask;
            }
            layer
                .spec
                .activation
                .backward(&c.pre_activation, &c.activated, &mut grad);
            let (dz, bn_grads) = match (&layer.batch_norm, &c.normalized) {
                (Some(bn), Some((xhat, inv_std))) => {
                    let m = grad.nrows() as f64;
                    let dgamma = (&grad * xhat).sum_axis(Axis(0));
                    let dbeta = grad.sum_axis(Axis(0));
                    let dxhat = &grad * &bn.gamma;
                    let sum_dxhat = dxhat.sum_axis(Axis(0));
                    let sum_dxhat_xhat = (&dxhat * xhat).sum_axis(Axis(0));
                    let dz = (&dxhat * m - &sum_dxhat - xhat * &sum_dxhat_xhat) * inv_std / m;
                    (dz, Some((dgamma, dbeta)))
                }
                (None, None) => (grad, None),
                _ => return Err(Error::Cache("batch-norm state mismatch".into())),
            };
            let dw = c.input.t().dot(&dz).as_standard_layout().into_owned();
            let db = if layer.batch_norm.is_some() {
                Array1::zeros(layer.bias.len())
            } else {
                dz.sum_axis(Axis(0))
            };
            grad = dz.dot(&layer.weights.t());
            layers.push(LayerGradients {
                weights: dw,
                bias: db,
                batch_norm: bn_grads,
            });
        }
        layers.reverse();
        Ok(Gradients { layers })
    }

    /// Folds batch statistics from a training-mode pass into the running estimates.
    pub fn update_running_stats(&mut self, cache: &ForwardCache) {
        for (layer, c) in self.layers.iter_mut().zip(&cache.layers) {
            if let (Some(bn), Some(mean), Some(var)) =
                (&mut layer.batch_norm, &c.batch_mean, &c.batch_var)
            {
                bn.running_mean = &bn.running_mean * BN_MOMENTUM + mean * (1.0 - BN_MOMENTUM);
                bn.running_var = &bn.running_var * BN_MOMENTUM + var * (1.0 - BN_MOMENTUM);
            }
        }
        self.version += 1;
    }

    fn check_input(&self, batch: &Array2<f64>) -> Result<()> {
        if batch.ncols() != self.n_inputs() {
            return Err(Error::Shape(format!(
                "batch has {} columns, network takes {}",
                batch.ncols(),
                self.n_inputs()
            )));
        }
        Ok(())
    }
}

fn check_finite(a: &Array2<f64>, layer: usize) -> Result<()> {
    if a.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Numeric {
            layer,
            msg: "activation is NaN or infinite".into(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::loss::Loss;

    fn identity_net(n: usize) -> NetworkParams {
        let spec = LayerSpec::dense(n, n, Activation::Linear);
        let layer = DenseLayer {
            spec,
            weights: Array2::eye(n),
            bias: Array1::zeros(n),
            batch_norm: None,
        };
        NetworkParams::from_layers(vec![layer], Standardizer::identity(n)).unwrap()
    }

    #[test]
    fn identity_network_is_identity() {
        let net = identity_net(3);
        let x = Array2::from_shape_vec((2, 3), vec![1.0, -2.0, 3.5, 0.0, 7.0, -1.0]).unwrap();
        assert_eq!(net.predict(&x).unwrap(), x);
    }

    #[test]
    fn relu_layer_on_mixed_signs() {
        let layer = DenseLayer {
            spec: LayerSpec::dense(2, 2, Activation::Relu),
            weights: Array2::eye(2),
            bias: Array1::zeros(2),
            batch_norm: None,
        };
        let net = NetworkParams::from_layers(vec![layer], Standardizer::identity(2)).unwrap();
        let x = Array2::from_shape_vec((1, 2), vec![-3.0, 5.0]).unwrap();
        assert_eq!(net.predict(&x).unwrap().row(0).to_vec(), vec![0.0, 5.0]);
    }

    #[test]
    fn keep_all_mask_matches_inference() {
        let specs = mlp_specs(4, &[6, 5], 2, Activation::Linear, false, 0.1);
        let net = NetworkParams::new(&specs, 3).unwrap();
        let x = Array2::from_shape_fn((5, 4), |(i, j)| (i as f64) - 0.7 * j as f64);
        let masks = net
            .layers()
            .iter()
            .map(|l| (l.spec.dropout_rate > 0.0).then(|| Array2::ones((5, l.spec.n_out))))
            .collect();
        let (train_out, _) = net.forward_with_masks(&x, masks).unwrap();
        assert_eq!(train_out, net.predict(&x).unwrap());
    }

    #[test]
    fn dropout_is_seeded() {
        let specs = mlp_specs(3, &[8], 1, Activation::Linear, false, 0.5);
        let net = NetworkParams::new(&specs, 1).unwrap();
        let x = Array2::from_elem((4, 3), 1.0);
        let a = net.forward(&x, Mode::Train { seed: 9 }).unwrap().0;
        let b = net.forward(&x, Mode::Train { seed: 9 }).unwrap().0;
        let c = net.forward(&x, Mode::Train { seed: 10 }).unwrap().0;
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn zero_output_gradient_gives_zero_gradients() {
        let specs = mlp_specs(3, &[4, 4], 2, Activation::Softmax, true, 0.0);
        let net = NetworkParams::new(&specs, 5).unwrap();
        let x = Array2::from_shape_fn((6, 3), |(i, j)| ((i * 3 + j) as f64).sin());
        let (out, cache) = net.forward(&x, Mode::Train { seed: 0 }).unwrap();
        let g = net
            .backward(&cache.unwrap(), &Array2::zeros(out.dim()))
            .unwrap();
        assert_eq!(g.max_abs(), 0.0);
    }

    #[test]
    fn duplicated_rows_keep_the_mean_gradient() {
        let specs = mlp_specs(3, &[5], 1, Activation::Linear, false, 0.0);
        let net = NetworkParams::new(&specs, 11).unwrap();
        let one = Array2::from_shape_vec((1, 3), vec![0.3, -1.2, 2.0]).unwrap();
        let two = ndarray::concatenate![Axis(0), one, one];
        let grad_of = |x: &Array2<f64>| {
            let target = Array2::from_elem((x.nrows(), 1), 0.5);
            let (out, cache) = net.forward(x, Mode::Train { seed: 0 }).unwrap();
            let dl = Loss::Lp(2).gradient(&out, &target).unwrap();
            net.backward(&cache.unwrap(), &dl).unwrap().flatten()
        };
        for (a, b) in grad_of(&one).iter().zip(grad_of(&two)) {
            assert!((a - b).abs() <= 1e-14 * a.abs().max(1.0));
        }
    }

    #[test]
    fn stale_cache_is_rejected() {
        let specs = mlp_specs(2, &[3], 1, Activation::Linear, false, 0.0);
        let mut net = NetworkParams::new(&specs, 0).unwrap();
        let x = Array2::from_elem((2, 2), 1.0);
        let (out, cache) = net.forward(&x, Mode::Train { seed: 0 }).unwrap();
        net.layers_mut()[0].weights[(0, 0)] += 1.0;
        assert!(matches!(
            net.backward(&cache.unwrap(), &Array2::zeros(out.dim())),
            Err(Error::Cache(_))
        ));
    }

    #[test]
    fn spec_validation() {
        let bad = vec![
            LayerSpec::dense(2, 3, Activation::Softmax),
            LayerSpec::dense(3, 1, Activation::Linear),
        ];
        assert!(NetworkParams::new(&bad, 0).is_err());
        let bad = vec![
            LayerSpec::dense(2, 3, Activation::Relu),
            LayerSpec::dense(4, 1, Activation::Linear),
        ];
        assert!(NetworkParams::new(&bad, 0).is_err());
        let bad = vec![LayerSpec::dense(2, 3, Activation::Relu).with_dropout(1.0)];
        assert!(NetworkParams::new(&bad, 0).is_err());
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let net = identity_net(3);
        assert!(matches!(
            net.predict(&Array2::zeros((1, 2))),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn non_finite_activation_names_layer() {
        let mut net = identity_net(2);
        net.layers_mut()[0].weights[(0, 0)] = f64::INFINITY;
        let x = Array2::from_elem((1, 2), 1.0);
        assert!(matches!(
            net.predict(&x),
            Err(Error::Numeric { layer: 0, .. })
        ));
    }

    #[test]
    fn relu_output_is_non_negative() {
        let specs = mlp_specs(4, &[16, 16], 1, Activation::Relu, true, 0.0);
        let net = NetworkParams::new(&specs, 2).unwrap();
        let x = Array2::from_shape_fn((50, 4), |(i, j)| ((i * 7 + j * 3) as f64).cos() * 10.0);
        assert!(net.predict(&x).unwrap().iter().all(|&v| v >= 0.0));
    }
}
