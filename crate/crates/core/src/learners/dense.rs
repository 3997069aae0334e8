//! Fully connected classifier with hand-derived backpropagation.

use std::collections::BTreeMap;
use std::ops::Range;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Tanh,
    Relu,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Relu => z.max(0.0),
        }
    }

    /// Derivative expressed through the pre-activation `z` and output `a`.
    fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - a * a,
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    /// `out x in`
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

/// Hidden layers use `activation`; the output layer is linear logits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseNet {
    pub layers: Vec<Layer>,
    pub activation: Activation,
}

/// Per-parameter gradients, shape-congruent with the owning network.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientBundle {
    pub layers: Vec<Layer>,
}

impl GradientBundle {
    pub fn zeros_like(net: &DenseNet) -> Self {
        GradientBundle {
            layers: net
                .layers
                .iter()
                .map(|l| Layer {
                    weight: Array2::zeros(l.weight.raw_dim()),
                    bias: Array1::zeros(l.bias.raw_dim()),
                })
                .collect(),
        }
    }

    pub fn flat(&self) -> Vec<f64> {
        flatten(&self.layers)
    }

    pub fn norm(&self) -> f64 {
        self.flat().iter().map(|g| g * g).sum::<f64>().sqrt()
    }

    /// `self += scale * other`
    pub fn add_scaled(&mut self, other: &GradientBundle, scale: f64) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.weight.scaled_add(scale, &b.weight);
            a.bias.scaled_add(scale, &b.bias);
        }
    }

    /// Adds a flat vector laid out like [`DenseNet::params_flat`].
    pub fn add_flat(&mut self, flat: &[f64]) {
        let mut i = 0;
        for l in &mut self.layers {
            for w in l.weight.iter_mut().chain(l.bias.iter_mut()) {
                *w += flat[i];
                i += 1;
            }
        }
    }
}

fn flatten(layers: &[Layer]) -> Vec<f64> {
    layers
        .iter()
        .flat_map(|l| l.weight.iter().chain(l.bias.iter()).copied())
        .collect()
}

struct Cache {
    /// Input followed by every layer's post-activation (logits last).
    activations: Vec<Array2<f64>>,
    pre: Vec<Array2<f64>>,
}

impl DenseNet {
    /// Uniform init in `±1/sqrt(fan_in)`.
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], activation: Activation, rng: &mut R) -> Result<Self> {
        Self::check_sizes(sizes)?;
        let layers = sizes
            .windows(2)
            .map(|w| {
                let bound = 1.0 / (w[0] as f64).sqrt();
                let dist = Uniform::new_inclusive(-bound, bound).expect("valid bound");
                Layer {
                    weight: Array2::from_shape_simple_fn((w[1], w[0]), || dist.sample(rng)),
                    bias: Array1::from_shape_simple_fn(w[1], || dist.sample(rng)),
                }
            })
            .collect();
        Ok(DenseNet { layers, activation })
    }

    pub fn zeros(sizes: &[usize], activation: Activation) -> Result<Self> {
        Self::check_sizes(sizes)?;
        let layers = sizes
            .windows(2)
            .map(|w| Layer {
                weight: Array2::zeros((w[1], w[0])),
                bias: Array1::zeros(w[1]),
            })
            .collect();
        Ok(DenseNet { layers, activation })
    }

    fn check_sizes(sizes: &[usize]) -> Result<()> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::Shape(format!("invalid layer sizes {sizes:?}")));
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weight.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("at least one layer").weight.nrows()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![self.input_dim()];
        s.extend(self.layers.iter().map(|l| l.weight.nrows()));
        s
    }

    fn forward_cache(&self, x: ArrayView2<f64>) -> Result<Cache> {
        if x.ncols() != self.input_dim() {
            return Err(Error::Shape(format!(
                "input has {} features, network expects {}",
                x.ncols(),
                self.input_dim()
            )));
        }
        let mut activations = vec![x.to_owned()];
        let mut pre = Vec::with_capacity(self.layers.len());
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let z = activations[i].dot(&layer.weight.t()) + &layer.bias;
            let a = if i == last { z.clone() } else { z.mapv(|v| self.activation.apply(v)) };
            pre.push(z);
            activations.push(a);
        }
        Ok(Cache { activations, pre })
    }

    /// Logits for a batch (`n x in` -> `n x out`).
    pub fn forward(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        Ok(self.forward_cache(x)?.activations.pop().expect("logits"))
    }

    pub fn forward_one(&self, x: &[f64]) -> Result<Vec<f64>> {
        let view = ArrayView2::from_shape((1, x.len()), x).map_err(|e| Error::Shape(e.to_string()))?;
        Ok(self.forward(view)?.row(0).to_vec())
    }

    /// Mean softmax cross-entropy and its gradient.
    ///
    /// `heads`, when given, restricts sample `i`'s softmax to the logit range
    /// `heads[i]`; labels are absolute logit indices inside that range.
    pub fn backward_ce(
        &self,
        x: ArrayView2<f64>,
        labels: &[usize],
        heads: Option<&[Range<usize>]>,
    ) -> Result<(f64, GradientBundle)> {
        let n = x.nrows();
        if labels.len() != n || heads.is_some_and(|h| h.len() != n) {
            return Err(Error::Shape("labels/heads do not match batch size".into()));
        }
        if n == 0 {
            return Err(Error::Shape("empty batch".into()));
        }
        let cache = self.forward_cache(x)?;
        let logits = cache.activations.last().expect("logits");
        let out = self.output_dim();
        let mut delta = Array2::<f64>::zeros((n, out));
        let mut loss = 0.0;
        for i in 0..n {
            let range = heads.map_or(0..out, |h| h[i].clone());
            if range.end > out || range.is_empty() {
                return Err(Error::Shape(format!("head {range:?} outside {out} logits")));
            }
            let y = labels[i];
            if !range.contains(&y) {
                return Err(Error::LabelOutOfRange {
                    label: y,
                    start: range.start,
                    end: range.end,
                });
            }
            let row: Vec<f64> = logits.row(i).iter().copied().collect();
            let probs = softmax(&row[range.clone()]);
            loss -= probs[y - range.start].max(f64::MIN_POSITIVE).ln();
            for (k, p) in range.clone().zip(&probs) {
                delta[[i, k]] = (p - if k == y { 1.0 } else { 0.0 }) / n as f64;
            }
        }
        let grads = self.backprop(&cache, delta);
        Ok((loss / n as f64, grads))
    }

    fn backprop(&self, cache: &Cache, mut delta: Array2<f64>) -> GradientBundle {
        let mut layers = Vec::with_capacity(self.layers.len());
        for l in (0..self.layers.len()).rev() {
            let a_prev = &cache.activations[l];
            let weight = delta.t().dot(a_prev);
            let bias = delta.sum_axis(Axis(0));
            layers.push(Layer { weight, bias });
            if l > 0 {
                let mut next = delta.dot(&self.layers[l].weight);
                let (z, a) = (&cache.pre[l - 1], &cache.activations[l]);
                ndarray::Zip::from(&mut next)
                    .and(z)
                    .and(a)
                    .for_each(|d, &z, &a| *d *= self.activation.derivative(z, a));
                delta = next;
            }
        }
        layers.reverse();
        GradientBundle { layers }
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    /// Layer by layer, weights (row-major) then biases.
    pub fn params_flat(&self) -> Vec<f64> {
        flatten(&self.layers)
    }

    pub fn set_params_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_params() {
            return Err(Error::Shape(format!(
                "expected {} parameters, got {}",
                self.num_params(),
                flat.len()
            )));
        }
        let mut i = 0;
        for l in &mut self.layers {
            for w in l.weight.iter_mut().chain(l.bias.iter_mut()) {
                *w = flat[i];
                i += 1;
            }
        }
        Ok(())
    }

    pub fn to_named_tensors(&self) -> BTreeMap<String, NamedTensor> {
        let mut out = BTreeMap::new();
        for (i, l) in self.layers.iter().enumerate() {
            out.insert(
                format!("layer{i}.weight"),
                NamedTensor {
                    shape: vec![l.weight.nrows(), l.weight.ncols()],
                    values: l.weight.iter().copied().collect(),
                },
            );
            out.insert(
                format!("layer{i}.bias"),
                NamedTensor {
                    shape: vec![l.bias.len()],
                    values: l.bias.to_vec(),
                },
            );
        }
        out
    }

    pub fn from_named_tensors(tensors: &BTreeMap<String, NamedTensor>, activation: Activation) -> Result<Self> {
        let mut layers = Vec::new();
        for i in 0.. {
            let (Some(w), Some(b)) = (
                tensors.get(&format!("layer{i}.weight")),
                tensors.get(&format!("layer{i}.bias")),
            ) else {
                break;
            };
            let [rows, cols] = w.shape[..] else {
                return Err(Error::Shape(format!("layer{i}.weight must be 2-d")));
            };
            let weight = Array2::from_shape_vec((rows, cols), w.values.clone())
                .map_err(|e| Error::Shape(format!("layer{i}.weight: {e}")))?;
            if b.shape != [rows] || b.values.len() != rows {
                return Err(Error::Shape(format!("layer{i}.bias must have shape [{rows}]")));
            }
            layers.push(Layer {
                weight,
                bias: Array1::from(b.values.clone()),
            });
        }
        if layers.is_empty() {
            return Err(Error::Shape("no layers found".into()));
        }
        for (i, w) in layers.windows(2).enumerate() {
            if w[0].weight.nrows() != w[1].weight.ncols() {
                return Err(Error::Shape(format!("layer{} does not chain into layer{}", i, i + 1)));
            }
        }
        Ok(DenseNet { layers, activation })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedTensor {
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// `theta <- theta - lr * g`.
pub fn sgd_step(net: &mut DenseNet, grads: &GradientBundle, lr: f64) -> Result<()> {
    if !(lr >= 0.0 && lr.is_finite()) {
        return Err(Error::malformed("lr", format!("learning rate must be finite and >= 0, got {lr}")));
    }
    if grads.layers.len() != net.layers.len() {
        return Err(Error::Shape("gradient bundle does not match network".into()));
    }
    for (l, g) in net.layers.iter().zip(&grads.layers) {
        if l.weight.raw_dim() != g.weight.raw_dim() || l.bias.raw_dim() != g.bias.raw_dim() {
            return Err(Error::Shape("gradient bundle does not match network".into()));
        }
        if g.weight.iter().chain(g.bias.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("gradient".into()));
        }
    }
    for (l, g) in net.layers.iter_mut().zip(&grads.layers) {
        l.weight.scaled_add(-lr, &g.weight);
        l.bias.scaled_add(-lr, &g.bias);
    }
    Ok(())
}

/// Diagonal empirical Fisher: mean over samples of the squared gradient of
/// `log p(y_hat | x)`, with `y_hat` the model's argmax inside the sample's head.
pub fn fisher_diagonal(net: &DenseNet, x: ArrayView2<f64>, heads: Option<&[Range<usize>]>) -> Result<Vec<f64>> {
    let n = x.nrows();
    if n == 0 {
        return Err(Error::Shape("fisher needs a non-empty batch".into()));
    }
    let logits = net.forward(x)?;
    let out = net.output_dim();
    let mut fisher = vec![0.0; net.num_params()];
    for i in 0..n {
        let range = heads.map_or(0..out, |h| h[i].clone());
        let row: Vec<f64> = logits.row(i).iter().copied().collect();
        let y_hat = range.start + super::argmax(&row[range.clone()]);
        let xi = x.slice(ndarray::s![i..i + 1, ..]);
        let (_, g) = net.backward_ce(xi, &[y_hat], Some(std::slice::from_ref(&range)))?;
        for (f, gi) in fisher.iter_mut().zip(g.flat()) {
            *f += gi * gi;
        }
    }
    for f in &mut fisher {
        *f /= n as f64;
    }
    Ok(fisher)
}
