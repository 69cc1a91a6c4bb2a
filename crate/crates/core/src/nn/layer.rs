use std::sync::atomic::{AtomicU64, Ordering};

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::rng::Rng;
use crate::{Error, Result};

static GENERATION: AtomicU64 = AtomicU64::new(1);

fn next_generation() -> u64 {
    GENERATION.fetch_add(1, Ordering::Relaxed)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Sigmoid,
    Identity,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Sigmoid => 1.0 / (1.0 + (-z).exp()),
            Activation::Identity => z,
        }
    }

    /// Derivative expressed through the pre-activation `z`.
    fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => {
                let s = 1.0 / (1.0 + (-z).exp());
                s * (1.0 - s)
            }
            Activation::Identity => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

/// `y = act(W x + b)` with `W` of shape `out x in`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
    pub activation: Activation,
}

impl DenseLayer {
    pub fn new(weights: Array2<f64>, bias: Array1<f64>, activation: Activation) -> Result<Self> {
        if weights.nrows() != bias.len() {
            return Err(Error::Shape(format!(
                "weights are {}x{} but bias has {} entries",
                weights.nrows(),
                weights.ncols(),
                bias.len()
            )));
        }
        if weights.iter().chain(bias.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("layer parameters".into()));
        }
        Ok(Self {
            weights: weights.as_standard_layout().into_owned(),
            bias,
            activation,
        })
    }

    /// Glorot-uniform weights, zero bias.
    pub fn glorot(inputs: usize, outputs: usize, activation: Activation, rng: &mut Rng) -> Self {
        let limit = (6.0 / (inputs + outputs) as f64).sqrt();
        let weights = Array2::from_shape_fn((outputs, inputs), |_| rng.random_range(-limit..limit));
        Self {
            weights,
            bias: Array1::zeros(outputs),
            activation,
        }
    }

    pub fn zeros(inputs: usize, outputs: usize, activation: Activation) -> Self {
        Self {
            weights: Array2::zeros((outputs, inputs)),
            bias: Array1::zeros(outputs),
            activation,
        }
    }

    pub fn inputs(&self) -> usize {
        self.weights.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.weights.nrows()
    }

    /// Pre-activation `X W^T + b` for a batch.
    pub fn affine(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let mut z = x.dot(&self.weights.t());
        z += &self.bias;
        z
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrads {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

/// State recorded by [`DenseStack::forward`] and consumed by [`DenseStack::backward`].
#[derive(Debug, Clone)]
pub struct ForwardCache {
    generation: u64,
    inputs: Vec<Array2<f64>>,
    pre: Vec<Array2<f64>>,
    masks: Vec<Option<Array2<f64>>>,
}

/// A chain of dense layers. Inverted dropout, when active, follows every
/// layer except the last.
#[derive(Debug, Clone)]
pub struct DenseStack {
    layers: Vec<DenseLayer>,
    generation: u64,
}

/// Compares parameters only; the cache generation is bookkeeping.
impl PartialEq for DenseStack {
    fn eq(&self, other: &Self) -> bool {
        self.layers == other.layers
    }
}

impl DenseStack {
    pub fn new(layers: Vec<DenseLayer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Invalid("a stack needs at least one layer".into()));
        }
        for pair in layers.windows(2) {
            if pair[0].outputs() != pair[1].inputs() {
                return Err(Error::Shape(format!(
                    "layer emits {} values but the next expects {}",
                    pair[0].outputs(),
                    pair[1].inputs()
                )));
            }
        }
        Ok(Self {
            layers,
            generation: next_generation(),
        })
    }

    /// Glorot-initialized stack through `dims` (`dims[0]` inputs, then one entry per layer).
    pub fn glorot(dims: &[usize], activations: &[Activation], rng: &mut Rng) -> Result<Self> {
        if dims.len() != activations.len() + 1 {
            return Err(Error::Shape("need one activation per layer".into()));
        }
        let layers = dims
            .windows(2)
            .zip(activations)
            .map(|(d, &a)| DenseLayer::glorot(d[0], d[1], a, rng))
            .collect();
        Self::new(layers)
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    /// Mutable access; invalidates outstanding caches.
    pub fn layers_mut(&mut self) -> &mut [DenseLayer] {
        self.generation = next_generation();
        &mut self.layers
    }

    pub fn inputs(&self) -> usize {
        self.layers[0].inputs()
    }

    pub fn outputs(&self) -> usize {
        self.layers[self.layers.len() - 1].outputs()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(DenseLayer::param_count).sum()
    }

    /// Parameter slices in `(W0, b0, W1, b1, ...)` order; invalidates outstanding caches.
    pub fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        self.generation = next_generation();
        let mut out = Vec::with_capacity(2 * self.layers.len());
        for l in &mut self.layers {
            out.push(l.weights.as_slice_mut().expect("standard layout"));
            out.push(l.bias.as_slice_mut().expect("contiguous"));
        }
        out
    }

    pub fn param_lens(&self) -> Vec<usize> {
        self.layers.iter().flat_map(|l| [l.weights.len(), l.bias.len()]).collect()
    }

    pub fn forward(
        &self,
        x: ArrayView2<f64>,
        mode: Mode,
        dropout_rate: f64,
        rng: &mut Rng,
    ) -> Result<(Array2<f64>, ForwardCache)> {
        if x.ncols() != self.inputs() {
            return Err(Error::Shape(format!("input has {} features, stack expects {}", x.ncols(), self.inputs())));
        }
        if !(0.0..1.0).contains(&dropout_rate) {
            return Err(Error::OutOfRange(format!("dropout rate {dropout_rate}")));
        }
        let n_layers = self.layers.len();
        let mut cache = ForwardCache {
            generation: self.generation,
            inputs: Vec::with_capacity(n_layers),
            pre: Vec::with_capacity(n_layers),
            masks: Vec::with_capacity(n_layers),
        };
        let mut a = x.to_owned();
        for (i, layer) in self.layers.iter().enumerate() {
            let z = layer.affine(a.view());
            let mut out = z.mapv(|v| layer.activation.apply(v));
            let mask = if mode == Mode::Train && dropout_rate > 0.0 && i + 1 < n_layers {
                let keep = 1.0 / (1.0 - dropout_rate);
                let m = Array2::from_shape_fn(out.raw_dim(), |_| {
                    if rng.random::<f64>() >= dropout_rate {
                        keep
                    } else {
                        0.0
                    }
                });
                out *= &m;
                Some(m)
            } else {
                None
            };
            cache.inputs.push(a);
            cache.pre.push(z);
            cache.masks.push(mask);
            a = out;
        }
        if a.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("network output".into()));
        }
        Ok((a, cache))
    }

    /// Forward pass for one input vector.
    pub fn forward_one(&self, x: &[f64], mode: Mode, dropout_rate: f64, rng: &mut Rng) -> Result<(Vec<f64>, ForwardCache)> {
        let view = ArrayView2::from_shape((1, x.len()), x).map_err(|e| Error::Shape(e.to_string()))?;
        let (out, cache) = self.forward(view, mode, dropout_rate, rng)?;
        Ok((out.into_raw_vec_and_offset().0, cache))
    }

    /// Inference-mode forward pass, no cache.
    pub fn infer(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.inputs() {
            return Err(Error::Shape(format!("input has {} features, stack expects {}", x.ncols(), self.inputs())));
        }
        let mut a = x.to_owned();
        for layer in &self.layers {
            a = layer.affine(a.view()).mapv(|v| layer.activation.apply(v));
        }
        Ok(a)
    }

    /// Reverse-mode gradients of a scalar loss given `dL/d(output)`.
    /// Returns per-layer gradients and `dL/d(input)`.
    pub fn backward(&self, cache: &ForwardCache, output_grad: ArrayView2<f64>) -> Result<(Vec<LayerGrads>, Array2<f64>)> {
        if cache.generation != self.generation || cache.pre.len() != self.layers.len() {
            return Err(Error::StaleCache);
        }
        let last = &cache.pre[cache.pre.len() - 1];
        if output_grad.dim() != last.dim() {
            return Err(Error::Shape(format!(
                "output gradient is {:?}, forward produced {:?}",
                output_grad.dim(),
                last.dim()
            )));
        }
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut g = output_grad.to_owned();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            if let Some(mask) = &cache.masks[i] {
                g *= mask;
            }
            let z = &cache.pre[i];
            if layer.activation != Activation::Identity {
                g.zip_mut_with(z, |gv, &zv| *gv *= layer.activation.derivative(zv));
            }
            let dw = g.t().dot(&cache.inputs[i]);
            let db = g.sum_axis(Axis(0));
            let prev = g.dot(&layer.weights);
            grads.push(LayerGrads { weights: dw, bias: db });
            g = prev;
        }
        grads.reverse();
        Ok((grads, g))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use ndarray::array;

    #[test]
    fn identity_layer_passes_input() {
        let layer = DenseLayer::new(Array2::eye(3), Array1::zeros(3), Activation::Identity).unwrap();
        let stack = DenseStack::new(vec![layer]).unwrap();
        let mut r = rng::stream(0, "t");
        let (out, _) = stack.forward_one(&[1.0, -2.0, 3.5], Mode::Infer, 0.0, &mut r).unwrap();
        assert_eq!(out, vec![1.0, -2.0, 3.5]);
    }

    #[test]
    fn relu_zeroes_negative_preactivations() {
        let layer = DenseLayer::new(-Array2::eye(2), array![-1.0, -1.0], Activation::Relu).unwrap();
        let stack = DenseStack::new(vec![layer]).unwrap();
        let mut r = rng::stream(0, "t");
        let (out, _) = stack.forward_one(&[0.5, 2.0], Mode::Infer, 0.0, &mut r).unwrap();
        assert_eq!(out, vec![0.0, 0.0]);
    }

    #[test]
    fn zero_dropout_train_equals_infer() {
        let mut r = rng::stream(1, "init");
        let stack = DenseStack::glorot(&[4, 8, 3], &[Activation::Relu, Activation::Identity], &mut r).unwrap();
        let x = Array2::from_shape_fn((5, 4), |(i, j)| (i as f64 - j as f64) * 0.3);
        let (train, _) = stack.forward(x.view(), Mode::Train, 0.0, &mut r).unwrap();
        assert_eq!(train, stack.infer(x.view()).unwrap());
    }

    #[test]
    fn shape_and_stale_cache_errors() {
        let mut r = rng::stream(2, "init");
        let mut stack = DenseStack::glorot(&[3, 4, 2], &[Activation::Sigmoid, Activation::Identity], &mut r).unwrap();
        assert!(matches!(
            stack.forward(Array2::zeros((1, 5)).view(), Mode::Infer, 0.0, &mut r),
            Err(Error::Shape(_))
        ));
        let (out, cache) = stack.forward(Array2::ones((2, 3)).view(), Mode::Train, 0.0, &mut r).unwrap();
        assert!(stack.backward(&cache, out.view()).is_ok());
        stack.layers_mut()[0].bias[0] = 1.0;
        assert!(matches!(stack.backward(&cache, out.view()), Err(Error::StaleCache)));
        let bad = vec![DenseLayer::zeros(3, 4, Activation::Relu), DenseLayer::zeros(5, 2, Activation::Identity)];
        assert!(DenseStack::new(bad).is_err());
    }

    #[test]
    fn zero_output_grad_gives_zero_gradients() {
        let mut r = rng::stream(3, "init");
        let stack = DenseStack::glorot(&[3, 5, 2], &[Activation::Relu, Activation::Identity], &mut r).unwrap();
        let x = Array2::from_shape_fn((4, 3), |(i, j)| (i * 3 + j) as f64 * 0.1 - 0.5);
        let (out, cache) = stack.forward(x.view(), Mode::Train, 0.3, &mut r).unwrap();
        let (grads, _) = stack.backward(&cache, Array2::zeros(out.raw_dim()).view()).unwrap();
        assert!(grads.iter().all(|g| g.weights.iter().chain(g.bias.iter()).all(|&v| v == 0.0)));
    }

    #[test]
    fn inverted_dropout_preserves_expectation() {
        // 2 x 1 x 1 stack; activations of the hidden unit are dropped and rescaled
        let hidden = DenseLayer::new(array![[1.0]], array![0.0], Activation::Identity).unwrap();
        let head = DenseLayer::new(array![[1.0]], array![0.0], Activation::Identity).unwrap();
        let stack = DenseStack::new(vec![hidden, head]).unwrap();
        let mut r = rng::stream(4, "dropout");
        let x = Array2::from_elem((100_000, 1), 2.0);
        let (out, _) = stack.forward(x.view(), Mode::Train, 0.3, &mut r).unwrap();
        let mean = out.mean().unwrap();
        assert!((mean - 2.0).abs() / 2.0 < 0.01, "mean {mean}");
    }
}
