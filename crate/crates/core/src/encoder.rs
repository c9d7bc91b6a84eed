//! Multilayer perceptron hash-function streams.
//!
//! Hidden layers use `tanh`; the output layer is affine and emits raw scores.
//! The relaxation `tanh` of the outputs belongs to the objective.

use std::sync::atomic::{AtomicU64, Ordering};

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{shape_err, Error, Result};

static NEXT_ENCODER_ID: AtomicU64 = AtomicU64::new(1);

fn fresh_id() -> u64 {
    NEXT_ENCODER_ID.fetch_add(1, Ordering::Relaxed)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    /// `out × in`
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

#[derive(Debug)]
pub struct MlpEncoder {
    dims: Vec<usize>,
    layers: Vec<Layer>,
    id: u64,
    version: u64,
}

impl Clone for MlpEncoder {
    fn clone(&self) -> Self {
        Self {
            dims: self.dims.clone(),
            layers: self.layers.clone(),
            id: fresh_id(),
            version: 0,
        }
    }
}

impl PartialEq for MlpEncoder {
    fn eq(&self, other: &Self) -> bool {
        self.dims == other.dims && self.layers == other.layers
    }
}

/// Per-layer activations retained by [`MlpEncoder::forward`].
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// `inputs[l]` is the input of layer `l`; `inputs[0]` is the batch itself.
    inputs: Vec<Array2<f64>>,
    encoder_id: u64,
    encoder_version: u64,
}

impl ForwardCache {
    pub fn batch_size(&self) -> usize {
        self.inputs[0].nrows()
    }
}

/// Gradients with the same layout as the encoder's parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderGrads {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

impl EncoderGrads {
    pub fn zeros_like(enc: &MlpEncoder) -> Self {
        Self {
            weights: enc.layers.iter().map(|l| Array2::zeros(l.weight.raw_dim())).collect(),
            biases: enc.layers.iter().map(|l| Array1::zeros(l.bias.raw_dim())).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().all(|w| w.iter().all(|v| v.is_finite()))
            && self.biases.iter().all(|b| b.iter().all(|v| v.is_finite()))
    }

    pub fn max_abs(&self) -> f64 {
        self.weights
            .iter()
            .flat_map(|w| w.iter())
            .chain(self.biases.iter().flat_map(|b| b.iter()))
            .fold(0.0, |m, v| m.max(v.abs()))
    }
}

impl MlpEncoder {
    /// Random encoder for `dims = [d, h1, ..., k]`.
    ///
    /// Weights are uniform in `[-1/√fan_in, 1/√fan_in]`; biases start at zero.
    pub fn init(dims: &[usize], seed: u64) -> Result<Self> {
        validate_dims(dims)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = dims
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let scale = 1.0 / (fan_in as f64).sqrt();
                let weight =
                    Array2::from_shape_fn((fan_out, fan_in), |_| rng.random_range(-scale..=scale));
                Layer {
                    weight,
                    bias: Array1::zeros(fan_out),
                }
            })
            .collect();
        Ok(Self {
            dims: dims.to_vec(),
            layers,
            id: fresh_id(),
            version: 0,
        })
    }

    /// Encoder with explicitly given parameters.
    pub fn from_layers(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(shape_err("encoder needs at least one layer"));
        }
        let mut dims = vec![layers[0].weight.ncols()];
        for (l, layer) in layers.iter().enumerate() {
            let (out, inp) = layer.weight.dim();
            if inp != *dims.last().unwrap() {
                return Err(shape_err(format!(
                    "layer {l} expects {inp} inputs but previous layer emits {}",
                    dims.last().unwrap()
                )));
            }
            if layer.bias.len() != out {
                return Err(shape_err(format!(
                    "layer {l} has {} biases for {out} outputs",
                    layer.bias.len()
                )));
            }
            dims.push(out);
        }
        validate_dims(&dims)?;
        Ok(Self {
            dims,
            layers,
            id: fresh_id(),
            version: 0,
        })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.dims.last().unwrap()
    }

    /// Raw outputs for a batch `m × d`, plus the activations needed by [`backward`](Self::backward).
    pub fn forward(&self, x: ArrayView2<'_, f64>) -> Result<(Array2<f64>, ForwardCache)> {
        self.check_input(x)?;
        let last = self.layers.len() - 1;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut a = x.to_owned();
        for (l, layer) in self.layers.iter().enumerate() {
            let mut z = a.dot(&layer.weight.t());
            z += &layer.bias;
            if l < last {
                z.mapv_inplace(f64::tanh);
            }
            inputs.push(std::mem::replace(&mut a, z));
        }
        let cache = ForwardCache {
            inputs,
            encoder_id: self.id,
            encoder_version: self.version,
        };
        Ok((a, cache))
    }

    /// Raw outputs without keeping activations.
    pub fn infer(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        self.check_input(x)?;
        let last = self.layers.len() - 1;
        let mut a = x.to_owned();
        for (l, layer) in self.layers.iter().enumerate() {
            let mut z = a.dot(&layer.weight.t());
            z += &layer.bias;
            if l < last {
                z.mapv_inplace(f64::tanh);
            }
            a = z;
        }
        Ok(a)
    }

    /// Parameter gradients given `∂L/∂out` for the batch held in `cache`.
    pub fn backward(&self, cache: &ForwardCache, d_out: ArrayView2<'_, f64>) -> Result<EncoderGrads> {
        if cache.encoder_id != self.id || cache.encoder_version != self.version {
            return Err(Error::State(
                "forward cache does not belong to the current encoder parameters".into(),
            ));
        }
        let m = cache.batch_size();
        if d_out.dim() != (m, self.output_dim()) {
            return Err(shape_err(format!(
                "upstream gradient is {:?}, expected ({m}, {})",
                d_out.dim(),
                self.output_dim()
            )));
        }
        let n_layers = self.layers.len();
        let mut weights = vec![Array2::zeros((0, 0)); n_layers];
        let mut biases = vec![Array1::zeros(0); n_layers];
        let mut delta = d_out.to_owned();
        for l in (0..n_layers).rev() {
            let input = &cache.inputs[l];
            weights[l] = delta.t().dot(input);
            biases[l] = delta.sum_axis(Axis(0));
            if l > 0 {
                let mut back = delta.dot(&self.layers[l].weight);
                // input of layer l is tanh output of layer l-1
                back.zip_mut_with(input, |g, &a| *g *= 1.0 - a * a);
                delta = back;
            }
        }
        Ok(EncoderGrads { weights, biases })
    }

    /// `W ← W − lr·dW` for every layer. Non-finite gradients abort the step untouched.
    pub fn sgd_step(&mut self, grads: &EncoderGrads, lr: f64) -> Result<()> {
        if !(lr >= 0.0 && lr.is_finite()) {
            return Err(Error::Domain(format!("learning rate must be finite and >= 0, got {lr}")));
        }
        if grads.weights.len() != self.layers.len() || grads.biases.len() != self.layers.len() {
            return Err(shape_err("gradient layer count does not match encoder"));
        }
        for (l, layer) in self.layers.iter().enumerate() {
            if grads.weights[l].dim() != layer.weight.dim() || grads.biases[l].dim() != layer.bias.dim() {
                return Err(shape_err(format!("gradient shape mismatch at layer {l}")));
            }
        }
        if !grads.is_finite() {
            return Err(Error::Numeric("non-finite encoder gradient".into()));
        }
        for (l, layer) in self.layers.iter_mut().enumerate() {
            layer.weight.scaled_add(-lr, &grads.weights[l]);
            layer.bias.scaled_add(-lr, &grads.biases[l]);
        }
        self.version += 1;
        Ok(())
    }

    fn check_input(&self, x: ArrayView2<'_, f64>) -> Result<()> {
        if x.ncols() != self.input_dim() {
            return Err(shape_err(format!(
                "input has {} features, encoder expects {}",
                x.ncols(),
                self.input_dim()
            )));
        }
        Ok(())
    }
}

fn validate_dims(dims: &[usize]) -> Result<()> {
    if dims.len() < 2 {
        return Err(shape_err(format!("layer dims {dims:?} need at least input and output")));
    }
    if dims.contains(&0) {
        return Err(shape_err(format!("layer dims {dims:?} contain a zero")));
    }
    Ok(())
}
