//! Fully connected feed-forward network.
//!
//! Layer `l` computes `a_{l+1} = act(a_l · W_l + b_l)` with `W_l` stored as
//! `(fan_in x fan_out)`. Hidden layers use the configured activation, the
//! output layer is always linear. Gradients are batch *sums*.

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::matrix::{matmul, matmul_nt, matmul_tn, Matrix};
use crate::{rng, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Relu,
    Identity,
}

impl Activation {
    #[inline]
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Relu => x.max(0.0),
            Activation::Identity => x,
        }
    }

    /// Derivative expressed through the pre-activation `x` and output `y`.
    #[inline]
    fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - y * y,
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tanh" => Ok(Activation::Tanh),
            "relu" => Ok(Activation::Relu),
            "identity" => Ok(Activation::Identity),
            other => Err(Error::Config(format!("unknown activation `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    layer_dims: Vec<usize>,
    hidden_activation: Activation,
    weights: Vec<Matrix>,
    biases: Vec<Vec<f64>>,
}

/// Per-layer values kept from a forward pass for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// `outputs[0]` is the input batch, `outputs[l + 1]` the output of layer `l`.
    outputs: Vec<Matrix>,
    /// Pre-activation of each layer; only kept for ReLU, which needs the sign.
    pre: Vec<Option<Matrix>>,
}

impl ForwardCache {
    pub fn batch_size(&self) -> usize {
        self.outputs[0].rows()
    }

    pub fn input(&self) -> &Matrix {
        &self.outputs[0]
    }

    pub fn output(&self) -> &Matrix {
        self.outputs.last().expect("cache holds at least the input")
    }
}

/// Gradients shaped like an [`MlpModel`]'s parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrads {
    pub weights: Vec<Matrix>,
    pub biases: Vec<Vec<f64>>,
}

impl ParamGrads {
    pub fn zeros_like(model: &MlpModel) -> Self {
        ParamGrads {
            weights: model
                .weights
                .iter()
                .map(|w| Matrix::zeros(w.rows(), w.cols()))
                .collect(),
            biases: model.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
        }
    }

    /// Adds `s * w` to each weight gradient; biases are left alone.
    pub fn add_weight_decay(&mut self, model: &MlpModel, s: f64) -> Result<()> {
        for (g, w) in self.weights.iter_mut().zip(&model.weights) {
            g.add_scaled(w, s)?;
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().all(Matrix::is_finite)
            && self.biases.iter().flatten().all(|v| v.is_finite())
    }

    /// Parameters flattened in the same order as [`MlpModel::flat_params`].
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend_from_slice(w.data());
            out.extend_from_slice(b);
        }
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.flatten().iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

impl MlpModel {
    /// Glorot-uniform weights, zero biases.
    ///
    /// Each weight of layer `l` is drawn from `U(-a, a)` with
    /// `a = sqrt(6 / (fan_in + fan_out))`, in row-major order, layer by layer,
    /// from the ChaCha8 stream `rng::rng_for(seed, "mlp-init")`.
    pub fn init(layer_dims: &[usize], hidden_activation: Activation, seed: u64) -> Result<Self> {
        if layer_dims.len() < 2 {
            return Err(Error::Config(format!(
                "an MLP needs at least input and output dims, got {layer_dims:?}"
            )));
        }
        if layer_dims.contains(&0) {
            return Err(Error::Config(format!(
                "layer dims must be positive, got {layer_dims:?}"
            )));
        }
        let mut rng = rng::rng_for(seed, "mlp-init");
        let mut weights = Vec::with_capacity(layer_dims.len() - 1);
        let mut biases = Vec::with_capacity(layer_dims.len() - 1);
        for pair in layer_dims.windows(2) {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let data = (0..fan_in * fan_out)
                .map(|_| rng.random_range(-limit..limit))
                .collect();
            weights.push(Matrix::from_vec(fan_in, fan_out, data)?);
            biases.push(vec![0.0; fan_out]);
        }
        Ok(MlpModel {
            layer_dims: layer_dims.to_vec(),
            hidden_activation,
            weights,
            biases,
        })
    }

    /// Builds a model from explicit parameters.
    pub fn from_parts(
        weights: Vec<Matrix>,
        biases: Vec<Vec<f64>>,
        hidden_activation: Activation,
    ) -> Result<Self> {
        if weights.is_empty() || weights.len() != biases.len() {
            return Err(Error::Config(format!(
                "{} weight matrices but {} bias vectors",
                weights.len(),
                biases.len()
            )));
        }
        let mut layer_dims = vec![weights[0].rows()];
        for (l, (w, b)) in weights.iter().zip(&biases).enumerate() {
            if w.rows() != *layer_dims.last().unwrap() || b.len() != w.cols() {
                return Err(Error::Dimension(format!(
                    "layer {l}: weight {}x{} with bias of length {} does not chain",
                    w.rows(),
                    w.cols(),
                    b.len()
                )));
            }
            layer_dims.push(w.cols());
        }
        let model = MlpModel {
            layer_dims,
            hidden_activation,
            weights,
            biases,
        };
        if !model.is_finite() {
            return Err(Error::Numeric("model parameters must be finite".into()));
        }
        Ok(model)
    }

    pub fn layer_dims(&self) -> &[usize] {
        &self.layer_dims
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_dims.last().unwrap()
    }

    pub fn hidden_activation(&self) -> Activation {
        self.hidden_activation
    }

    pub fn weights(&self) -> &[Matrix] {
        &self.weights
    }

    pub fn biases(&self) -> &[Vec<f64>] {
        &self.biases
    }

    pub fn num_params(&self) -> usize {
        self.weights
            .iter()
            .zip(&self.biases)
            .map(|(w, b)| w.data().len() + b.len())
            .sum()
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().all(Matrix::is_finite)
            && self.biases.iter().flatten().all(|v| v.is_finite())
    }

    fn activation_of(&self, layer: usize) -> Activation {
        if layer + 1 == self.weights.len() {
            Activation::Identity
        } else {
            self.hidden_activation
        }
    }

    /// Runs the batch through the network and keeps what `backward` needs.
    pub fn forward(&self, x: &Matrix) -> Result<(Matrix, ForwardCache)> {
        if x.cols() != self.input_dim() {
            return Err(Error::Dimension(format!(
                "input has {} features, model expects {}",
                x.cols(),
                self.input_dim()
            )));
        }
        let mut outputs = Vec::with_capacity(self.weights.len() + 1);
        let mut pre = Vec::with_capacity(self.weights.len());
        outputs.push(x.clone());
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let mut z = matmul(outputs.last().unwrap(), w)?;
            for r in 0..z.rows() {
                for (v, bias) in z.row_mut(r).iter_mut().zip(b) {
                    *v += bias;
                }
            }
            let act = self.activation_of(l);
            let keep_pre = act == Activation::Relu;
            pre.push(keep_pre.then(|| z.clone()));
            if act != Activation::Identity {
                z.data_mut().iter_mut().for_each(|v| *v = act.apply(*v));
            }
            outputs.push(z);
        }
        let out = outputs.last().unwrap().clone();
        Ok((out, ForwardCache { outputs, pre }))
    }

    /// Forward pass without keeping a cache.
    pub fn predict(&self, x: &Matrix) -> Result<Matrix> {
        self.forward(x).map(|(z, _)| z)
    }

    /// Gradients of `Σ_rows upstream · output` with respect to every parameter.
    pub fn backward(&self, cache: &ForwardCache, upstream: &Matrix) -> Result<ParamGrads> {
        self.backward_impl(cache, upstream, false).map(|(g, _)| g)
    }

    /// Like [`backward`](Self::backward) but also returns the gradient with
    /// respect to the input batch, for chaining networks.
    pub fn backward_with_input(
        &self,
        cache: &ForwardCache,
        upstream: &Matrix,
    ) -> Result<(ParamGrads, Matrix)> {
        self.backward_impl(cache, upstream, true)
            .map(|(g, dx)| (g, dx.expect("input gradient requested")))
    }

    fn backward_impl(
        &self,
        cache: &ForwardCache,
        upstream: &Matrix,
        want_input: bool,
    ) -> Result<(ParamGrads, Option<Matrix>)> {
        let n_layers = self.weights.len();
        if cache.outputs.len() != n_layers + 1 {
            return Err(Error::Dimension(format!(
                "cache has {} layers, model has {n_layers}",
                cache.outputs.len() - 1
            )));
        }
        let out = cache.output();
        if upstream.shape() != out.shape() {
            return Err(Error::Dimension(format!(
                "upstream is {}x{} but the cached output is {}x{}",
                upstream.rows(),
                upstream.cols(),
                out.rows(),
                out.cols()
            )));
        }
        for (l, w) in self.weights.iter().enumerate() {
            if cache.outputs[l].cols() != w.rows() {
                return Err(Error::Dimension(format!(
                    "cache layer {l} width {} does not match weight rows {}",
                    cache.outputs[l].cols(),
                    w.rows()
                )));
            }
        }

        let mut grads = ParamGrads::zeros_like(self);
        // delta = ∂J/∂(pre-activation of layer l)
        let mut delta = upstream.clone();
        for l in (0..n_layers).rev() {
            let act = self.activation_of(l);
            if act != Activation::Identity {
                let y = &cache.outputs[l + 1];
                let pre = cache.pre[l].as_ref();
                for (i, d) in delta.data_mut().iter_mut().enumerate() {
                    let x = pre.map_or(0.0, |p| p.data()[i]);
                    *d *= act.derivative(x, y.data()[i]);
                }
            }
            grads.weights[l] = matmul_tn(&cache.outputs[l], &delta)?;
            grads.biases[l] = delta.col_sums();
            if l > 0 || want_input {
                delta = matmul_nt(&delta, &self.weights[l])?;
            }
        }
        Ok((grads, want_input.then_some(delta)))
    }

    /// Plain gradient step `p ← p − η·g`.
    pub fn sgd_step(&mut self, grads: &ParamGrads, learning_rate: f64) -> Result<()> {
        if !(learning_rate >= 0.0 && learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning rate must be finite and non-negative, got {learning_rate}"
            )));
        }
        if grads.weights.len() != self.weights.len()
            || grads
                .weights
                .iter()
                .zip(&self.weights)
                .any(|(g, w)| g.shape() != w.shape())
            || grads
                .biases
                .iter()
                .zip(&self.biases)
                .any(|(g, b)| g.len() != b.len())
        {
            return Err(Error::Dimension(
                "gradient shapes do not match the model".into(),
            ));
        }
        if !grads.is_finite() {
            return Err(Error::Numeric("non-finite gradient entry".into()));
        }
        for (w, g) in self.weights.iter_mut().zip(&grads.weights) {
            w.add_scaled(g, -learning_rate)?;
        }
        for (b, g) in self.biases.iter_mut().zip(&grads.biases) {
            for (p, d) in b.iter_mut().zip(g) {
                *p -= learning_rate * d;
            }
        }
        Ok(())
    }

    /// Sum of squared Frobenius norms of the weight matrices (biases excluded).
    pub fn weight_norm_sq(&self) -> f64 {
        self.weights.iter().map(Matrix::frobenius_sq).sum()
    }

    /// All parameters as one vector: for each layer, weights row-major then bias.
    pub fn flat_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend_from_slice(w.data());
            out.extend_from_slice(b);
        }
        out
    }

    /// Inverse of [`flat_params`](Self::flat_params).
    pub fn set_flat_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.num_params() {
            return Err(Error::Dimension(format!(
                "{} values for a model with {} parameters",
                params.len(),
                self.num_params()
            )));
        }
        let mut at = 0;
        for (w, b) in self.weights.iter_mut().zip(&mut self.biases) {
            let n = w.data().len();
            w.data_mut().copy_from_slice(&params[at..at + n]);
            at += n;
            let m = b.len();
            b.copy_from_slice(&params[at..at + m]);
            at += m;
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let raw: MlpModel = serde_json::from_str(s)?;
        let model = MlpModel::from_parts(raw.weights, raw.biases, raw.hidden_activation)?;
        if model.layer_dims != raw.layer_dims {
            return Err(Error::Dimension(format!(
                "declared layer dims {:?} disagree with parameters {:?}",
                raw.layer_dims, model.layer_dims
            )));
        }
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        MlpModel::from_json(&std::fs::read_to_string(path)?)
    }
}
