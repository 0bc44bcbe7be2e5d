use nalgebra::DMatrix;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SimRng;

/// Fully connected layer; `weights` is `outputs × inputs`, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
        }
    }

    /// Orthogonal rows/columns scaled by `gain`, zero bias.
    fn orthogonal(inputs: usize, outputs: usize, gain: f64, rng: &mut SimRng) -> Self {
        let (rows, cols) = (outputs.max(inputs), outputs.min(inputs));
        let sample = DMatrix::<f64>::from_fn(rows, cols, |_, _| {
            StandardNormal.sample(rng.inner_mut())
        });
        let qr = sample.qr();
        let mut q = qr.q();
        let r = qr.r();
        for j in 0..cols {
            if r[(j, j)] < 0.0 {
                q.column_mut(j).neg_mut();
            }
        }
        let w = if outputs >= inputs { q } else { q.transpose() };
        let mut weights = Vec::with_capacity(inputs * outputs);
        for o in 0..outputs {
            for i in 0..inputs {
                weights.push(gain * w[(o, i)]);
            }
        }
        Self {
            inputs,
            outputs,
            weights,
            bias: vec![0.0; outputs],
        }
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.weights
            .chunks_exact(self.inputs)
            .zip(&self.bias)
            .map(|(row, b)| row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + b)
            .collect()
    }

    /// Accumulates `dW += dout ⊗ x`, `db += dout` into `grad` and returns
    /// `Wᵀ dout`.
    fn backward(&self, x: &[f64], dout: &[f64], grad: &mut Dense) -> Vec<f64> {
        let mut dx = vec![0.0; self.inputs];
        for (o, &d) in dout.iter().enumerate() {
            if d == 0.0 {
                continue;
            }
            grad.bias[o] += d;
            let row = &self.weights[o * self.inputs..(o + 1) * self.inputs];
            let grow = &mut grad.weights[o * self.inputs..(o + 1) * self.inputs];
            for i in 0..self.inputs {
                grow[i] += d * x[i];
                dx[i] += d * row[i];
            }
        }
        dx
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Tanh,
}

/// Shared tanh trunk with a logits head and a scalar value head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyParameters {
    pub hidden: Vec<Dense>,
    pub policy_head: Dense,
    pub value_head: Dense,
    pub activation: Activation,
    /// Incremented on every optimizer update.
    pub version: u64,
}

/// Intermediate activations kept for backpropagation.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// `activations[0]` is the input; `activations[i + 1]` is the output of
    /// hidden layer `i`.
    pub activations: Vec<Vec<f64>>,
    pub logits: Vec<f64>,
    pub value: f64,
}

impl PolicyParameters {
    /// Orthogonal hidden layers (gain √2), unit-gain value head, and an
    /// all-zero policy head so the initial policy is uniform.
    pub fn init(inputs: usize, hidden: &[usize], actions: usize, rng: &mut SimRng) -> Self {
        let mut layers = Vec::with_capacity(hidden.len());
        let mut width = inputs;
        for &h in hidden {
            layers.push(Dense::orthogonal(width, h, 2f64.sqrt(), rng));
            width = h;
        }
        let value_head = Dense::orthogonal(width, 1, 1.0, rng);
        Self {
            hidden: layers,
            policy_head: Dense::zeros(width, actions),
            value_head,
            activation: Activation::Tanh,
            version: 0,
        }
    }

    /// Same shapes, every value zero.
    pub fn zeros_like(&self) -> Self {
        Self {
            hidden: self
                .hidden
                .iter()
                .map(|l| Dense::zeros(l.inputs, l.outputs))
                .collect(),
            policy_head: Dense::zeros(self.policy_head.inputs, self.policy_head.outputs),
            value_head: Dense::zeros(self.value_head.inputs, 1),
            activation: self.activation,
            version: self.version,
        }
    }

    /// Overwrites every parameter with `N(0, scale²)` draws. Used for gradient
    /// checks and property tests.
    pub fn randomize(&mut self, rng: &mut SimRng, scale: f64) {
        for v in self.values_mut() {
            let z: f64 = StandardNormal.sample(rng.inner_mut());
            *v = scale * z;
        }
    }

    /// `[input, hidden…, actions]`.
    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![self
            .hidden
            .first()
            .map_or(self.policy_head.inputs, |l| l.inputs)];
        sizes.extend(self.hidden.iter().map(|l| l.outputs));
        sizes.push(self.policy_head.outputs);
        sizes
    }

    fn layers(&self) -> impl Iterator<Item = &Dense> {
        self.hidden
            .iter()
            .chain(std::iter::once(&self.policy_head))
            .chain(std::iter::once(&self.value_head))
    }

    fn layers_mut(&mut self) -> impl Iterator<Item = &mut Dense> {
        self.hidden
            .iter_mut()
            .chain(std::iter::once(&mut self.policy_head))
            .chain(std::iter::once(&mut self.value_head))
    }

    /// All parameters in a fixed order: each layer's weights then bias,
    /// hidden layers first, then the policy head, then the value head.
    pub fn values(&self) -> impl Iterator<Item = &f64> {
        self.layers()
            .flat_map(|l| l.weights.iter().chain(l.bias.iter()))
    }

    pub fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers_mut()
            .flat_map(|l| l.weights.iter_mut().chain(l.bias.iter_mut()))
    }

    pub fn num_values(&self) -> usize {
        self.layers().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.values().all(|v| v.is_finite())
    }

    /// Checks that consecutive layers chain and buffers have the declared size.
    pub fn check_shapes(&self) -> Result<()> {
        let mut width = self.layer_sizes()[0];
        for (i, l) in self.hidden.iter().enumerate() {
            if l.inputs != width {
                return Err(Error::Shape(format!(
                    "hidden layer {i} takes {} inputs, previous width {width}",
                    l.inputs
                )));
            }
            width = l.outputs;
        }
        if self.policy_head.inputs != width || self.value_head.inputs != width {
            return Err(Error::Shape("heads do not match trunk width".into()));
        }
        if self.value_head.outputs != 1 {
            return Err(Error::Shape("value head must have one output".into()));
        }
        for l in self.layers() {
            if l.weights.len() != l.inputs * l.outputs || l.bias.len() != l.outputs {
                return Err(Error::Shape(format!(
                    "layer {}x{} has {} weights and {} biases",
                    l.outputs,
                    l.inputs,
                    l.weights.len(),
                    l.bias.len()
                )));
            }
        }
        Ok(())
    }

    pub fn forward(&self, features: &[f64]) -> Result<(Vec<f64>, f64)> {
        let cache = self.forward_cached(features)?;
        Ok((cache.logits, cache.value))
    }

    pub fn forward_cached(&self, features: &[f64]) -> Result<ForwardCache> {
        let expected = self.layer_sizes()[0];
        if features.len() != expected {
            return Err(Error::Incompatible(format!(
                "network expects {expected} features, got {}",
                features.len()
            )));
        }
        if !self.is_finite() {
            return Err(Error::Numeric("policy parameters".into()));
        }
        let mut activations = Vec::with_capacity(self.hidden.len() + 1);
        activations.push(features.to_vec());
        for layer in &self.hidden {
            let mut h = layer.apply(activations.last().unwrap());
            h.iter_mut().for_each(|v| *v = v.tanh());
            activations.push(h);
        }
        let top = activations.last().unwrap();
        let logits = self.policy_head.apply(top);
        let value = self.value_head.apply(top)[0];
        if !value.is_finite() || logits.iter().any(|l| !l.is_finite()) {
            return Err(Error::Numeric("network output".into()));
        }
        Ok(ForwardCache {
            activations,
            logits,
            value,
        })
    }

    /// Backpropagates `∂L/∂logits` and `∂L/∂value` through the network,
    /// accumulating into `grad`.
    pub fn backward(&self, cache: &ForwardCache, dlogits: &[f64], dvalue: f64, grad: &mut Self) {
        let top = cache.activations.last().unwrap();
        let mut dh = self.policy_head.backward(top, dlogits, &mut grad.policy_head);
        let dv = self.value_head.backward(top, &[dvalue], &mut grad.value_head);
        dh.iter_mut().zip(&dv).for_each(|(a, b)| *a += b);
        for (i, layer) in self.hidden.iter().enumerate().rev() {
            let out = &cache.activations[i + 1];
            let dpre: Vec<f64> = dh
                .iter()
                .zip(out)
                .map(|(d, h)| d * (1.0 - h * h))
                .collect();
            dh = layer.backward(&cache.activations[i], &dpre, &mut grad.hidden[i]);
        }
    }
}
