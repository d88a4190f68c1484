//! Layer kinds for the small feedforward networks: fully connected, uniform
//! and mel-support max pooling, and partially connected single-filter layers
//! over frequency or time groups.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerKind {
    FullyConnected,
    MaxPoolUniform,
    MaxPoolMel,
    PartialFreqWeight,
    PartialTimeWeight,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Sigmoid,
    Softmax,
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub in_dim: usize,
    pub out_dim: usize,
    /// Group width for pool/partial layers; 0 for fully connected and mel
    /// pooling (mel groups come from the filterbank supports).
    pub filter_width: usize,
    pub activation: Activation,
}

impl LayerSpec {
    pub fn fully_connected(in_dim: usize, out_dim: usize, activation: Activation) -> LayerSpec {
        LayerSpec { kind: LayerKind::FullyConnected, in_dim, out_dim, filter_width: 0, activation }
    }

    pub fn max_pool_uniform(in_dim: usize, filter_width: usize) -> LayerSpec {
        LayerSpec {
            kind: LayerKind::MaxPoolUniform,
            in_dim,
            out_dim: in_dim / filter_width.max(1),
            filter_width,
            activation: Activation::Linear,
        }
    }

    pub fn max_pool_mel(in_dim: usize, n_filters: usize) -> LayerSpec {
        LayerSpec {
            kind: LayerKind::MaxPoolMel,
            in_dim,
            out_dim: n_filters,
            filter_width: 0,
            activation: Activation::Linear,
        }
    }

    pub fn partial_freq(out_dim: usize, filter_width: usize, activation: Activation) -> LayerSpec {
        LayerSpec {
            kind: LayerKind::PartialFreqWeight,
            in_dim: out_dim * filter_width,
            out_dim,
            filter_width,
            activation,
        }
    }

    pub fn partial_time(out_dim: usize, context: usize, activation: Activation) -> LayerSpec {
        LayerSpec {
            kind: LayerKind::PartialTimeWeight,
            in_dim: out_dim * context,
            out_dim,
            filter_width: context,
            activation,
        }
    }

    pub fn is_pool(&self) -> bool {
        matches!(self.kind, LayerKind::MaxPoolUniform | LayerKind::MaxPoolMel)
    }

    pub fn validate(&self) -> Result<()> {
        if self.in_dim == 0 || self.out_dim == 0 {
            return Err(Error::config("layer dimensions must be positive"));
        }
        match self.kind {
            LayerKind::FullyConnected => {}
            LayerKind::MaxPoolUniform | LayerKind::PartialFreqWeight
            | LayerKind::PartialTimeWeight => {
                if self.filter_width == 0 {
                    return Err(Error::config("grouped layer needs a positive filter width"));
                }
                if self.in_dim != self.out_dim * self.filter_width {
                    return Err(Error::config(format!(
                        "grouped layer dims must satisfy in = out * width, \
                         got {} != {} * {}",
                        self.in_dim, self.out_dim, self.filter_width
                    )));
                }
            }
            LayerKind::MaxPoolMel => {}
        }
        if self.is_pool() && self.activation != Activation::Linear {
            return Err(Error::config("pooling layers must use the linear activation"));
        }
        Ok(())
    }
}

/// Mel-spaced triangular filter supports over an FFT half-spectrum of
/// `n_bins` bins (bin k sits at k*fs/(2*n_bins) Hz). Each support is the
/// half-open bin range (start, end) strictly inside the triangle; every
/// support holds at least one bin.
pub fn mel_supports(n_bins: usize, n_filters: usize, sample_rate: f64) -> Vec<(usize, usize)> {
    fn hz_to_mel(f: f64) -> f64 {
        2595.0 * (1.0 + f / 700.0).log10()
    }
    fn mel_to_hz(m: f64) -> f64 {
        700.0 * (10f64.powf(m / 2595.0) - 1.0)
    }
    let bin_hz = sample_rate / (2.0 * n_bins as f64);
    let mel_max = hz_to_mel(sample_rate / 2.0);
    let edges: Vec<f64> = (0..n_filters + 2)
        .map(|i| mel_to_hz(mel_max * i as f64 / (n_filters + 1) as f64))
        .collect();
    (0..n_filters)
        .map(|j| {
            let lo = edges[j];
            let hi = edges[j + 2];
            let mut start = (lo / bin_hz).floor() as usize + 1;
            let mut end = ((hi / bin_hz).ceil() as usize).min(n_bins);
            if start >= end {
                // Narrow triangle between two bins: snap to the center bin.
                let center = (edges[j + 1] / bin_hz).round() as usize;
                start = center.min(n_bins - 1);
                end = start + 1;
            }
            (start, end)
        })
        .collect()
}

/// One layer with its parameters. Pool layers carry group geometry only.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Layer {
    pub spec: LayerSpec,
    /// Row-major out_dim x in_dim for fully connected; out_dim x
    /// filter_width for partial layers; empty for pools.
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
    /// Bin ranges per output for mel pooling.
    pub supports: Vec<(usize, usize)>,
}

/// Parameter gradients of one layer, same shapes as the parameters.
#[derive(Debug, Clone)]
pub struct LayerGrads {
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl LayerGrads {
    pub fn zeros_like(layer: &Layer) -> LayerGrads {
        LayerGrads {
            weights: vec![0.0; layer.weights.len()],
            biases: vec![0.0; layer.biases.len()],
        }
    }

    pub fn add_scaled(&mut self, other: &LayerGrads, scale: f64) {
        for (a, b) in self.weights.iter_mut().zip(other.weights.iter()) {
            *a += b * scale;
        }
        for (a, b) in self.biases.iter_mut().zip(other.biases.iter()) {
            *a += b * scale;
        }
    }
}

/// Cached activations of one layer for the backward pass.
#[derive(Debug, Clone)]
pub struct LayerTrace {
    /// Post-activation output.
    pub output: Vec<f64>,
    /// Winning input index per output for pools; empty otherwise.
    pub argmax: Vec<usize>,
}

impl Layer {
    /// Fresh layer with uniform init in +-sqrt(6 / (fan_in + fan_out)).
    /// Partial layers treat each group filter as its own unit.
    pub fn init<R: Rng>(spec: LayerSpec, sample_rate: f64, rng: &mut R) -> Result<Layer> {
        spec.validate()?;
        let (n_weights, n_biases, fan_in, fan_out) = match spec.kind {
            LayerKind::FullyConnected => {
                (spec.in_dim * spec.out_dim, spec.out_dim, spec.in_dim, spec.out_dim)
            }
            LayerKind::PartialFreqWeight | LayerKind::PartialTimeWeight => {
                (spec.out_dim * spec.filter_width, spec.out_dim, spec.filter_width, 1)
            }
            LayerKind::MaxPoolUniform | LayerKind::MaxPoolMel => (0, 0, 1, 1),
        };
        let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let weights = (0..n_weights).map(|_| rng.gen_range(-bound..bound)).collect();
        let biases = vec![0.0; n_biases];
        let supports = if spec.kind == LayerKind::MaxPoolMel {
            let s = mel_supports(spec.in_dim, spec.out_dim, sample_rate);
            debug_assert_eq!(s.len(), spec.out_dim);
            s
        } else {
            Vec::new()
        };
        Ok(Layer { spec, weights, biases, supports })
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.biases.len()
    }

    /// Input index group of output unit `g`.
    fn group_indices(&self, g: usize) -> Vec<usize> {
        match self.spec.kind {
            LayerKind::MaxPoolUniform => {
                let w = self.spec.filter_width;
                (g * w..(g + 1) * w).collect()
            }
            LayerKind::MaxPoolMel => {
                let (s, e) = self.supports[g];
                (s..e).collect()
            }
            LayerKind::PartialFreqWeight => {
                let w = self.spec.filter_width;
                (g * w..(g + 1) * w).collect()
            }
            LayerKind::PartialTimeWeight => {
                // Feature g gathered across the stacked context frames.
                let d = self.spec.out_dim;
                (0..self.spec.filter_width).map(|t| t * d + g).collect()
            }
            LayerKind::FullyConnected => (0..self.spec.in_dim).collect(),
        }
    }

    pub fn forward(&self, x: &[f64]) -> Result<LayerTrace> {
        if x.len() != self.spec.in_dim {
            return Err(Error::data(format!(
                "layer expected {} inputs, got {}",
                self.spec.in_dim,
                x.len()
            )));
        }
        let mut pre = vec![0.0; self.spec.out_dim];
        let mut argmax = Vec::new();
        match self.spec.kind {
            LayerKind::FullyConnected => {
                for o in 0..self.spec.out_dim {
                    let row = &self.weights[o * self.spec.in_dim..(o + 1) * self.spec.in_dim];
                    pre[o] = self.biases[o]
                        + row.iter().zip(x.iter()).map(|(w, xi)| w * xi).sum::<f64>();
                }
            }
            LayerKind::PartialFreqWeight | LayerKind::PartialTimeWeight => {
                let w = self.spec.filter_width;
                for o in 0..self.spec.out_dim {
                    let filter = &self.weights[o * w..(o + 1) * w];
                    let mut acc = self.biases[o];
                    for (k, &idx) in self.group_indices(o).iter().enumerate() {
                        acc += filter[k] * x[idx];
                    }
                    pre[o] = acc;
                }
            }
            LayerKind::MaxPoolUniform | LayerKind::MaxPoolMel => {
                argmax = vec![0; self.spec.out_dim];
                for o in 0..self.spec.out_dim {
                    let mut best = f64::NEG_INFINITY;
                    let mut best_idx = 0;
                    for &idx in &self.group_indices(o) {
                        if x[idx] > best {
                            best = x[idx];
                            best_idx = idx;
                        }
                    }
                    pre[o] = best;
                    argmax[o] = best_idx;
                }
            }
        }
        let output = apply_activation(&pre, self.spec.activation);
        Ok(LayerTrace { output, argmax })
    }

    /// Backward pass from the gradient w.r.t. this layer's pre-activation
    /// (`dz`). Returns parameter gradients and the gradient w.r.t. the
    /// layer input.
    pub fn backward_dz(&self, x: &[f64], trace: &LayerTrace, dz: &[f64]) -> (LayerGrads, Vec<f64>) {
        let mut grads = LayerGrads::zeros_like(self);
        let mut dx = vec![0.0; self.spec.in_dim];
        match self.spec.kind {
            LayerKind::FullyConnected => {
                for o in 0..self.spec.out_dim {
                    grads.biases[o] = dz[o];
                    let row = o * self.spec.in_dim;
                    for i in 0..self.spec.in_dim {
                        grads.weights[row + i] = dz[o] * x[i];
                        dx[i] += dz[o] * self.weights[row + i];
                    }
                }
            }
            LayerKind::PartialFreqWeight | LayerKind::PartialTimeWeight => {
                let w = self.spec.filter_width;
                for o in 0..self.spec.out_dim {
                    grads.biases[o] = dz[o];
                    for (k, &idx) in self.group_indices(o).iter().enumerate() {
                        grads.weights[o * w + k] = dz[o] * x[idx];
                        dx[idx] += dz[o] * self.weights[o * w + k];
                    }
                }
            }
            LayerKind::MaxPoolUniform | LayerKind::MaxPoolMel => {
                for o in 0..self.spec.out_dim {
                    dx[trace.argmax[o]] += dz[o];
                }
            }
        }
        (grads, dx)
    }
}

pub fn apply_activation(pre: &[f64], activation: Activation) -> Vec<f64> {
    match activation {
        Activation::Linear => pre.to_vec(),
        Activation::Sigmoid => pre.iter().map(|&z| 1.0 / (1.0 + (-z).exp())).collect(),
        Activation::Softmax => {
            let m = pre.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = pre.iter().map(|&z| (z - m).exp()).collect();
            let sum: f64 = exps.iter().sum();
            exps.iter().map(|e| e / sum).collect()
        }
    }
}

/// Gradient w.r.t. pre-activation from the gradient w.r.t. output, for the
/// elementwise activations (softmax is fused with the loss at the output).
pub fn activation_dz(dpost: &[f64], output: &[f64], activation: Activation) -> Vec<f64> {
    match activation {
        Activation::Linear => dpost.to_vec(),
        Activation::Sigmoid => dpost
            .iter()
            .zip(output.iter())
            .map(|(&d, &y)| d * y * (1.0 - y))
            .collect(),
        Activation::Softmax => unreachable!("softmax gradient is fused with the loss"),
    }
}
