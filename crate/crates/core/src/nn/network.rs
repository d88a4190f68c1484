//! Network assembly, inference, loss gradients, and checkpoint I/O.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::layer::{activation_dz, Activation, Layer, LayerGrads, LayerSpec, LayerTrace};
use crate::seeding::derive_seed;

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

/// Per-dimension input statistics estimated on training data and applied
/// unchanged at test time. Standard deviations are floored at 1e-8 so
/// constant dimensions pass through as zeros.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Normalization {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Normalization {
    pub fn fit(data: &[Vec<f64>]) -> Result<Normalization> {
        let n = data.len();
        if n == 0 {
            return Err(Error::data("cannot estimate normalization from no data"));
        }
        let dim = data[0].len();
        let mut mean = vec![0.0; dim];
        for row in data {
            if row.len() != dim {
                return Err(Error::data("normalization rows must share a dimension"));
            }
            for (m, &v) in mean.iter_mut().zip(row.iter()) {
                *m += v;
            }
        }
        for m in mean.iter_mut() {
            *m /= n as f64;
        }
        let mut var = vec![0.0; dim];
        for row in data {
            for ((v, &x), &m) in var.iter_mut().zip(row.iter()).zip(mean.iter()) {
                *v += (x - m) * (x - m);
            }
        }
        let std = var.iter().map(|v| (v / n as f64).sqrt().max(1e-8)).collect();
        Ok(Normalization { mean, std })
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.mean.iter())
            .zip(self.std.iter())
            .map(|((&v, &m), &s)| (v - m) / s)
            .collect()
    }
}

/// A feedforward classifier: a chain of layers ending in a 2-unit softmax.
/// Output convention: index 0 is the non-alarm posterior, index 1 the alarm
/// posterior.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Network {
    pub format_version: u32,
    pub sample_rate: f64,
    pub layers: Vec<Layer>,
    pub norm: Option<Normalization>,
}

/// Cached activations of a full forward pass.
pub struct ForwardTrace {
    /// Input of each layer (after normalization for layer 0).
    pub layer_inputs: Vec<Vec<f64>>,
    pub traces: Vec<LayerTrace>,
}

impl Network {
    /// Build and initialize a network. The last layer must be a 2-unit
    /// softmax; softmax is rejected anywhere else.
    pub fn init(specs: &[LayerSpec], sample_rate: f64, seed: u64) -> Result<Network> {
        if specs.is_empty() {
            return Err(Error::config("a network needs at least one layer"));
        }
        for (i, spec) in specs.iter().enumerate() {
            spec.validate()?;
            let last = i == specs.len() - 1;
            if last {
                if spec.activation != Activation::Softmax || spec.out_dim != 2 {
                    return Err(Error::config(
                        "the output layer must be a 2-unit softmax",
                    ));
                }
            } else if spec.activation == Activation::Softmax {
                return Err(Error::config("softmax is only allowed at the output"));
            }
            if i > 0 && specs[i - 1].out_dim != spec.in_dim {
                return Err(Error::config(format!(
                    "layer {} expects {} inputs but layer {} emits {}",
                    i,
                    spec.in_dim,
                    i - 1,
                    specs[i - 1].out_dim
                )));
            }
        }
        let layers = specs
            .iter()
            .enumerate()
            .map(|(i, &spec)| {
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "layer", i as u64));
                Layer::init(spec, sample_rate, &mut rng)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Network {
            format_version: CHECKPOINT_FORMAT_VERSION,
            sample_rate,
            layers,
            norm: None,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].spec.in_dim
    }

    /// Total trainable parameter count (weights plus biases).
    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.param_count()).sum()
    }

    pub fn forward_trace(&self, x: &[f64]) -> Result<ForwardTrace> {
        let first = match &self.norm {
            Some(norm) => {
                if x.len() != norm.mean.len() {
                    return Err(Error::data(format!(
                        "network expected {} inputs, got {}",
                        norm.mean.len(),
                        x.len()
                    )));
                }
                norm.apply(x)
            }
            None => x.to_vec(),
        };
        let mut layer_inputs = Vec::with_capacity(self.layers.len());
        let mut traces = Vec::with_capacity(self.layers.len());
        let mut cur = first;
        for layer in &self.layers {
            let trace = layer.forward(&cur)?;
            layer_inputs.push(cur);
            cur = trace.output.clone();
            traces.push(trace);
        }
        Ok(ForwardTrace { layer_inputs, traces })
    }

    /// Class posterior pair (non-alarm, alarm).
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        let trace = self.forward_trace(x)?;
        Ok(trace.traces.last().unwrap().output.clone())
    }

    /// Alarm posterior for a batch of inputs.
    pub fn alarm_scores(&self, inputs: &[Vec<f64>]) -> Result<Vec<f64>> {
        inputs.iter().map(|x| Ok(self.forward(x)?[1])).collect()
    }

    /// Cross-entropy loss of one sample and the gradients of every layer,
    /// plus the gradient w.r.t. the (normalized) network input.
    pub fn loss_and_grads(
        &self,
        x: &[f64],
        alarm: bool,
    ) -> Result<(f64, Vec<LayerGrads>, Vec<f64>)> {
        let trace = self.forward_trace(x)?;
        let p = &trace.traces.last().unwrap().output;
        let target_idx = alarm as usize;
        let loss = -p[target_idx].ln();
        if !loss.is_finite() {
            return Err(Error::numeric(format!(
                "non-finite loss {loss} at posterior {:?}",
                p
            )));
        }
        // Softmax + cross-entropy fused gradient.
        let mut dz: Vec<f64> = p
            .iter()
            .enumerate()
            .map(|(i, &pi)| pi - if i == target_idx { 1.0 } else { 0.0 })
            .collect();
        let mut grads: Vec<LayerGrads> = Vec::with_capacity(self.layers.len());
        for idx in (0..self.layers.len()).rev() {
            let layer = &self.layers[idx];
            let (g, dx) = layer.backward_dz(&trace.layer_inputs[idx], &trace.traces[idx], &dz);
            grads.push(g);
            if idx > 0 {
                let prev = &self.layers[idx - 1];
                dz = activation_dz(&dx, &trace.traces[idx - 1].output, prev.spec.activation);
            } else {
                dz = dx;
            }
        }
        grads.reverse();
        Ok((loss, grads, dz))
    }

    /// Loss alone (used by finite-difference checks).
    pub fn loss(&self, x: &[f64], alarm: bool) -> Result<f64> {
        let trace = self.forward_trace(x)?;
        let p = &trace.traces.last().unwrap().output;
        let loss = -p[alarm as usize].ln();
        if !loss.is_finite() {
            return Err(Error::numeric(format!("non-finite loss {loss}")));
        }
        Ok(loss)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)
            .map_err(|e| Error::data(format!("checkpoint serialization failed: {e}")))?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Network> {
        let text = std::fs::read_to_string(path)?;
        let net: Network = serde_json::from_str(&text)
            .map_err(|e| Error::data(format!("malformed checkpoint {}: {e}", path.display())))?;
        if net.format_version != CHECKPOINT_FORMAT_VERSION {
            return Err(Error::unsupported(format!(
                "checkpoint format {} (supported: {})",
                net.format_version, CHECKPOINT_FORMAT_VERSION
            )));
        }
        for layer in &net.layers {
            layer.spec.validate()?;
        }
        Ok(net)
    }
}
