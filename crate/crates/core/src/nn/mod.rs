//! Deterministic feedforward networks with exactly the layer kinds the
//! detectors need, plus training, input construction, and checkpointing.

pub mod input;
pub mod layer;
pub mod network;
pub mod train;

pub use input::{
    build_class_specific_input, build_generic_input, class_input_bins, stack_context,
    GenericVariant, CLASS_INPUT_HALO, TIME_CONTEXT,
};
pub use layer::{mel_supports, Activation, Layer, LayerGrads, LayerKind, LayerSpec};
pub use network::{Network, Normalization, CHECKPOINT_FORMAT_VERSION};
pub use train::{balance_training_set, train, TrainConfig, TrainStats};

use crate::error::Result;

/// Worst relative disagreement between analytic parameter gradients and
/// central finite differences of the sample loss. Verification diagnostic.
pub fn gradient_check_max_rel_err(
    net: &Network,
    x: &[f64],
    alarm: bool,
    step: f64,
) -> Result<f64> {
    let (_, grads, _) = net.loss_and_grads(x, alarm)?;
    let mut probe = net.clone();
    let mut worst = 0.0f64;
    for li in 0..probe.layers.len() {
        for wi in 0..probe.layers[li].weights.len() {
            let orig = probe.layers[li].weights[wi];
            probe.layers[li].weights[wi] = orig + step;
            let up = probe.loss(x, alarm)?;
            probe.layers[li].weights[wi] = orig - step;
            let down = probe.loss(x, alarm)?;
            probe.layers[li].weights[wi] = orig;
            worst = worst.max(rel_err(grads[li].weights[wi], (up - down) / (2.0 * step)));
        }
        for bi in 0..probe.layers[li].biases.len() {
            let orig = probe.layers[li].biases[bi];
            probe.layers[li].biases[bi] = orig + step;
            let up = probe.loss(x, alarm)?;
            probe.layers[li].biases[bi] = orig - step;
            let down = probe.loss(x, alarm)?;
            probe.layers[li].biases[bi] = orig;
            worst = worst.max(rel_err(grads[li].biases[bi], (up - down) / (2.0 * step)));
        }
    }
    Ok(worst)
}

/// Worst relative disagreement between the analytic input gradient and
/// central finite differences. The network must be normalization-free so the
/// analytic gradient refers to the raw input. For pooling layers the caller
/// must keep within-group values separated by much more than `step`, or the
/// perturbation flips the max and the finite difference is meaningless.
pub fn input_gradient_check_max_rel_err(
    net: &Network,
    x: &[f64],
    alarm: bool,
    step: f64,
) -> Result<f64> {
    assert!(net.norm.is_none(), "input check needs a normalization-free network");
    let (_, _, dx) = net.loss_and_grads(x, alarm)?;
    let mut probe = x.to_vec();
    let mut worst = 0.0f64;
    for i in 0..probe.len() {
        let orig = probe[i];
        probe[i] = orig + step;
        let up = net.loss(&probe, alarm)?;
        probe[i] = orig - step;
        let down = net.loss(&probe, alarm)?;
        probe[i] = orig;
        worst = worst.max(rel_err(dx[i], (up - down) / (2.0 * step)));
    }
    Ok(worst)
}

fn rel_err(analytic: f64, fd: f64) -> f64 {
    (analytic - fd).abs() / analytic.abs().max(fd.abs()).max(1e-6)
}
