//! Minibatch gradient descent with classical momentum, and the class
//! balancing applied to training frames.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::nn::layer::LayerGrads;
use crate::nn::network::Network;

#[derive(Debug, Clone, Copy)]
pub struct TrainConfig {
    pub epochs: usize,
    pub minibatch: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub seed: u64,
}

impl TrainConfig {
    pub fn standard(seed: u64) -> TrainConfig {
        TrainConfig { epochs: 70, minibatch: 10, learning_rate: 0.01, momentum: 0.9, seed }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.minibatch == 0 {
            return Err(Error::config("epochs and minibatch size must be positive"));
        }
        if self.learning_rate <= 0.0 || self.momentum < 0.0 {
            return Err(Error::config("learning rate must be positive, momentum non-negative"));
        }
        Ok(())
    }
}

/// Mean loss per epoch over the training set.
#[derive(Debug, Clone)]
pub struct TrainStats {
    pub epoch_losses: Vec<f64>,
}

/// Subsample the non-alarm class without replacement so both classes have
/// equally many samples. Order within each class is preserved.
pub fn balance_training_set<T: Clone>(
    data: &[(T, bool)],
    seed: u64,
) -> Result<Vec<(T, bool)>> {
    let n_alarm = data.iter().filter(|(_, l)| *l).count();
    let n_non = data.len() - n_alarm;
    if n_alarm == 0 || n_non == 0 {
        return Err(Error::data(format!(
            "class balancing needs both classes; got {n_alarm} alarm and {n_non} non-alarm"
        )));
    }
    if n_non <= n_alarm {
        return Ok(data.to_vec());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let non_indices: Vec<usize> = data
        .iter()
        .enumerate()
        .filter(|(_, (_, l))| !*l)
        .map(|(i, _)| i)
        .collect();
    let mut chosen = non_indices
        .choose_multiple(&mut rng, n_alarm)
        .cloned()
        .collect::<Vec<usize>>();
    chosen.sort_unstable();
    let mut keep = vec![false; data.len()];
    for (i, (_, l)) in data.iter().enumerate() {
        if *l {
            keep[i] = true;
        }
    }
    for i in chosen {
        keep[i] = true;
    }
    Ok(data
        .iter()
        .zip(keep.iter())
        .filter(|(_, &k)| k)
        .map(|(d, _)| d.clone())
        .collect())
}

/// Stochastic gradient descent with classical momentum:
/// v <- momentum * v - lr * grad; w <- w + v. Minibatch gradients are means
/// over the batch; sample order is reshuffled every epoch from the config
/// seed.
pub fn train(
    net: &mut Network,
    data: &[(Vec<f64>, bool)],
    cfg: &TrainConfig,
) -> Result<TrainStats> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::data("cannot train on an empty set"));
    }
    let mut velocity: Vec<LayerGrads> =
        net.layers.iter().map(LayerGrads::zeros_like).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);

    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.minibatch) {
            let mut acc: Vec<LayerGrads> =
                net.layers.iter().map(LayerGrads::zeros_like).collect();
            let scale = 1.0 / batch.len() as f64;
            for &i in batch {
                let (x, alarm) = &data[i];
                let (loss, grads, _) = net.loss_and_grads(x, *alarm)?;
                epoch_loss += loss;
                for (a, g) in acc.iter_mut().zip(grads.iter()) {
                    a.add_scaled(g, scale);
                }
            }
            for ((layer, v), g) in net.layers.iter_mut().zip(velocity.iter_mut()).zip(acc.iter())
            {
                for ((w, vel), grad) in
                    layer.weights.iter_mut().zip(v.weights.iter_mut()).zip(g.weights.iter())
                {
                    *vel = cfg.momentum * *vel - cfg.learning_rate * grad;
                    *w += *vel;
                }
                for ((b, vel), grad) in
                    layer.biases.iter_mut().zip(v.biases.iter_mut()).zip(g.biases.iter())
                {
                    *vel = cfg.momentum * *vel - cfg.learning_rate * grad;
                    *b += *vel;
                }
            }
        }
        epoch_losses.push(epoch_loss / data.len() as f64);
    }
    Ok(TrainStats { epoch_losses })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::layer::{Activation, LayerSpec};
    use crate::temporal::eer_threshold;

    fn toy_data(n_per_class: usize) -> Vec<(Vec<f64>, bool)> {
        // Linearly separable 2-D blobs with a deterministic jitter.
        let mut data = Vec::new();
        for i in 0..n_per_class {
            let t = i as f64 / n_per_class as f64;
            data.push((vec![1.5 + 0.3 * (t * 9.0).sin(), 1.0 - 0.2 * t], true));
            data.push((vec![-1.5 - 0.3 * (t * 7.0).cos(), -1.0 + 0.2 * t], false));
        }
        data
    }

    #[test]
    fn balance_examples() {
        let mut data: Vec<(u32, bool)> = Vec::new();
        for i in 0..100 {
            data.push((i, true));
        }
        for i in 0..1000 {
            data.push((1000 + i, false));
        }
        let balanced = balance_training_set(&data, 5).unwrap();
        assert_eq!(balanced.iter().filter(|(_, l)| *l).count(), 100);
        assert_eq!(balanced.iter().filter(|(_, l)| !*l).count(), 100);
        // Deterministic per seed.
        let again = balance_training_set(&data, 5).unwrap();
        assert_eq!(balanced, again);
        let other = balance_training_set(&data, 6).unwrap();
        assert_ne!(balanced, other, "different seed picks a different subset");

        // Already balanced: unchanged.
        let even: Vec<(u32, bool)> = (0..10).map(|i| (i, i % 2 == 0)).collect();
        assert_eq!(balance_training_set(&even, 1).unwrap(), even);

        // Single class: error.
        let only: Vec<(u32, bool)> = (0..5).map(|i| (i, true)).collect();
        assert!(balance_training_set(&only, 1).is_err());
    }

    #[test]
    fn zero_learning_rate_is_rejected_and_tiny_rate_changes_nothing_much() {
        let mut net = Network::init(
            &[
                LayerSpec::fully_connected(2, 4, Activation::Sigmoid),
                LayerSpec::fully_connected(4, 2, Activation::Softmax),
            ],
            24000.0,
            1,
        )
        .unwrap();
        let cfg = TrainConfig { epochs: 1, minibatch: 4, learning_rate: 0.0, momentum: 0.9, seed: 2 };
        assert!(train(&mut net, &toy_data(8), &cfg).is_err());
    }

    #[test]
    fn single_step_reduces_sample_loss() {
        let mut net = Network::init(
            &[
                LayerSpec::fully_connected(2, 4, Activation::Sigmoid),
                LayerSpec::fully_connected(4, 2, Activation::Softmax),
            ],
            24000.0,
            7,
        )
        .unwrap();
        let x = vec![0.8, -0.4];
        let before = net.loss(&x, true).unwrap();
        let data = vec![(x.clone(), true)];
        let cfg = TrainConfig { epochs: 1, minibatch: 1, learning_rate: 0.05, momentum: 0.0, seed: 3 };
        train(&mut net, &data, &cfg).unwrap();
        let after = net.loss(&x, true).unwrap();
        assert!(after < before, "one small step must reduce the sample loss");
    }

    #[test]
    fn training_is_deterministic() {
        let data = toy_data(20);
        let cfg = TrainConfig { epochs: 5, minibatch: 10, learning_rate: 0.01, momentum: 0.9, seed: 11 };
        let mut a = Network::init(
            &[
                LayerSpec::fully_connected(2, 4, Activation::Sigmoid),
                LayerSpec::fully_connected(4, 2, Activation::Softmax),
            ],
            24000.0,
            13,
        )
        .unwrap();
        let mut b = a.clone();
        let stats_a = train(&mut a, &data, &cfg).unwrap();
        let stats_b = train(&mut b, &data, &cfg).unwrap();
        assert_eq!(stats_a.epoch_losses, stats_b.epoch_losses);
        for (la, lb) in a.layers.iter().zip(b.layers.iter()) {
            assert_eq!(la.weights, lb.weights, "weights must be bit-identical");
            assert_eq!(la.biases, lb.biases);
        }
    }

    #[test]
    fn separable_toy_set_reaches_zero_eer() {
        let data = toy_data(30);
        let mut net = Network::init(
            &[
                LayerSpec::fully_connected(2, 4, Activation::Sigmoid),
                LayerSpec::fully_connected(4, 2, Activation::Softmax),
            ],
            24000.0,
            17,
        )
        .unwrap();
        let cfg = TrainConfig::standard(19);
        let stats = train(&mut net, &data, &cfg).unwrap();
        assert!(
            stats.epoch_losses.last().unwrap() < &stats.epoch_losses[0],
            "loss must shrink over training"
        );
        let scores: Vec<f64> = data.iter().map(|(x, _)| net.forward(x).unwrap()[1]).collect();
        let labels: Vec<bool> = data.iter().map(|(_, l)| *l).collect();
        let (_, eer) = eer_threshold(&scores, &labels).unwrap();
        assert_eq!(eer, 0.0, "separable blobs must separate perfectly");
    }
}
