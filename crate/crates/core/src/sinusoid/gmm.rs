//! Diagonal-covariance Gaussian mixtures trained with EM, seeded by
//! k-means++ centers.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const GMM_VARIANCE_FLOOR: f64 = 1e-6;
/// EM stops after this many iterations or when the mean log-likelihood
/// improves by less than `EM_MIN_GAIN` per point.
pub const EM_MAX_ITERATIONS: usize = 50;
pub const EM_MIN_GAIN: f64 = 1e-4;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GmmModel {
    /// Non-negative, summing to one.
    pub weights: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    /// Diagonal variances, floored.
    pub vars: Vec<Vec<f64>>,
}

fn diag_log_density(x: &[f64], mean: &[f64], var: &[f64]) -> f64 {
    let mut acc = 0.0;
    for ((&xi, &mi), &vi) in x.iter().zip(mean.iter()).zip(var.iter()) {
        let d = xi - mi;
        acc += (2.0 * std::f64::consts::PI * vi).ln() + d * d / vi;
    }
    -0.5 * acc
}

fn logsumexp(values: &[f64]) -> f64 {
    let m = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    m + values.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

impl GmmModel {
    pub fn dim(&self) -> usize {
        self.means[0].len()
    }

    pub fn n_components(&self) -> usize {
        self.weights.len()
    }

    /// Mixture log-likelihood of one point.
    pub fn log_likelihood(&self, x: &[f64]) -> f64 {
        let per_comp: Vec<f64> = (0..self.n_components())
            .map(|c| self.weights[c].max(f64::MIN_POSITIVE).ln()
                + diag_log_density(x, &self.means[c], &self.vars[c]))
            .collect();
        logsumexp(&per_comp)
    }

    /// Train with EM from a k-means++ initialization. Returns the model and
    /// the total training log-likelihood after every EM iteration (the
    /// sequence is non-decreasing).
    pub fn train(
        data: &[Vec<f64>],
        n_components: usize,
        seed: u64,
    ) -> Result<(GmmModel, Vec<f64>)> {
        if n_components == 0 {
            return Err(Error::config("mixture needs at least one component"));
        }
        if data.len() < n_components {
            return Err(Error::data(format!(
                "{} points cannot seed {n_components} mixture components",
                data.len()
            )));
        }
        let dim = data[0].len();
        if data.iter().any(|x| x.len() != dim) {
            return Err(Error::data("mixture training rows must share a dimension"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let centers = kmeans_pp_centers(data, n_components, &mut rng);
        let mut model = initial_model(data, &centers);

        let n = data.len() as f64;
        let mut history = Vec::new();
        let mut resp = vec![vec![0.0; n_components]; data.len()];
        for _ in 0..EM_MAX_ITERATIONS {
            // E step.
            let mut total_ll = 0.0;
            for (i, x) in data.iter().enumerate() {
                let per_comp: Vec<f64> = (0..n_components)
                    .map(|c| model.weights[c].max(f64::MIN_POSITIVE).ln()
                        + diag_log_density(x, &model.means[c], &model.vars[c]))
                    .collect();
                let lse = logsumexp(&per_comp);
                total_ll += lse;
                for c in 0..n_components {
                    resp[i][c] = (per_comp[c] - lse).exp();
                }
            }
            // M step.
            for c in 0..n_components {
                let weight_sum: f64 = resp.iter().map(|r| r[c]).sum();
                if weight_sum <= 0.0 {
                    // Collapsed component: keep its parameters, floor the
                    // weight; the final renormalization restores the sum.
                    model.weights[c] = f64::MIN_POSITIVE;
                    continue;
                }
                model.weights[c] = weight_sum / n;
                for d in 0..dim {
                    let m: f64 =
                        data.iter().zip(resp.iter()).map(|(x, r)| r[c] * x[d]).sum::<f64>()
                            / weight_sum;
                    model.means[c][d] = m;
                }
                for d in 0..dim {
                    let v: f64 = data
                        .iter()
                        .zip(resp.iter())
                        .map(|(x, r)| {
                            let diff = x[d] - model.means[c][d];
                            r[c] * diff * diff
                        })
                        .sum::<f64>()
                        / weight_sum;
                    model.vars[c][d] = v.max(GMM_VARIANCE_FLOOR);
                }
            }
            let wsum: f64 = model.weights.iter().sum();
            for w in model.weights.iter_mut() {
                *w /= wsum;
            }
            if let Some(&prev) = history.last() {
                if total_ll < prev - 1e-9 {
                    return Err(Error::numeric(format!(
                        "EM log-likelihood decreased from {prev} to {total_ll}"
                    )));
                }
                history.push(total_ll);
                if (total_ll - prev) / n < EM_MIN_GAIN {
                    break;
                }
            } else {
                history.push(total_ll);
            }
        }
        Ok((model, history))
    }
}

/// k-means++ seeding: first center uniform, later centers drawn with
/// probability proportional to squared distance from the nearest chosen
/// center.
fn kmeans_pp_centers<R: Rng>(data: &[Vec<f64>], k: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let mut centers = Vec::with_capacity(k);
    centers.push(data[rng.gen_range(0..data.len())].clone());
    let mut d2: Vec<f64> = data.iter().map(|x| squared_dist(x, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total <= 0.0 {
            // All points coincide with existing centers.
            data[rng.gen_range(0..data.len())].clone()
        } else {
            let mut target = rng.gen_range(0.0..total);
            let mut pick = data.len() - 1;
            for (i, &w) in d2.iter().enumerate() {
                if target < w {
                    pick = i;
                    break;
                }
                target -= w;
            }
            data[pick].clone()
        };
        for (i, x) in data.iter().enumerate() {
            d2[i] = d2[i].min(squared_dist(x, &next));
        }
        centers.push(next);
    }
    centers
}

fn squared_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Hard-assign points to the k-means++ centers and derive initial mixture
/// parameters; empty clusters fall back to the global statistics.
fn initial_model(data: &[Vec<f64>], centers: &[Vec<f64>]) -> GmmModel {
    let k = centers.len();
    let dim = data[0].len();
    let mut assign = vec![0usize; data.len()];
    for (i, x) in data.iter().enumerate() {
        let mut best = (f64::INFINITY, 0usize);
        for (c, center) in centers.iter().enumerate() {
            let d = squared_dist(x, center);
            if d < best.0 {
                best = (d, c);
            }
        }
        assign[i] = best.1;
    }
    let mut global_mean = vec![0.0; dim];
    for x in data {
        for (g, &v) in global_mean.iter_mut().zip(x.iter()) {
            *g += v;
        }
    }
    global_mean.iter_mut().for_each(|g| *g /= data.len() as f64);
    let mut global_var = vec![0.0; dim];
    for x in data {
        for d in 0..dim {
            let diff = x[d] - global_mean[d];
            global_var[d] += diff * diff;
        }
    }
    global_var
        .iter_mut()
        .for_each(|v| *v = (*v / data.len() as f64).max(GMM_VARIANCE_FLOOR));

    let mut weights = vec![0.0; k];
    let mut means = vec![vec![0.0; dim]; k];
    let mut vars = vec![vec![0.0; dim]; k];
    for c in 0..k {
        let members: Vec<&Vec<f64>> = data
            .iter()
            .zip(assign.iter())
            .filter(|(_, &a)| a == c)
            .map(|(x, _)| x)
            .collect();
        if members.is_empty() {
            weights[c] = 1.0 / data.len() as f64;
            means[c] = global_mean.clone();
            vars[c] = global_var.clone();
            continue;
        }
        weights[c] = members.len() as f64 / data.len() as f64;
        for d in 0..dim {
            means[c][d] = members.iter().map(|x| x[d]).sum::<f64>() / members.len() as f64;
        }
        for d in 0..dim {
            let v = members
                .iter()
                .map(|x| {
                    let diff = x[d] - means[c][d];
                    diff * diff
                })
                .sum::<f64>()
                / members.len() as f64;
            vars[c][d] = v.max(GMM_VARIANCE_FLOOR);
        }
    }
    let wsum: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= wsum);
    GmmModel { weights, means, vars }
}
