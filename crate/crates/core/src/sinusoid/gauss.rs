//! Single diagonal Gaussians fitted per class and state (alarm sounding vs
//! not), scored as exact log-densities.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Variance floor shared with the mixture models.
pub const GAUSS_VARIANCE_FLOOR: f64 = 1e-6;

/// Class-model variances are additionally floored at this fraction of the
/// pooled both-state variance per dimension. A collapsed dimension otherwise
/// amplifies sub-resolution deviations into unbounded log-odds on clean data.
pub const GAUSS_RELATIVE_FLOOR: f64 = 1e-2;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DiagGaussian {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

/// Per-dimension mean and unfloored biased variance (divisor N).
fn moments(rows: &[&[f64]]) -> Result<(Vec<f64>, Vec<f64>)> {
    if rows.len() < 2 {
        return Err(Error::data(format!(
            "{} sample(s) cannot fit a Gaussian; need at least 2",
            rows.len()
        )));
    }
    let dim = rows[0].len();
    if rows.iter().any(|r| r.len() != dim) {
        return Err(Error::data("Gaussian fit rows must share a dimension"));
    }
    let n = rows.len() as f64;
    let mut mean = vec![0.0; dim];
    for r in rows {
        for (m, &v) in mean.iter_mut().zip(r.iter()) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; dim];
    for r in rows {
        for d in 0..dim {
            let diff = r[d] - mean[d];
            var[d] += diff * diff;
        }
    }
    var.iter_mut().for_each(|v| *v /= n);
    Ok((mean, var))
}

impl DiagGaussian {
    /// Maximum-likelihood fit (biased variance, divisor N), floored.
    /// Needs at least two rows so the variance is informed.
    pub fn fit(rows: &[&[f64]]) -> Result<DiagGaussian> {
        let (mean, mut var) = moments(rows)?;
        var.iter_mut().for_each(|v| *v = v.max(GAUSS_VARIANCE_FLOOR));
        Ok(DiagGaussian { mean, var })
    }

    /// Fit with a per-dimension floor on top of the absolute one.
    pub fn fit_with_floors(rows: &[&[f64]], floors: &[f64]) -> Result<DiagGaussian> {
        let (mean, mut var) = moments(rows)?;
        if floors.len() != var.len() {
            return Err(Error::data("per-dimension floors must match the dimension"));
        }
        for (v, &f) in var.iter_mut().zip(floors.iter()) {
            *v = v.max(f).max(GAUSS_VARIANCE_FLOOR);
        }
        Ok(DiagGaussian { mean, var })
    }

    pub fn log_density(&self, x: &[f64]) -> f64 {
        let mut acc = 0.0;
        for ((&xi, &mi), &vi) in x.iter().zip(self.mean.iter()).zip(self.var.iter()) {
            let d = xi - mi;
            acc += (2.0 * std::f64::consts::PI * vi).ln() + d * d / vi;
        }
        -0.5 * acc
    }
}

/// Alarm-sounding and not-sounding densities for one class.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GaussClassModel {
    pub alarm: DiagGaussian,
    pub non_alarm: DiagGaussian,
}

impl GaussClassModel {
    /// Fit both states from labeled frame features. Each state's variance is
    /// floored per dimension at `GAUSS_RELATIVE_FLOOR` of the pooled variance
    /// so one state's log-odds stay bounded by the overall feature spread.
    pub fn fit(features: &[Vec<f64>], labels: &[bool]) -> Result<GaussClassModel> {
        if features.len() != labels.len() {
            return Err(Error::data(format!(
                "{} features but {} labels",
                features.len(),
                labels.len()
            )));
        }
        let all: Vec<&[f64]> = features.iter().map(|f| f.as_slice()).collect();
        let (_, pooled_var) = moments(&all)?;
        let floors: Vec<f64> =
            pooled_var.iter().map(|v| v * GAUSS_RELATIVE_FLOOR).collect();
        let split = |want: bool| -> Vec<&[f64]> {
            features
                .iter()
                .zip(labels.iter())
                .filter(|(_, &l)| l == want)
                .map(|(f, _)| f.as_slice())
                .collect()
        };
        Ok(GaussClassModel {
            alarm: DiagGaussian::fit_with_floors(&split(true), &floors)?,
            non_alarm: DiagGaussian::fit_with_floors(&split(false), &floors)?,
        })
    }

    /// `(log p(x | alarm), log p(x | non-alarm))`.
    pub fn score(&self, x: &[f64]) -> (f64, f64) {
        (self.alarm.log_density(x), self.non_alarm.log_density(x))
    }
}
