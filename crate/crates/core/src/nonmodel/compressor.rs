//! Band selection plus dynamic range compression: the envelope-oriented
//! preprocessor in front of the matched filter.

use crate::dsp;
use crate::error::{Error, Result};
use crate::nonmodel::reference::ReferenceSignal;

/// Levels below this amplitude count as silence on the dB scale.
pub const LEVEL_FLOOR_DB: f64 = -120.0;
/// The compression threshold sits at this percentile of the training level.
pub const THRESHOLD_PERCENTILE: f64 = 90.0;
/// Stride of the level track fed to the percentile estimate.
const LEVEL_DECIMATION: usize = 16;

/// Static-curve compressor above a dB threshold, with an asymmetric level
/// detector (fast attack, short sustain, slow release).
#[derive(Debug, Clone)]
pub struct CompressorConfig {
    pub threshold_db: f64,
    pub ratio: f64,
    pub attack_ms: f64,
    pub sustain_ms: f64,
    pub release_ms: f64,
}

impl CompressorConfig {
    pub fn standard(threshold_db: f64) -> CompressorConfig {
        CompressorConfig {
            threshold_db,
            ratio: 10.0,
            attack_ms: 5.0,
            sustain_ms: 10.0,
            release_ms: 50.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.ratio >= 1.0) {
            return Err(Error::config(format!("compressor ratio {} must be >= 1", self.ratio)));
        }
        for (name, v) in
            [("attack", self.attack_ms), ("sustain", self.sustain_ms), ("release", self.release_ms)]
        {
            if !(v > 0.0) {
                return Err(Error::config(format!("compressor {name} time {v} ms must be > 0")));
            }
        }
        Ok(())
    }
}

fn amp_to_db(a: f64) -> f64 {
    (20.0 * a.max(1e-6).log10()).max(LEVEL_FLOOR_DB)
}

/// Level-detector window: linear rise over the attack, flat sustain, linear
/// decay over the release. Normalized to unit sum so a steady level passes
/// through unchanged.
fn level_window(config: &CompressorConfig, sample_rate: f64) -> Vec<f64> {
    let n_attack = ((config.attack_ms * 1e-3 * sample_rate).round() as usize).max(1);
    let n_sustain = ((config.sustain_ms * 1e-3 * sample_rate).round() as usize).max(1);
    let n_release = ((config.release_ms * 1e-3 * sample_rate).round() as usize).max(1);
    let mut w = Vec::with_capacity(n_attack + n_sustain + n_release);
    for i in 0..n_attack {
        w.push((i + 1) as f64 / n_attack as f64);
    }
    w.extend(std::iter::repeat(1.0).take(n_sustain));
    for i in 0..n_release {
        w.push((n_release - i) as f64 / n_release as f64);
    }
    let sum: f64 = w.iter().sum();
    for v in &mut w {
        *v /= sum;
    }
    w
}

/// Smoothed rectified level of `x` in dB, one value per input sample.
/// The detector window is causal: the level at `n` only sees `x[..=n]`.
pub fn smoothed_level_db(x: &[f64], config: &CompressorConfig, sample_rate: f64) -> Vec<f64> {
    let rectified: Vec<f64> = x.iter().map(|v| v.abs()).collect();
    let w = level_window(config, sample_rate);
    let full = dsp::convolve_full(&rectified, &w);
    full[..x.len()].iter().map(|&l| amp_to_db(l)).collect()
}

/// Static compression curve on dB levels: identity below the threshold,
/// slope 1/ratio above it.
pub fn compressed_level_db(level_db: f64, threshold_db: f64, ratio: f64) -> f64 {
    if level_db <= threshold_db {
        level_db
    } else {
        threshold_db + (level_db - threshold_db) / ratio
    }
}

/// Apply the compressor: samples whose smoothed level exceeds the threshold
/// are attenuated so the level follows the static curve.
pub fn compress(x: &[f64], config: &CompressorConfig, sample_rate: f64) -> Result<Vec<f64>> {
    config.validate()?;
    let levels = smoothed_level_db(x, config, sample_rate);
    Ok(x.iter()
        .zip(levels.iter())
        .map(|(&v, &l)| {
            if l <= config.threshold_db {
                v
            } else {
                let gain_db = (compressed_level_db(l, config.threshold_db, config.ratio)) - l;
                v * 10f64.powf(gain_db / 20.0)
            }
        })
        .collect())
}

/// Threshold estimate from training audio: the 90th percentile of the
/// smoothed level track. The track is decimated before ranking; the level
/// moves far slower than the sample rate.
pub fn estimate_compressor_threshold(
    training: &[Vec<f64>],
    config: &CompressorConfig,
    sample_rate: f64,
) -> Result<f64> {
    let tracks: Vec<Vec<f64>> =
        training.iter().map(|x| decimated_level_db(x, config, sample_rate)).collect();
    let refs: Vec<&[f64]> = tracks.iter().map(|t| t.as_slice()).collect();
    threshold_from_levels(&refs)
}

/// Decimated smoothed level track, the form pooled for threshold estimation.
pub fn decimated_level_db(x: &[f64], config: &CompressorConfig, sample_rate: f64) -> Vec<f64> {
    smoothed_level_db(x, config, sample_rate)
        .into_iter()
        .step_by(LEVEL_DECIMATION)
        .collect()
}

/// Threshold over already-decimated level tracks: the 90th percentile of the
/// pooled values.
pub fn threshold_from_levels(levels: &[&[f64]]) -> Result<f64> {
    let pooled: Vec<f64> = levels.iter().flat_map(|t| t.iter().copied()).collect();
    if pooled.is_empty() {
        return Err(Error::data("compressor threshold needs training audio"));
    }
    Ok(dsp::percentile_nearest_rank(&pooled, THRESHOLD_PERCENTILE))
}

/// Envelope-oriented preprocessing: keep the reference's bands, then
/// compress. One output stream per reference version.
pub fn eop(
    x: &[f64],
    reference: &ReferenceSignal,
    threshold_db: f64,
    sample_rate: f64,
) -> Result<Vec<f64>> {
    let banded = dsp::band_mask_filter(x, sample_rate, &reference.bands());
    compress(&banded, &CompressorConfig::standard(threshold_db), sample_rate)
}
