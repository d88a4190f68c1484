//! Network input construction: generic spectral variants (raw, uniformly
//! max-pooled, mel max-pooled) and the class-specific frequency-bin picks,
//! plus time-context stacking.

use crate::audio::SpectralFrame;
use crate::error::{Error, Result};
use crate::nn::layer::mel_supports;
use crate::registry::AlarmClassSpec;

/// Bins kept around every class frequency (center plus halo on both sides).
pub const CLASS_INPUT_HALO: usize = 2;
/// Time-context length for the time-weighting layers, in frames.
pub const TIME_CONTEXT: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GenericVariant {
    /// Raw 1024-bin log spectrum.
    Fc1024,
    /// Uniform max pooling with width 4 down to 256 values.
    Ump256,
    /// Max over each of 60 mel triangle supports.
    Msmp60,
}

impl GenericVariant {
    pub fn input_dim(&self) -> usize {
        match self {
            GenericVariant::Fc1024 => 1024,
            GenericVariant::Ump256 => 256,
            GenericVariant::Msmp60 => 60,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            GenericVariant::Fc1024 => "fc1024",
            GenericVariant::Ump256 => "ump256",
            GenericVariant::Msmp60 => "msmp60",
        }
    }

    pub fn parse(name: &str) -> Result<GenericVariant> {
        match name {
            "fc1024" => Ok(GenericVariant::Fc1024),
            "ump256" => Ok(GenericVariant::Ump256),
            "msmp60" => Ok(GenericVariant::Msmp60),
            other => Err(Error::config(format!(
                "unknown generic input variant '{other}' (expected fc1024, ump256, msmp60)"
            ))),
        }
    }
}

/// Generic per-frame network input from a 1024-bin log spectrum.
pub fn build_generic_input(frame: &SpectralFrame, variant: GenericVariant) -> Vec<f64> {
    let mags = &frame.log_magnitudes;
    match variant {
        GenericVariant::Fc1024 => mags.clone(),
        GenericVariant::Ump256 => mags
            .chunks(4)
            .map(|c| c.iter().cloned().fold(f64::NEG_INFINITY, f64::max))
            .collect(),
        GenericVariant::Msmp60 => {
            let fs = frame.bin_hz * 2.0 * mags.len() as f64;
            mel_supports(mags.len(), 60, fs)
                .into_iter()
                .map(|(s, e)| mags[s..e].iter().cloned().fold(f64::NEG_INFINITY, f64::max))
                .collect()
        }
    }
}

/// Spectrum bin indices for a class-specific input: every frequency of every
/// version maps to its nearest bin, widened by the halo, deduplicated and
/// sorted. `n_bins` is the half-spectrum length (bin k at k*fs/(2*n_bins)).
pub fn class_input_bins(
    class: &AlarmClassSpec,
    sample_rate: f64,
    n_bins: usize,
    halo: usize,
) -> Result<Vec<usize>> {
    let fft_len = 2 * n_bins;
    let mut bins = Vec::new();
    for version in &class.versions {
        for f in version.frequencies() {
            if f >= sample_rate / 2.0 {
                return Err(Error::config(format!(
                    "class {}: frequency {f} Hz is not below the Nyquist limit {}",
                    class.id,
                    sample_rate / 2.0
                )));
            }
            let center = (f * fft_len as f64 / sample_rate).round() as usize;
            if center >= n_bins {
                return Err(Error::config(format!(
                    "class {}: frequency {f} Hz rounds past the spectrum edge",
                    class.id
                )));
            }
            let lo = center.saturating_sub(halo);
            let hi = (center + halo).min(n_bins - 1);
            bins.extend(lo..=hi);
        }
    }
    bins.sort_unstable();
    bins.dedup();
    Ok(bins)
}

/// Class-specific per-frame input: log magnitudes at the picked bins.
pub fn build_class_specific_input(frame: &SpectralFrame, bins: &[usize]) -> Vec<f64> {
    bins.iter().map(|&b| frame.log_magnitudes[b]).collect()
}

/// Stack a centered context of `context` frames around `t`, edge-replicated,
/// concatenated frame by frame (time-major). `context` must be odd.
pub fn stack_context(per_frame: &[Vec<f64>], t: usize, context: usize) -> Vec<f64> {
    assert!(context % 2 == 1, "context length must be odd");
    assert!(!per_frame.is_empty());
    let half = context / 2;
    let n = per_frame.len();
    let dim = per_frame[0].len();
    let mut out = Vec::with_capacity(context * dim);
    for offset in 0..context {
        let idx = (t + offset).saturating_sub(half).min(n - 1);
        out.extend_from_slice(&per_frame[idx]);
    }
    out
}
