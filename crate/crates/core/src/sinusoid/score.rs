//! Per-bin sinusoid/noise log-likelihoods and the per-class frame feature
//! assembled from them.

use crate::error::{Error, Result};
use crate::registry::AlarmClassSpec;
use crate::seeding;
use crate::sinusoid::gmm::GmmModel;
use crate::sinusoid::peak::PeakFeature;

/// Half-width of the frequency interval searched around every class
/// component, in Hz. Also the tolerance that merges component frequencies
/// across versions into one interval.
pub const INTEREST_HALF_WIDTH_HZ: f64 = 20.0;
/// Non-peak bins score this far below the weakest peak of the frame.
pub const FLOOR_DROP: f64 = 10.0;
/// Floor used when a frame has no peaks at all.
pub const NO_PEAK_FLOOR: f64 = -100.0;

/// One peak with its mixture-model scores.
#[derive(Debug, Clone)]
pub struct ScoredPeak {
    pub bin: usize,
    pub ll_sin: f64,
    pub ll_noise: f64,
    pub magnitude: f64,
}

/// Sparse scored spectrum of one frame: explicit values at the peaks, an
/// implied band of filler values just under `floor_ll` everywhere else.
/// Fillers are drawn per (frame, bin) by a stateless hash, so their values do
/// not depend on evaluation order.
#[derive(Debug, Clone)]
pub struct ScoredSpectrum {
    pub frame_index: usize,
    /// One `FLOOR_DROP` below the weakest peak log-likelihood of the frame.
    pub floor_ll: f64,
    /// Sorted by bin.
    pub peaks: Vec<ScoredPeak>,
}

impl ScoredSpectrum {
    /// Filler log-likelihood for a non-peak bin, uniform in
    /// `[floor_ll - 1, floor_ll]`. `model_tag` 0 is the sinusoid model,
    /// 1 the noise model.
    pub fn filler_ll(&self, bin: usize, seed: u64, model_tag: u64) -> f64 {
        self.floor_ll
            - seeding::hash_uniform(seed, &[self.frame_index as u64, bin as u64, model_tag])
    }
}

/// Score one frame's peaks under both mixture models.
pub fn score_spectrum(
    peaks: &[PeakFeature],
    frame_index: usize,
    sin_model: &GmmModel,
    noise_model: &GmmModel,
) -> ScoredSpectrum {
    let mut scored: Vec<ScoredPeak> = peaks
        .iter()
        .map(|p| {
            let x = p.model_feature();
            ScoredPeak {
                bin: p.bin,
                ll_sin: sin_model.log_likelihood(&x),
                ll_noise: noise_model.log_likelihood(&x),
                magnitude: p.magnitude,
            }
        })
        .collect();
    scored.sort_by_key(|p| p.bin);
    let weakest = scored
        .iter()
        .flat_map(|p| [p.ll_sin, p.ll_noise])
        .fold(f64::INFINITY, f64::min);
    let floor_ll = if weakest.is_finite() { weakest - FLOOR_DROP } else { NO_PEAK_FLOOR };
    ScoredSpectrum { frame_index, floor_ll, peaks: scored }
}

/// Inclusive fine-grid bin intervals around a class's component frequencies.
/// Component frequencies within `INTEREST_HALF_WIDTH_HZ` of each other across
/// versions share one interval.
pub fn class_intervals(
    class: &AlarmClassSpec,
    sample_rate: u32,
    fft_len: usize,
) -> Result<Vec<(usize, usize)>> {
    let bin_hz = sample_rate as f64 / fft_len as f64;
    let n_bins = fft_len / 2;
    let mut out = Vec::new();
    for f in class.frequency_union(INTEREST_HALF_WIDTH_HZ) {
        let lo = ((f - INTEREST_HALF_WIDTH_HZ) / bin_hz).ceil().max(0.0) as usize;
        let hi_raw = ((f + INTEREST_HALF_WIDTH_HZ) / bin_hz).floor() as usize;
        let hi = hi_raw.min(n_bins - 1);
        if lo > hi {
            return Err(Error::config(format!(
                "class {}: no spectrum bins inside {f} Hz +-{INTEREST_HALF_WIDTH_HZ} Hz",
                class.id
            )));
        }
        out.push((lo, hi));
    }
    Ok(out)
}

/// Build the class feature of one frame: for every interval, the bin with the
/// highest sinusoid log-likelihood contributes its two log-likelihoods and
/// its magnitude. Layout is `[ll_sin per interval, ll_noise per interval,
/// normalized magnitude per interval]`; the magnitudes are divided by their
/// sum (uniform if the sum is zero), which removes overall gain.
pub fn assemble_frame_feature(
    scored: &ScoredSpectrum,
    mags: &[f64],
    intervals: &[(usize, usize)],
    seed: u64,
) -> Vec<f64> {
    let n = intervals.len();
    let mut ll_sin = Vec::with_capacity(n);
    let mut ll_noise = Vec::with_capacity(n);
    let mut raw_mag = Vec::with_capacity(n);
    for &(lo, hi) in intervals {
        let best_peak = scored
            .peaks
            .iter()
            .filter(|p| p.bin >= lo && p.bin <= hi)
            .max_by(|a, b| a.ll_sin.partial_cmp(&b.ll_sin).unwrap());
        match best_peak {
            Some(p) => {
                ll_sin.push(p.ll_sin);
                ll_noise.push(p.ll_noise);
                raw_mag.push(p.magnitude);
            }
            None => {
                // Peak log-likelihoods sit FLOOR_DROP above the filler band,
                // so a filler wins only when the interval holds no peak.
                let (best_bin, best_ll) = (lo..=hi)
                    .map(|b| (b, scored.filler_ll(b, seed, 0)))
                    .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
                    .expect("intervals are non-empty");
                ll_sin.push(best_ll);
                ll_noise.push(scored.filler_ll(best_bin, seed, 1));
                raw_mag.push(mags[best_bin]);
            }
        }
    }
    let sum: f64 = raw_mag.iter().sum();
    let mags_norm: Vec<f64> = if sum > 0.0 {
        raw_mag.iter().map(|m| m / sum).collect()
    } else {
        vec![1.0 / n as f64; n]
    };
    let mut feature = ll_sin;
    feature.extend(ll_noise);
    feature.extend(mags_norm);
    feature
}
