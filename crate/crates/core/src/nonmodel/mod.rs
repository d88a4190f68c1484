//! Non-model alarm detector: band selection and dynamic compression, a
//! matched filter against a clean reference, a morphological envelope, and a
//! smoothed threshold decision. No trained parameters; the only data it
//! needs is one clean reference per alarm version and a decision threshold.
//!
//! Stages, in stream order:
//!
//! 1. [`compressor::eop`]: keep the reference's frequency bands, compress
//!    everything the level detector sees above a training-set percentile.
//! 2. [`matched::matched_filter`]: energy-normalized correlation with the
//!    reference; 1.0 means "the reference is sitting right here".
//! 3. [`morphology::morph_envelope`]: rectify and close with one period of
//!    the lowest alarm component, normalize by the mode.
//! 4. [`decision`]: smooth with the system's own response to the clean
//!    reference and pick peaks above a threshold, one per alarm period.

pub mod compressor;
pub mod decision;
pub mod matched;
pub mod morphology;
pub mod reference;

pub use compressor::{
    compress, compressed_level_db, decimated_level_db, eop, estimate_compressor_threshold,
    smoothed_level_db, threshold_from_levels, CompressorConfig, LEVEL_FLOOR_DB,
    THRESHOLD_PERCENTILE,
};
pub use decision::{
    candidate_peaks, decide, estimate_threshold_cv, estimate_threshold_oracle, onset_guard_s,
    oracle_threshold_from_peaks, smooth_envelope, DecisionThreshold, SmoothingFir, ThresholdMode,
    MIN_ONSET_SPACING_PERIODS,
};
pub use matched::matched_filter;
pub use morphology::{
    closing, mode_value, morph_envelope, EnvelopeTrack, StructuringElement, MODE_HISTOGRAM_BINS,
};
pub use reference::{
    bands_for, clean_reference, estimate_relevant_freqs, ReferenceSignal, BAND_HALF_WIDTH_HZ,
    FREQ_MERGE_HZ, PSD_FRAME_S, QUOTIENT_DB,
};

use crate::dsp;
use crate::error::Result;
use crate::registry::Registry;
use crate::synth;

/// Build a clean reference for a registry alarm version: one rendered
/// signal interval with the component frequencies attached.
pub fn reference_from_registry(
    registry: &Registry,
    class_id: &str,
    version_id: u32,
) -> Result<ReferenceSignal> {
    let class = registry.class(class_id)?;
    let version = class.versions.get(version_id as usize).ok_or_else(|| {
        crate::error::Error::config(format!("class {class_id} has no version {version_id}"))
    })?;
    let samples = synth::render_signal_interval(version, registry.sample_rate);
    ReferenceSignal::new(
        samples,
        registry.sample_rate,
        class_id.to_string(),
        version_id,
        version.frequencies(),
    )
}

/// Structuring element matched to a reference: one period of its lowest
/// component frequency.
pub fn structuring_element_for(
    reference: &ReferenceSignal,
    sample_rate: f64,
) -> Result<StructuringElement> {
    let f0 = reference.relevant_freqs.iter().cloned().fold(f64::INFINITY, f64::min);
    StructuringElement::for_fundamental(sample_rate, f0)
}

/// EOP, matched filter, and morphological envelope for one input stream and
/// one reference version.
pub fn envelope_for(
    x: &[f64],
    reference: &ReferenceSignal,
    compressor_threshold_db: f64,
    sample_rate: f64,
) -> Result<EnvelopeTrack> {
    let processed = eop(x, reference, compressor_threshold_db, sample_rate)?;
    let correlation = matched_filter(&processed, reference)?;
    let se = structuring_element_for(reference, sample_rate)?;
    Ok(morph_envelope(&correlation, se))
}

/// Decision-stage smoothing kernel for a reference: the envelope stage's
/// response to the reference itself. The matched filter of the reference
/// against its own padded copy is its autocorrelation; rectifying and
/// closing it gives the envelope the detector produces around one true
/// onset.
pub fn smoothing_fir_for(reference: &ReferenceSignal, sample_rate: f64) -> Result<SmoothingFir> {
    let a = &reference.samples;
    let reversed: Vec<f64> = a.iter().rev().cloned().collect();
    let energy = reference.energy();
    let autocorr: Vec<f64> =
        dsp::convolve_full(a, &reversed).into_iter().map(|v| v / energy).collect();
    let rectified: Vec<f64> = autocorr.iter().map(|v| v.abs()).collect();
    let se = structuring_element_for(reference, sample_rate)?;
    let closed = closing(&rectified, se);
    SmoothingFir::from_response(&closed)
}
