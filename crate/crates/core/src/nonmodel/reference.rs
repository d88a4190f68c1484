//! Reference preparation: find the frequencies that carry an alarm and strip
//! everything else from a noisy reference recording.

use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::audio::{self, AudioBuffer};
use crate::dsp;
use crate::error::{Error, Result};

/// Half-width of the kept band around each relevant frequency, in Hz.
pub const BAND_HALF_WIDTH_HZ: f64 = 20.0;
/// Frame length of the relevance analysis.
pub const PSD_FRAME_S: f64 = 0.2;
/// Components weaker than the strongest peak by more than this are dropped.
pub const QUOTIENT_DB: f64 = 20.0;
/// Peak frequencies closer than this are one component.
pub const FREQ_MERGE_HZ: f64 = 25.0;

/// A cleaned alarm reference: the template of one class version's sounding
/// interval plus the frequencies it lives on.
#[derive(Debug, Clone)]
pub struct ReferenceSignal {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
    pub class_id: String,
    pub version_id: u32,
    pub relevant_freqs: Vec<f64>,
}

/// Sidecar metadata stored beside the reference WAV.
#[derive(Debug, Serialize, Deserialize)]
struct ReferenceMeta {
    class_id: String,
    version_id: u32,
    relevant_freqs: Vec<f64>,
}

impl ReferenceSignal {
    pub fn new(
        samples: Vec<f64>,
        sample_rate: u32,
        class_id: String,
        version_id: u32,
        relevant_freqs: Vec<f64>,
    ) -> Result<ReferenceSignal> {
        if samples.is_empty() {
            return Err(Error::data(format!("reference for {class_id} v{version_id} is empty")));
        }
        if samples.iter().map(|v| v * v).sum::<f64>() <= 0.0 {
            return Err(Error::data(format!(
                "reference for {class_id} v{version_id} carries no energy"
            )));
        }
        if relevant_freqs.is_empty() {
            return Err(Error::data(format!(
                "reference for {class_id} v{version_id} has no relevant frequencies"
            )));
        }
        Ok(ReferenceSignal { samples, sample_rate, class_id, version_id, relevant_freqs })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn energy(&self) -> f64 {
        self.samples.iter().map(|v| v * v).sum()
    }

    /// Kept bands around the relevant frequencies.
    pub fn bands(&self) -> Vec<(f64, f64)> {
        bands_for(&self.relevant_freqs)
    }

    /// Store as WAV plus a JSON sidecar named after the WAV.
    pub fn save(&self, wav_path: &Path) -> Result<()> {
        let buf = AudioBuffer::new(self.samples.clone(), self.sample_rate)?;
        audio::write_wav(&buf, wav_path)?;
        let meta = ReferenceMeta {
            class_id: self.class_id.clone(),
            version_id: self.version_id,
            relevant_freqs: self.relevant_freqs.clone(),
        };
        let text = serde_json::to_string_pretty(&meta)
            .map_err(|e| Error::data(format!("reference metadata serialize: {e}")))?;
        std::fs::write(wav_path.with_extension("json"), text)?;
        Ok(())
    }

    pub fn load(wav_path: &Path) -> Result<ReferenceSignal> {
        let buf = audio::read_wav(wav_path)?;
        let meta_path = wav_path.with_extension("json");
        let text = std::fs::read_to_string(&meta_path)?;
        let meta: ReferenceMeta = serde_json::from_str(&text).map_err(|e| {
            Error::data(format!("malformed reference metadata {}: {e}", meta_path.display()))
        })?;
        ReferenceSignal::new(
            buf.samples,
            buf.sample_rate,
            meta.class_id,
            meta.version_id,
            meta.relevant_freqs,
        )
    }
}

pub fn bands_for(freqs: &[f64]) -> Vec<(f64, f64)> {
    freqs
        .iter()
        .map(|&f| ((f - BAND_HALF_WIDTH_HZ).max(0.0), f + BAND_HALF_WIDTH_HZ))
        .collect()
}

/// Frequencies whose spectral peaks come within `quotient_db` of the global
/// strongest peak. The signal is cut into half-overlapped `PSD_FRAME_S`
/// frames so consecutive-tone alarms expose every tone; all per-frame
/// periodograms share one normalization, the maximum over all frames.
pub fn estimate_relevant_freqs(noisy_ref: &AudioBuffer, quotient_db: f64) -> Vec<f64> {
    let fs = noisy_ref.sample_rate as f64;
    let n = noisy_ref.samples.len();
    if n < 4 {
        return Vec::new();
    }
    let frame_len = (((PSD_FRAME_S * fs).round() as usize).max(16)).min(n);
    let hop = (frame_len / 2).max(1);
    let frames = audio::frame_signal(&noisy_ref.samples, frame_len, hop);
    let psds: Vec<Vec<f64>> = frames.iter().map(|f| dsp::periodogram(f)).collect();
    let global_max = psds.iter().flatten().fold(0.0f64, |m, &v| m.max(v));
    if global_max <= 0.0 {
        return Vec::new();
    }
    let floor = global_max * 10f64.powf(-quotient_db / 10.0);
    let bin_hz = fs / frame_len as f64;

    let mut candidates: Vec<(f64, f64)> = Vec::new();
    for psd in &psds {
        for bin in dsp::local_maxima(psd) {
            if psd[bin] >= floor {
                candidates.push((bin as f64 * bin_hz, psd[bin]));
            }
        }
    }
    // Strongest first; a candidate near an already kept frequency is the
    // same component seen in another frame.
    candidates.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.partial_cmp(&b.0).unwrap()));
    let mut kept: Vec<f64> = Vec::new();
    for (f, _) in candidates {
        if kept.iter().all(|&k| (k - f).abs() >= FREQ_MERGE_HZ) {
            kept.push(f);
        }
    }
    kept.sort_by(|a, b| a.partial_cmp(b).unwrap());
    kept
}

/// Zero-phase band selection: keep `BAND_HALF_WIDTH_HZ` around each relevant
/// frequency, drop everything else.
pub fn clean_reference(
    noisy_ref: &AudioBuffer,
    relevant_freqs: &[f64],
    class_id: &str,
    version_id: u32,
) -> Result<ReferenceSignal> {
    if relevant_freqs.is_empty() {
        return Err(Error::data(format!(
            "cannot clean reference for {class_id} v{version_id}: no relevant frequencies"
        )));
    }
    let bands = bands_for(relevant_freqs);
    let filtered =
        dsp::band_mask_filter(&noisy_ref.samples, noisy_ref.sample_rate as f64, &bands);
    ReferenceSignal::new(
        filtered,
        noisy_ref.sample_rate,
        class_id.to_string(),
        version_id,
        relevant_freqs.to_vec(),
    )
}
