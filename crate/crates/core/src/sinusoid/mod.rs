//! Sinusoid-evidence features.
//!
//! A frame's padded spectrum is reduced to local peaks; each peak carries a
//! peak-normalized shape and a phase-advance deviation. Two mixture models,
//! trained once on synthetic tones in noise, score every peak as sinusoid or
//! noise. Around each alarm component frequency the strongest sinusoid
//! evidence is collected into a small per-class frame feature, modeled by one
//! diagonal Gaussian per state. A log-mel flux feature serves as the
//! baseline.

pub mod gauss;
pub mod gmm;
pub mod lfbe;
pub mod peak;
pub mod score;

pub use gauss::{DiagGaussian, GaussClassModel, GAUSS_RELATIVE_FLOOR, GAUSS_VARIANCE_FLOOR};
pub use gmm::{GmmModel, EM_MAX_ITERATIONS, EM_MIN_GAIN, GMM_VARIANCE_FLOOR};
pub use lfbe::{ff_lfbe_features, frequency_flux, mel_log_energies, mel_triangle_weights, N_MEL_FILTERS};
pub use peak::{extract_peak_features, wrap_phase, PeakFeature, SHAPE_HALF};
pub use score::{
    assemble_frame_feature, class_intervals, score_spectrum, ScoredPeak, ScoredSpectrum,
    FLOOR_DROP, INTEREST_HALF_WIDTH_HZ, NO_PEAK_FLOOR,
};

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::audio::{FRAME_HOP, FRAME_LEN};
use crate::dsp;
use crate::error::{Error, Result};
use crate::seeding;

/// Fine-grid FFT length: one frame plus equal zero padding.
pub const FINE_FFT_LEN: usize = 2 * FRAME_LEN;
/// Mixture size of the sinusoid and noise peak models.
pub const N_GMM_COMPONENTS: usize = 32;
/// Signal-to-noise ratios of the synthetic training tones, in dB.
pub const TRAIN_SNRS_DB: [f64; 5] = [0.0, 5.0, 10.0, 20.0, f64::INFINITY];
/// Peak exemplars gathered per class for the standard training run.
pub const TRAIN_MIN_PEAKS_PER_CLASS: usize = 10000;
pub const MODELS_FORMAT_VERSION: u32 = 1;

/// Noise exemplars keep this many bins away from the training tone.
const NOISE_GUARD_BINS: usize = 8;
/// Noise peaks harvested per training frame.
const NOISE_PEAKS_PER_FRAME: usize = 2;

/// The two peak mixture models, trained once per toolkit run and shareable
/// across classes and folds.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SinusoidModels {
    pub format_version: u32,
    pub sample_rate: u32,
    pub sin: GmmModel,
    pub noise: GmmModel,
}

impl SinusoidModels {
    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(self)
            .map_err(|e| Error::data(format!("model serialize: {e}")))?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<SinusoidModels> {
        let text = std::fs::read_to_string(path)?;
        let models: SinusoidModels = serde_json::from_str(&text)
            .map_err(|e| Error::data(format!("malformed model file {}: {e}", path.display())))?;
        if models.format_version != MODELS_FORMAT_VERSION {
            return Err(Error::unsupported(format!(
                "model file format {} in {}; this build reads {}",
                models.format_version,
                path.display(),
                MODELS_FORMAT_VERSION
            )));
        }
        Ok(models)
    }
}

/// Train the sinusoid and noise peak models on synthetic tones in white
/// noise at the standard SNRs.
pub fn train_sinusoid_models(sample_rate: u32, seed: u64) -> Result<SinusoidModels> {
    train_sinusoid_models_with(sample_rate, seed, TRAIN_MIN_PEAKS_PER_CLASS)
}

/// As `train_sinusoid_models`, with the per-class exemplar quota exposed.
pub fn train_sinusoid_models_with(
    sample_rate: u32,
    seed: u64,
    min_peaks_per_class: usize,
) -> Result<SinusoidModels> {
    let (sin_feats, noise_feats) =
        harvest_training_peaks(sample_rate, seed, min_peaks_per_class)?;
    let (sin, _) =
        GmmModel::train(&sin_feats, N_GMM_COMPONENTS, seeding::derive_seed(seed, "gmm-sin", 0))?;
    let (noise, _) = GmmModel::train(
        &noise_feats,
        N_GMM_COMPONENTS,
        seeding::derive_seed(seed, "gmm-noise", 0),
    )?;
    Ok(SinusoidModels { format_version: MODELS_FORMAT_VERSION, sample_rate, sin, noise })
}

/// Synthesize tone-in-noise frame pairs, cycling through the training SNRs,
/// until both exemplar quotas are met. The peak nearest the tone (within one
/// fine bin) is a sinusoid exemplar; peaks at least `NOISE_GUARD_BINS` away
/// are noise exemplars, skipped for the noise-free SNR.
fn harvest_training_peaks(
    sample_rate: u32,
    seed: u64,
    min_peaks_per_class: usize,
) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    let fs = sample_rate as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seeding::derive_seed(seed, "peak-harvest", 0));
    let mut sin_feats: Vec<Vec<f64>> = Vec::new();
    let mut noise_feats: Vec<Vec<f64>> = Vec::new();
    let mut snr_idx = 0usize;
    let max_pairs = 40 * min_peaks_per_class.max(1);
    let mut pairs = 0usize;
    while sin_feats.len() < min_peaks_per_class || noise_feats.len() < min_peaks_per_class {
        pairs += 1;
        if pairs > max_pairs {
            return Err(Error::numeric(format!(
                "peak harvest stuck after {pairs} frame pairs: {} sinusoid, {} noise exemplars",
                sin_feats.len(),
                noise_feats.len()
            )));
        }
        let snr_db = TRAIN_SNRS_DB[snr_idx % TRAIN_SNRS_DB.len()];
        snr_idx += 1;

        let freq = rng.gen_range(100.0..fs * 0.45);
        let amp = rng.gen_range(0.05..1.0);
        let phase = rng.gen_range(0.0..2.0 * std::f64::consts::PI);
        let noise_sigma = if snr_db.is_finite() {
            let signal_power = amp * amp / 2.0;
            (signal_power / 10f64.powf(snr_db / 10.0)).sqrt()
        } else {
            0.0
        };
        let n = FRAME_LEN + FRAME_HOP;
        let signal: Vec<f64> = (0..n)
            .map(|i| {
                let tone = amp * (2.0 * std::f64::consts::PI * freq * i as f64 / fs + phase).sin();
                let noise: f64 = StandardNormal.sample(&mut rng);
                tone + noise_sigma * noise
            })
            .collect();

        let (_, phases0) = dsp::spectrum_mag_phase(&signal[..FRAME_LEN], FINE_FFT_LEN);
        let (mags1, phases1) =
            dsp::spectrum_mag_phase(&signal[FRAME_HOP..FRAME_HOP + FRAME_LEN], FINE_FFT_LEN);
        let peaks =
            extract_peak_features(&mags1, &phases1, Some(&phases0), FRAME_HOP, FINE_FFT_LEN);
        let tone_bin = (freq * FINE_FFT_LEN as f64 / fs).round() as usize;

        if sin_feats.len() < min_peaks_per_class {
            let tone_peak = peaks
                .iter()
                .filter(|p| p.bin.abs_diff(tone_bin) <= 1)
                .max_by(|a, b| a.magnitude.partial_cmp(&b.magnitude).unwrap());
            if let Some(p) = tone_peak {
                sin_feats.push(p.model_feature());
            }
        }
        if noise_sigma > 0.0 && noise_feats.len() < min_peaks_per_class {
            let eligible: Vec<&PeakFeature> =
                peaks.iter().filter(|p| p.bin.abs_diff(tone_bin) >= NOISE_GUARD_BINS).collect();
            let mut picks: Vec<&&PeakFeature> = eligible
                .choose_multiple(&mut rng, NOISE_PEAKS_PER_FRAME.min(eligible.len()))
                .collect();
            picks.sort_by_key(|p| p.bin);
            for p in picks {
                noise_feats.push(p.model_feature());
            }
        }
    }
    Ok((sin_feats, noise_feats))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::registry::Registry;
    use crate::temporal;
    use std::sync::OnceLock;

    const TEST_QUOTA: usize = 1200;
    const TEST_SEED: u64 = 7;

    fn shared_models() -> &'static SinusoidModels {
        static MODELS: OnceLock<SinusoidModels> = OnceLock::new();
        MODELS.get_or_init(|| train_sinusoid_models_with(24000, TEST_SEED, TEST_QUOTA).unwrap())
    }

    #[test]
    fn harvest_meets_quotas_for_both_classes() {
        let (sin, noise) = harvest_training_peaks(24000, 3, 200).unwrap();
        assert!(sin.len() >= 200);
        assert!(noise.len() >= 200);
        assert!(sin.iter().all(|f| f.len() == 7));
        assert!(noise.iter().all(|f| f.len() == 7));
        // Phase deviations: tones stay inside the off-bin drift bound of a
        // stationary sinusoid, noise spreads over the whole circle.
        let drift_bound = std::f64::consts::PI * FRAME_HOP as f64 / FINE_FFT_LEN as f64;
        let sin_inside =
            sin.iter().filter(|f| f[6].abs() <= drift_bound * 1.2).count() as f64 / sin.len() as f64;
        let noise_outside = noise.iter().filter(|f| f[6].abs() > drift_bound).count() as f64
            / noise.len() as f64;
        assert!(sin_inside > 0.9, "sinusoid drift fraction {sin_inside}");
        assert!(noise_outside > 0.3, "noise spread fraction {noise_outside}");
    }

    #[test]
    fn models_separate_held_out_peaks() {
        let models = shared_models();
        let (sin_held, noise_held) = harvest_training_peaks(24000, TEST_SEED + 1, 400).unwrap();
        let mean_ll = |model: &GmmModel, feats: &[Vec<f64>]| -> f64 {
            feats.iter().map(|f| model.log_likelihood(f)).sum::<f64>() / feats.len() as f64
        };
        let sin_under_sin = mean_ll(&models.sin, &sin_held);
        let sin_under_noise = mean_ll(&models.noise, &sin_held);
        let noise_under_noise = mean_ll(&models.noise, &noise_held);
        let noise_under_sin = mean_ll(&models.sin, &noise_held);
        assert!(
            sin_under_sin > sin_under_noise + 0.5,
            "sinusoid exemplars: {sin_under_sin} vs {sin_under_noise}"
        );
        assert!(
            noise_under_noise > noise_under_sin + 0.5,
            "noise exemplars: {noise_under_noise} vs {noise_under_sin}"
        );
    }

    #[test]
    fn training_is_deterministic_per_seed() {
        let a = train_sinusoid_models_with(24000, 11, 300).unwrap();
        let b = train_sinusoid_models_with(24000, 11, 300).unwrap();
        assert_eq!(a.sin.means, b.sin.means);
        assert_eq!(a.noise.weights, b.noise.weights);
        let c = train_sinusoid_models_with(24000, 12, 300).unwrap();
        assert_ne!(a.sin.means, c.sin.means);
    }

    #[test]
    fn model_file_round_trip_and_version_gate() {
        let models = shared_models();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sinusoid_models.json");
        models.save(&path).unwrap();
        let back = SinusoidModels::load(&path).unwrap();
        assert_eq!(back.sample_rate, models.sample_rate);
        let probe = vec![0.3, 0.1, 0.6, 0.5, 0.2, 0.1, 0.05];
        assert_eq!(back.sin.log_likelihood(&probe), models.sin.log_likelihood(&probe));
        assert_eq!(back.noise.log_likelihood(&probe), models.noise.log_likelihood(&probe));

        let mut bumped = models.clone();
        bumped.format_version = MODELS_FORMAT_VERSION + 1;
        bumped.save(&path).unwrap();
        let err = SinusoidModels::load(&path).unwrap_err();
        assert!(matches!(err, Error::Unsupported(_)));
        assert_eq!(err.exit_code(), 3);
    }

    /// End-to-end frame pipeline on noise-free alarm frames vs noise frames:
    /// features assembled from peak scores, one Gaussian per state, EER of
    /// the log-likelihood ratio stays under 5 percent.
    #[test]
    fn frame_pipeline_separates_clean_alarm_from_noise() {
        let fs = 24000u32;
        let models = shared_models();
        let reg = Registry::default_synthetic();
        let c7 = reg.class("c7").unwrap();
        let intervals = class_intervals(c7, fs, FINE_FFT_LEN).unwrap();

        let features_of = |samples: &[f64], seed: u64| -> Vec<Vec<f64>> {
            let frames = crate::audio::frame_signal(samples, FRAME_LEN, FRAME_HOP);
            let mut prev_phases: Option<Vec<f64>> = None;
            let mut out = Vec::new();
            for (t, frame) in frames.iter().enumerate() {
                let (mags, phases) = dsp::spectrum_mag_phase(frame, FINE_FFT_LEN);
                let peaks = extract_peak_features(
                    &mags,
                    &phases,
                    prev_phases.as_deref(),
                    FRAME_HOP,
                    FINE_FFT_LEN,
                );
                let scored = score_spectrum(&peaks, t, &models.sin, &models.noise);
                out.push(assemble_frame_feature(&scored, &mags, &intervals, seed));
                prev_phases = Some(phases);
            }
            out
        };

        let n = FRAME_LEN + 60 * FRAME_HOP;
        let mut rng = ChaCha8Rng::seed_from_u64(123);
        let tone: Vec<f64> = (0..n)
            .map(|i| {
                let jitter: f64 = StandardNormal.sample(&mut rng);
                0.4 * (2.0 * std::f64::consts::PI * 960.0 * i as f64 / fs as f64).sin()
                    + 1e-4 * jitter
            })
            .collect();
        let noise: Vec<f64> = (0..n)
            .map(|_| {
                let v: f64 = StandardNormal.sample(&mut rng);
                0.4 * v
            })
            .collect();

        let alarm_feats = features_of(&tone, 1);
        let noise_feats = features_of(&noise, 2);
        let half = alarm_feats.len() / 2;

        let mut train_feats: Vec<Vec<f64>> = Vec::new();
        let mut train_labels: Vec<bool> = Vec::new();
        for f in &alarm_feats[..half] {
            train_feats.push(f.clone());
            train_labels.push(true);
        }
        for f in &noise_feats[..half] {
            train_feats.push(f.clone());
            train_labels.push(false);
        }
        let class_model = GaussClassModel::fit(&train_feats, &train_labels).unwrap();

        let mut scores = Vec::new();
        let mut labels = Vec::new();
        for f in &alarm_feats[half..] {
            let (la, ln) = class_model.score(f);
            scores.push(la - ln);
            labels.push(true);
        }
        for f in &noise_feats[half..] {
            let (la, ln) = class_model.score(f);
            scores.push(la - ln);
            labels.push(false);
        }
        let (_, eer) = temporal::eer_threshold(&scores, &labels).unwrap();
        assert!(eer <= 0.05, "clean-condition EER {eer}");
    }
}
