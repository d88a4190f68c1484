//! Scenario synthesis: renders registry alarms, embeds them in noise at a
//! controlled per-band SNR, and emits sample-accurate annotations. The
//! synthesizer is the ground-truth source for every benchmark in the toolkit.

use crate::audio::{self, Annotation, AudioBuffer};
use crate::dsp;
use crate::error::{Error, Result};
use crate::registry::{AlarmVersionSpec, Registry};
use crate::seeding::derive_seed;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

/// RMS of generated background noise before alarm gains are applied.
pub const NOISE_RMS: f64 = 0.05;

/// Raised-cosine onset/offset ramp applied to every rendered tone.
pub const RAMP_S: f64 = 0.005;

/// Half-width of the band around each component used for SNR accounting.
pub const SNR_BAND_HALF_HZ: f64 = 50.0;

/// Peak amplitude of a rendered alarm before scenario gains.
pub const RENDER_PEAK: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum NoiseKind {
    White,
    Pink,
    /// Speech-band shaped noise; a stand-in for room babble.
    Babble,
    /// Looped recording read from a WAV file at the scenario sample rate.
    Wav(PathBuf),
}

/// Where one alarm stream goes in a scenario.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AlarmPlacement {
    pub class_id: String,
    pub version_id: u32,
    pub onset_s: f64,
    pub n_periods: usize,
}

/// A synthesized scenario with its ground truth.
#[derive(Debug, Clone)]
pub struct AnnotatedScenario {
    pub id: String,
    pub audio: AudioBuffer,
    pub annotations: Vec<Annotation>,
    pub snr_db: f64,
    pub seed: u64,
}

/// Separated components of a synthesized scenario, for inspection and tests.
#[derive(Debug, Clone)]
pub struct ScenarioParts {
    pub noise: Vec<f64>,
    /// Gain-scaled alarm streams, one per placement, scenario length each.
    pub alarms: Vec<Vec<f64>>,
    pub gains: Vec<f64>,
}

/// Sample counts for one version: cumulative tone ends and the full period.
pub fn version_samples(version: &AlarmVersionSpec, fs: u32) -> (usize, usize) {
    let sig = (version.signal_s() * fs as f64).round() as usize;
    let period = (version.period_s() * fs as f64).round() as usize;
    (sig, period)
}

/// Render `n_periods` of one alarm version. Tones are sums of sinusoids with
/// the configured relative amplitudes, shaped by raised-cosine ramps, and the
/// whole rendering is normalized to peak `RENDER_PEAK`. Silence is exactly 0.
pub fn render_alarm(version: &AlarmVersionSpec, n_periods: usize, fs: u32) -> AudioBuffer {
    let (sig_len, period_len) = version_samples(version, fs);
    let mut out = vec![0.0; period_len * n_periods];
    let one = render_signal_interval_raw(version, fs);
    debug_assert_eq!(one.len(), sig_len);
    for p in 0..n_periods {
        out[p * period_len..p * period_len + sig_len].copy_from_slice(&one);
    }
    let peak = out.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak > 0.0 {
        let g = RENDER_PEAK / peak;
        for v in &mut out {
            *v *= g;
        }
    }
    AudioBuffer { samples: out, sample_rate: fs }
}

/// One signal interval (tones only, no trailing silence), peak-normalized.
pub fn render_signal_interval(version: &AlarmVersionSpec, fs: u32) -> Vec<f64> {
    let mut one = render_signal_interval_raw(version, fs);
    let peak = one.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak > 0.0 {
        let g = RENDER_PEAK / peak;
        for v in &mut one {
            *v *= g;
        }
    }
    one
}

fn render_signal_interval_raw(version: &AlarmVersionSpec, fs: u32) -> Vec<f64> {
    let fs_f = fs as f64;
    let total = (version.signal_s() * fs_f).round() as usize;
    let mut out = vec![0.0; total];
    let mut cum_s = 0.0;
    let mut start = 0usize;
    for tone in &version.tones {
        cum_s += tone.duration_s;
        let end = (cum_s * fs_f).round() as usize;
        let len = end - start;
        let ramp = ((RAMP_S * fs_f).round() as usize).min(len / 2);
        for i in 0..len {
            let t = i as f64 / fs_f;
            let mut v = 0.0;
            for (f, a) in tone.frequencies.iter().zip(tone.relative_amplitudes.iter()) {
                v += a * (2.0 * std::f64::consts::PI * f * t).sin();
            }
            let w = ramp_weight(i, len, ramp);
            out[start + i] = v * w;
        }
        start = end;
    }
    out
}

fn ramp_weight(i: usize, len: usize, ramp: usize) -> f64 {
    if ramp == 0 {
        return 1.0;
    }
    let up = if i < ramp {
        0.5 * (1.0 - (std::f64::consts::PI * (i as f64 + 0.5) / ramp as f64).cos())
    } else {
        1.0
    };
    let tail = len - 1 - i;
    let down = if tail < ramp {
        0.5 * (1.0 - (std::f64::consts::PI * (tail as f64 + 0.5) / ramp as f64).cos())
    } else {
        1.0
    };
    up.min(down)
}

/// SNR accounting bands for one version: +/-50 Hz around every component.
pub fn snr_bands(version: &AlarmVersionSpec, fs: u32) -> Vec<(f64, f64)> {
    let nyquist = fs as f64 / 2.0;
    version
        .frequencies()
        .iter()
        .map(|&f| ((f - SNR_BAND_HALF_HZ).max(0.0), (f + SNR_BAND_HALF_HZ).min(nyquist)))
        .collect()
}

/// Mean-square power of `x` restricted to `bands`, via periodogram bins.
pub fn band_power(x: &[f64], fs: u32, bands: &[(f64, f64)]) -> f64 {
    let n = x.len();
    if n == 0 {
        return 0.0;
    }
    let spec = dsp::fft_real(x);
    let bin_hz = fs as f64 / n as f64;
    let mut acc = 0.0;
    for k in 0..n {
        let f = if k <= n / 2 { k as f64 * bin_hz } else { (n - k) as f64 * bin_hz };
        if bands.iter().any(|&(lo, hi)| f >= lo && f <= hi) {
            acc += spec[k].norm_sqr();
        }
    }
    acc / (n as f64 * n as f64)
}

pub fn generate_noise(kind: &NoiseKind, n: usize, fs: u32, seed: u64) -> Result<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut noise: Vec<f64> = match kind {
        NoiseKind::White => (0..n).map(|_| StandardNormal.sample(&mut rng)).collect(),
        NoiseKind::Pink => {
            let white: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
            shape_spectrum(&white, fs, |f| if f > 0.0 { 1.0 / f.sqrt() } else { 0.0 })
        }
        NoiseKind::Babble => {
            let white: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
            shape_spectrum(&white, fs, |f| {
                if (150.0..=4000.0).contains(&f) {
                    (150.0 / f).sqrt()
                } else {
                    0.0
                }
            })
        }
        NoiseKind::Wav(path) => {
            let buf = audio::read_wav(path)?;
            if buf.sample_rate != fs {
                return Err(Error::data(format!(
                    "noise WAV {} is at {} Hz, scenario needs {} Hz",
                    path.display(),
                    buf.sample_rate,
                    fs
                )));
            }
            if buf.samples.is_empty() {
                return Err(Error::data(format!("noise WAV {} is empty", path.display())));
            }
            (0..n).map(|i| buf.samples[i % buf.samples.len()]).collect()
        }
    };
    let ms: f64 = noise.iter().map(|v| v * v).sum::<f64>() / n.max(1) as f64;
    if ms > 0.0 {
        let g = NOISE_RMS / ms.sqrt();
        for v in &mut noise {
            *v *= g;
        }
    }
    Ok(noise)
}

fn shape_spectrum(x: &[f64], fs: u32, gain: impl Fn(f64) -> f64) -> Vec<f64> {
    let n = x.len();
    let mut spec = dsp::fft_real(x);
    let bin_hz = fs as f64 / n as f64;
    for k in 0..n {
        let f = if k <= n / 2 { k as f64 * bin_hz } else { (n - k) as f64 * bin_hz };
        let g = gain(f);
        spec[k] *= g;
    }
    dsp::ifft_real(&spec)
}

/// Synthesize one scenario. Each placed alarm is scaled so that its power
/// during signal intervals over the noise power inside its own component
/// bands equals `snr_db`. `snr_db = +inf` renders without noise at unit gain.
pub fn synth_scenario(
    registry: &Registry,
    id: &str,
    placements: &[AlarmPlacement],
    duration_s: f64,
    noise: &NoiseKind,
    snr_db: f64,
    seed: u64,
) -> Result<AnnotatedScenario> {
    synth_scenario_with_parts(registry, id, placements, duration_s, noise, snr_db, seed)
        .map(|(s, _)| s)
}

/// Like [`synth_scenario`] but also returns the separated components.
pub fn synth_scenario_with_parts(
    registry: &Registry,
    id: &str,
    placements: &[AlarmPlacement],
    duration_s: f64,
    noise: &NoiseKind,
    snr_db: f64,
    seed: u64,
) -> Result<(AnnotatedScenario, ScenarioParts)> {
    let fs = registry.sample_rate;
    let n = (duration_s * fs as f64).round() as usize;
    if n == 0 {
        return Err(Error::config("scenario duration rounds to zero samples"));
    }
    let noise_buf = if snr_db.is_finite() {
        generate_noise(noise, n, fs, derive_seed(seed, "noise", 0))?
    } else {
        vec![0.0; n]
    };

    let mut mix = noise_buf.clone();
    let mut annotations = Vec::new();
    let mut alarms = Vec::new();
    let mut gains = Vec::new();

    for (pi, placement) in placements.iter().enumerate() {
        let class = registry.class(&placement.class_id)?;
        let version = class.versions.get(placement.version_id as usize).ok_or_else(|| {
            Error::config(format!(
                "placement {pi}: class {} has no version {}",
                placement.class_id, placement.version_id
            ))
        })?;
        let (sig_len, period_len) = version_samples(version, fs);
        let onset = (placement.onset_s * fs as f64).round() as usize;
        let total = period_len * placement.n_periods;
        if placement.n_periods == 0 {
            return Err(Error::config(format!("placement {pi}: n_periods must be positive")));
        }
        if onset + total > n {
            return Err(Error::config(format!(
                "placement {pi} ({}) runs to {:.3} s, past the {duration_s} s scenario",
                placement.class_id,
                (onset + total) as f64 / fs as f64
            )));
        }
        let rendered = render_alarm(version, placement.n_periods, fs);

        let gain = if snr_db.is_finite() {
            let bands = snr_bands(version, fs);
            let p_noise = band_power(&noise_buf, fs, &bands);
            // Alarm power over its signal intervals only.
            let mut acc = 0.0;
            let mut cnt = 0usize;
            for p in 0..placement.n_periods {
                let s = p * period_len;
                for v in &rendered.samples[s..s + sig_len] {
                    acc += v * v;
                }
                cnt += sig_len;
            }
            let p_alarm = acc / cnt as f64;
            if p_alarm <= 0.0 || p_noise <= 0.0 {
                return Err(Error::numeric(format!(
                    "placement {pi}: degenerate power (alarm {p_alarm}, noise band {p_noise})"
                )));
            }
            (10f64.powf(snr_db / 10.0) * p_noise / p_alarm).sqrt()
        } else {
            1.0
        };

        let mut stream = vec![0.0; n];
        for (i, &v) in rendered.samples.iter().enumerate() {
            stream[onset + i] = v * gain;
        }
        for (m, s) in mix.iter_mut().zip(stream.iter()) {
            *m += s;
        }
        for p in 0..placement.n_periods {
            let start = (onset + p * period_len) as f64 / fs as f64;
            let end = (onset + p * period_len + sig_len) as f64 / fs as f64;
            annotations.push(Annotation {
                class_id: placement.class_id.clone(),
                version_id: placement.version_id,
                start_s: start,
                end_s: end,
            });
        }
        alarms.push(stream);
        gains.push(gain);
    }

    annotations.sort_by(|a, b| a.start_s.partial_cmp(&b.start_s).unwrap());
    let scenario = AnnotatedScenario {
        id: id.to_string(),
        audio: AudioBuffer::new(mix, fs)?,
        annotations,
        snr_db,
        seed,
    };
    Ok((scenario, ScenarioParts { noise: noise_buf, alarms, gains }))
}

/// Add Poisson-distributed broadband transients (2-20 ms) to a scenario.
/// Annotations are left untouched; glitches are explicitly non-alarm content.
pub fn inject_glitches(
    scenario: &mut AnnotatedScenario,
    rate_per_s: f64,
    amplitude: f64,
    seed: u64,
) {
    let fs = scenario.audio.sample_rate as f64;
    let n = scenario.audio.samples.len();
    let duration = n as f64 / fs;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "glitch", 0));
    // Poisson count by inversion.
    let lambda = rate_per_s * duration;
    let count = {
        let u: f64 = rng.gen();
        let mut k = 0u64;
        let mut p = (-lambda).exp();
        let mut cdf = p;
        while u > cdf && k < 10_000 {
            k += 1;
            p *= lambda / k as f64;
            cdf += p;
        }
        k as usize
    };
    for _ in 0..count {
        let dur_ms: f64 = rng.gen_range(2.0..=20.0);
        let len = ((dur_ms / 1000.0) * fs).round() as usize;
        let start = rng.gen_range(0..n.saturating_sub(len).max(1));
        let burst: Vec<f64> = (0..len).map(|_| StandardNormal.sample(&mut rng)).collect();
        let peak = burst.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-12);
        for (i, &b) in burst.iter().enumerate() {
            let w = 0.5 * (1.0 - (2.0 * std::f64::consts::PI * i as f64 / len as f64).cos());
            scenario.audio.samples[start + i] += amplitude * w * b / peak;
        }
    }
}

/// One row of a scenario manifest CSV.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestRow {
    pub session_id: String,
    pub scenario_id: String,
    pub wav_path: String,
    pub annotation_path: String,
    pub snr_db: f64,
    pub seed: u64,
}

pub fn write_manifest(rows: &[ManifestRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)
        .map_err(|e| Error::data(format!("cannot create manifest {}: {e}", path.display())))?;
    for row in rows {
        w.serialize(row).map_err(|e| Error::data(format!("manifest write: {e}")))?;
    }
    w.flush().map_err(|e| Error::data(format!("manifest flush: {e}")))?;
    Ok(())
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestRow>> {
    let mut r = csv::Reader::from_path(path)
        .map_err(|e| Error::data(format!("cannot open manifest {}: {e}", path.display())))?;
    let mut rows = Vec::new();
    for rec in r.deserialize() {
        rows.push(rec.map_err(|e| Error::data(format!("manifest row: {e}")))?);
    }
    if rows.is_empty() {
        return Err(Error::data(format!("manifest {} has no rows", path.display())));
    }
    Ok(rows)
}

/// Load the scenarios listed in a manifest, grouped by session in manifest
/// order. Paths are resolved relative to the manifest's directory.
pub fn load_sessions(
    manifest_path: &Path,
    expected_fs: u32,
) -> Result<Vec<(String, Vec<AnnotatedScenario>)>> {
    let rows = read_manifest(manifest_path)?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let mut sessions: Vec<(String, Vec<AnnotatedScenario>)> = Vec::new();
    for row in rows {
        let wav = base.join(&row.wav_path);
        let ann = base.join(&row.annotation_path);
        let audio = audio::read_wav(&wav)?;
        if audio.sample_rate != expected_fs {
            return Err(Error::data(format!(
                "{} is at {} Hz, registry expects {} Hz",
                wav.display(),
                audio.sample_rate,
                expected_fs
            )));
        }
        let annotations = audio::read_annotations(&ann)?;
        let scenario = AnnotatedScenario {
            id: row.scenario_id.clone(),
            audio,
            annotations,
            snr_db: row.snr_db,
            seed: row.seed,
        };
        match sessions.iter_mut().find(|(sid, _)| *sid == row.session_id) {
            Some((_, list)) => list.push(scenario),
            None => sessions.push((row.session_id.clone(), vec![scenario])),
        }
    }
    Ok(sessions)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reg() -> Registry {
        Registry::default_synthetic()
    }

    #[test]
    fn render_counts_and_silence() {
        // Single tone, 0.2 s on, 0.8 s off, 3 periods at 24 kHz.
        let version = AlarmVersionSpec {
            f0: 1000.0,
            silence_s: 0.8,
            tones: vec![crate::registry::ToneSpec {
                frequencies: vec![1000.0],
                relative_amplitudes: vec![1.0],
                duration_s: 0.2,
            }],
        };
        let buf = render_alarm(&version, 3, 24000);
        assert_eq!(buf.samples.len(), 72000);
        let peak = buf.samples.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!((peak - RENDER_PEAK).abs() < 1e-12);
        for p in 0..3 {
            for i in 4800..24000 {
                assert_eq!(buf.samples[p * 24000 + i], 0.0, "silence sample {i}");
            }
        }
    }

    #[test]
    fn equal_relative_amplitudes_give_equal_peaks() {
        let version = AlarmVersionSpec {
            f0: 1000.0,
            silence_s: 0.5,
            tones: vec![crate::registry::ToneSpec {
                frequencies: vec![1000.0, 3000.0],
                relative_amplitudes: vec![0.5, 0.5],
                duration_s: 0.2,
            }],
        };
        let one = render_signal_interval(&version, 24000);
        let spec = dsp::periodogram(&one);
        let bin = |f: f64| (f * one.len() as f64 / 24000.0).round() as usize;
        let p1: f64 = spec[bin(1000.0) - 2..bin(1000.0) + 3].iter().sum();
        let p2: f64 = spec[bin(3000.0) - 2..bin(3000.0) + 3].iter().sum();
        let ratio_db = 10.0 * (p1 / p2).log10();
        assert!(ratio_db.abs() < 1.0, "peak ratio {ratio_db} dB");
    }

    #[test]
    fn render_consistent_across_sample_rates() {
        let reg = reg();
        let version = &reg.class("c1").unwrap().versions[0];
        let hi = render_alarm(version, 2, 48000);
        let lo = render_alarm(version, 2, 24000);
        assert_eq!(hi.samples.len(), 2 * lo.samples.len());
        let mut worst = 0.0f64;
        for (i, &v) in lo.samples.iter().enumerate() {
            worst = worst.max((hi.samples[2 * i] - v).abs());
        }
        // Residual comes from the crest-based normalization and ramp grid.
        assert!(worst < 0.01, "decimated mismatch {worst}");
    }

    #[test]
    fn scenario_hits_requested_band_snr() {
        let reg = reg();
        let placements = vec![AlarmPlacement {
            class_id: "c3".into(),
            version_id: 0,
            onset_s: 1.0,
            n_periods: 4,
        }];
        for &target in &[0.0, 10.0] {
            let (scenario, parts) = synth_scenario_with_parts(
                &reg,
                "snr_test",
                &placements,
                8.0,
                &NoiseKind::White,
                target,
                77,
            )
            .unwrap();
            // Independent measurement: alarm power over annotated intervals,
            // noise power from periodogram bins inside the component bands.
            let version = &reg.class("c3").unwrap().versions[0];
            let bands = snr_bands(version, 24000);
            let fs = 24000f64;
            let mut acc = 0.0;
            let mut cnt = 0usize;
            for ann in &scenario.annotations {
                let a = (ann.start_s * fs).round() as usize;
                let b = (ann.end_s * fs).round() as usize;
                for &v in &parts.alarms[0][a..b] {
                    acc += v * v;
                }
                cnt += b - a;
            }
            let p_alarm = acc / cnt as f64;
            let p_noise = band_power(&parts.noise, 24000, &bands);
            let measured = 10.0 * (p_alarm / p_noise).log10();
            assert!(
                (measured - target).abs() < 0.1,
                "target {target} dB, measured {measured} dB"
            );
        }
    }

    #[test]
    fn infinite_snr_is_exactly_the_alarm_sum() {
        let reg = reg();
        let placements = vec![
            AlarmPlacement { class_id: "c3".into(), version_id: 0, onset_s: 0.5, n_periods: 2 },
            AlarmPlacement { class_id: "c2".into(), version_id: 0, onset_s: 1.0, n_periods: 2 },
        ];
        let (scenario, parts) = synth_scenario_with_parts(
            &reg,
            "clean",
            &placements,
            4.0,
            &NoiseKind::White,
            f64::INFINITY,
            5,
        )
        .unwrap();
        assert!(parts.gains.iter().all(|&g| g == 1.0));
        for i in 0..scenario.audio.samples.len() {
            let expect = parts.alarms[0][i] + parts.alarms[1][i];
            assert_eq!(scenario.audio.samples[i], expect);
        }
        assert_eq!(scenario.annotations.len(), 4);
    }

    #[test]
    fn scenario_is_deterministic_per_seed() {
        let reg = reg();
        let placements = vec![AlarmPlacement {
            class_id: "c7".into(),
            version_id: 0,
            onset_s: 0.3,
            n_periods: 2,
        }];
        let a = synth_scenario(&reg, "d", &placements, 4.0, &NoiseKind::Pink, 5.0, 99).unwrap();
        let b = synth_scenario(&reg, "d", &placements, 4.0, &NoiseKind::Pink, 5.0, 99).unwrap();
        assert_eq!(a.audio.samples, b.audio.samples);
        let c = synth_scenario(&reg, "d", &placements, 4.0, &NoiseKind::Pink, 5.0, 100).unwrap();
        assert_ne!(a.audio.samples, c.audio.samples);
    }

    #[test]
    fn placement_past_end_is_config_error() {
        let reg = reg();
        let placements = vec![AlarmPlacement {
            class_id: "c6".into(),
            version_id: 0,
            onset_s: 3.0,
            n_periods: 5,
        }];
        let err = synth_scenario(&reg, "x", &placements, 4.0, &NoiseKind::White, 10.0, 1)
            .unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn glitches_raise_high_percentile() {
        let reg = reg();
        let placements = vec![AlarmPlacement {
            class_id: "c3".into(),
            version_id: 0,
            onset_s: 1.0,
            n_periods: 3,
        }];
        let mut scenario =
            synth_scenario(&reg, "g", &placements, 6.0, &NoiseKind::White, 0.0, 12).unwrap();
        let abs: Vec<f64> = scenario.audio.samples.iter().map(|v| v.abs()).collect();
        let before = dsp::percentile_nearest_rank(&abs, 99.0);
        let anns = scenario.annotations.clone();
        inject_glitches(&mut scenario, 2.0, 0.9, 13);
        let abs_after: Vec<f64> = scenario.audio.samples.iter().map(|v| v.abs()).collect();
        let after = dsp::percentile_nearest_rank(&abs_after, 99.0);
        assert!(after > before, "99th percentile {before} -> {after}");
        assert_eq!(scenario.annotations, anns);
    }

    #[test]
    fn noise_kinds_have_target_rms_and_band_character() {
        for kind in [NoiseKind::White, NoiseKind::Pink, NoiseKind::Babble] {
            let noise = generate_noise(&kind, 48000, 24000, 3).unwrap();
            let rms = (noise.iter().map(|v| v * v).sum::<f64>() / noise.len() as f64).sqrt();
            assert!((rms - NOISE_RMS).abs() / NOISE_RMS < 1e-9, "{kind:?} rms {rms}");
        }
        // Pink noise concentrates low; babble has nothing below 100 Hz.
        let pink = generate_noise(&NoiseKind::Pink, 48000, 24000, 3).unwrap();
        let low = band_power(&pink, 24000, &[(20.0, 600.0)]);
        let high = band_power(&pink, 24000, &[(6000.0, 12000.0)]);
        assert!(low > high, "pink should tilt low: {low} vs {high}");
        let babble = generate_noise(&NoiseKind::Babble, 48000, 24000, 3).unwrap();
        let sub = band_power(&babble, 24000, &[(0.0, 100.0)]);
        let mid = band_power(&babble, 24000, &[(200.0, 3000.0)]);
        assert!(sub < mid * 1e-6, "babble sub-band leak: {sub} vs {mid}");
    }

    #[test]
    fn wav_noise_requires_matching_rate_and_loops() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("noise.wav");
        let src = AudioBuffer::new((0..1000).map(|i| (i as f64 * 0.13).sin() * 0.3).collect(), 24000)
            .unwrap();
        audio::write_wav(&src, &path).unwrap();
        let looped = generate_noise(&NoiseKind::Wav(path.clone()), 2500, 24000, 0).unwrap();
        assert_eq!(looped.len(), 2500);
        // Loop: sample 0 and 1000 come from the same source sample.
        assert!((looped[0] - looped[1000]).abs() < 1e-12);
        let err = generate_noise(&NoiseKind::Wav(path), 100, 16000, 0).unwrap_err();
        assert_eq!(err.exit_code(), 3);
    }

    #[test]
    fn manifest_round_trip_with_infinite_snr() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("manifest.csv");
        let rows = vec![
            ManifestRow {
                session_id: "s00".into(),
                scenario_id: "s00_k0".into(),
                wav_path: "s00/k0.wav".into(),
                annotation_path: "s00/k0.csv".into(),
                snr_db: f64::INFINITY,
                seed: 11,
            },
            ManifestRow {
                session_id: "s01".into(),
                scenario_id: "s01_k0".into(),
                wav_path: "s01/k0.wav".into(),
                annotation_path: "s01/k0.csv".into(),
                snr_db: 10.0,
                seed: 12,
            },
        ];
        write_manifest(&rows, &path).unwrap();
        let back = read_manifest(&path).unwrap();
        assert_eq!(back.len(), 2);
        assert!(back[0].snr_db.is_infinite());
        assert_eq!(back[1].snr_db, 10.0);
    }
}
