//! Decision stage: smooth the envelope with the system's own response to a
//! clean reference, threshold, and pick period onsets.

use crate::dsp;
use crate::error::{Error, Result};
use crate::temporal;

/// Candidate onsets closer than this fraction of the alarm period collapse
/// to the larger peak.
pub const MIN_ONSET_SPACING_PERIODS: f64 = 0.75;
/// Oracle threshold estimation ignores peaks this close before an
/// annotated onset; the smoothing response rises ahead of the onset itself.
const ONSET_GUARD_SIGNAL_FRACTION: f64 = 0.25;

/// How the decision threshold was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ThresholdMode {
    /// Per-scenario: the tallest non-alarm peak of the scenario under test.
    Oracle,
    /// Cross-validated: midpoint of the per-scenario oracle range on the
    /// training fold, applied unchanged to every test scenario.
    Cv,
}

#[derive(Debug, Clone, Copy)]
pub struct DecisionThreshold {
    pub u: f64,
    pub mode: ThresholdMode,
}

impl DecisionThreshold {
    pub fn new(u: f64, mode: ThresholdMode) -> Result<DecisionThreshold> {
        if !(u >= 0.0) {
            return Err(Error::config(format!("decision threshold {u} must be >= 0")));
        }
        Ok(DecisionThreshold { u, mode })
    }
}

/// Smoothing kernel: the morphological-envelope stage's own response to the
/// clean reference, peak-normalized, applied centered on its maximum.
#[derive(Debug, Clone)]
pub struct SmoothingFir {
    pub taps: Vec<f64>,
    pub center: usize,
}

impl SmoothingFir {
    /// Build from an already computed envelope response (the reference run
    /// through matched filter and morphological envelope).
    pub fn from_response(response: &[f64]) -> Result<SmoothingFir> {
        let peak = response.iter().fold(0.0f64, |m, &v| m.max(v));
        if response.is_empty() || !(peak > 0.0) {
            return Err(Error::data("smoothing response must have a positive peak"));
        }
        let taps: Vec<f64> = response.iter().map(|&v| v / peak).collect();
        let center = taps
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap().then(b.0.cmp(&a.0)))
            .map(|(i, _)| i)
            .unwrap();
        Ok(SmoothingFir { taps, center })
    }
}

/// Convolve the envelope with the smoothing kernel, output aligned so the
/// kernel's peak sits on the input sample.
pub fn smooth_envelope(envelope: &[f64], fir: &SmoothingFir) -> Vec<f64> {
    dsp::convolve_same_centered(envelope, &fir.taps, fir.center)
}

/// Onsets: local maxima of the smoothed envelope strictly above the
/// threshold, then close pairs collapse to the larger peak. Returned as
/// (time in seconds, peak height).
pub fn decide(
    smoothed: &[f64],
    threshold: DecisionThreshold,
    period_s: f64,
    sample_rate: f64,
) -> Vec<(f64, f64)> {
    let min_spacing = MIN_ONSET_SPACING_PERIODS * period_s * sample_rate;
    temporal::pick_peaks_spaced(smoothed, threshold.u, min_spacing)
        .into_iter()
        .map(|(i, h)| (i as f64 / sample_rate, h))
        .collect()
}

/// All candidate peaks of a smoothed envelope with no threshold applied,
/// spacing rule still active. Feeds threshold estimation.
pub fn candidate_peaks(smoothed: &[f64], period_s: f64, sample_rate: f64) -> Vec<(f64, f64)> {
    let min_spacing = MIN_ONSET_SPACING_PERIODS * period_s * sample_rate;
    temporal::pick_peaks_spaced(smoothed, f64::NEG_INFINITY, min_spacing)
        .into_iter()
        .map(|(i, h)| (i as f64 / sample_rate, h))
        .collect()
}

/// Oracle threshold for one scenario: the tallest candidate peak not
/// associated with any annotated alarm interval. A peak belongs to an
/// interval when it falls inside it or within a guard margin before its
/// start. No non-alarm peaks: threshold 0, everything tall fires.
pub fn estimate_threshold_oracle(
    smoothed: &[f64],
    sample_rate: f64,
    alarm_spans: &[(f64, f64)],
    signal_len_s: f64,
    period_s: f64,
) -> DecisionThreshold {
    let guard = ONSET_GUARD_SIGNAL_FRACTION * signal_len_s;
    let peaks = candidate_peaks(smoothed, period_s, sample_rate);
    oracle_threshold_from_peaks(&peaks, alarm_spans, guard)
}

/// Oracle threshold over an explicit candidate list, e.g. peaks already
/// merged across a class's version bank. `guard_s` widens each span towards
/// earlier times.
pub fn oracle_threshold_from_peaks(
    peaks: &[(f64, f64)],
    alarm_spans: &[(f64, f64)],
    guard_s: f64,
) -> DecisionThreshold {
    let u = peaks
        .iter()
        .filter(|(t, _)| {
            !alarm_spans.iter().any(|&(start, end)| *t >= start - guard_s && *t < end)
        })
        .map(|&(_, h)| h)
        .fold(0.0f64, f64::max);
    DecisionThreshold { u, mode: ThresholdMode::Oracle }
}

/// Guard margin used ahead of annotated onsets for a signal interval length.
pub fn onset_guard_s(signal_len_s: f64) -> f64 {
    ONSET_GUARD_SIGNAL_FRACTION * signal_len_s
}

/// Cross-validated threshold: midpoint between the smallest and largest
/// per-scenario oracle thresholds of the training fold.
pub fn estimate_threshold_cv(training_oracle_thresholds: &[f64]) -> DecisionThreshold {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &u in training_oracle_thresholds {
        lo = lo.min(u);
        hi = hi.max(u);
    }
    let u = if training_oracle_thresholds.is_empty() { 0.0 } else { (lo + hi) / 2.0 };
    DecisionThreshold { u, mode: ThresholdMode::Cv }
}

#[cfg(test)]
mod tests {
    use super::*;

    const FS: f64 = 1000.0;

    fn track_with_peaks(n: usize, peaks: &[(usize, f64)]) -> Vec<f64> {
        let mut x = vec![0.0; n];
        for &(i, h) in peaks {
            x[i] = h;
        }
        x
    }

    #[test]
    fn zero_envelope_yields_no_onsets() {
        let t = DecisionThreshold::new(0.0, ThresholdMode::Oracle).unwrap();
        assert!(decide(&vec![0.0; 500], t, 0.1, FS).is_empty());
    }

    #[test]
    fn close_pair_collapses_to_the_larger_peak() {
        // Period 1 s, peaks 0.5 s apart with heights 0.9 and 0.8,
        // threshold 0.5: one onset at the taller peak.
        let x = track_with_peaks(2000, &[(400, 0.9), (900, 0.8)]);
        let t = DecisionThreshold::new(0.5, ThresholdMode::Oracle).unwrap();
        let onsets = decide(&x, t, 1.0, FS);
        assert_eq!(onsets.len(), 1);
        assert!((onsets[0].0 - 0.4).abs() < 1e-9);
        assert!((onsets[0].1 - 0.9).abs() < 1e-12);
    }

    #[test]
    fn spacing_at_least_three_quarters_of_a_period_is_kept() {
        let x = track_with_peaks(2000, &[(400, 0.9), (1150, 0.8)]);
        let t = DecisionThreshold::new(0.5, ThresholdMode::Oracle).unwrap();
        let onsets = decide(&x, t, 1.0, FS);
        assert_eq!(onsets.len(), 2);
    }

    #[test]
    fn peak_exactly_at_threshold_does_not_fire() {
        // Strictly-above comparison makes the oracle threshold (the tallest
        // non-alarm peak) silent by construction.
        let x = track_with_peaks(1000, &[(300, 0.7), (600, 0.9)]);
        let t = DecisionThreshold::new(0.7, ThresholdMode::Oracle).unwrap();
        let onsets = decide(&x, t, 0.2, FS);
        assert_eq!(onsets.len(), 1);
        assert!((onsets[0].0 - 0.6).abs() < 1e-9);
    }

    #[test]
    fn oracle_threshold_is_the_tallest_non_alarm_peak() {
        // Alarm span [0.35, 0.55): the 0.4 s peak is alarm, 0.8 s is not.
        let x = track_with_peaks(1000, &[(400, 0.9), (800, 0.4)]);
        let t = estimate_threshold_oracle(&x, FS, &[(0.35, 0.55)], 0.1, 0.2);
        assert_eq!(t.mode, ThresholdMode::Oracle);
        assert!((t.u - 0.4).abs() < 1e-12);
        // With that threshold the scenario has zero false alarms.
        let onsets = decide(&x, t, 0.2, FS);
        assert_eq!(onsets.len(), 1);
        assert!((onsets[0].0 - 0.4).abs() < 1e-9);
    }

    #[test]
    fn oracle_guard_absorbs_peaks_just_before_the_onset() {
        // Smoothing pushes the response a little ahead of the annotated
        // start; a peak 20 ms early with a 25 ms guard is still alarm.
        let x = track_with_peaks(1000, &[(330, 0.9), (700, 0.3)]);
        let t = estimate_threshold_oracle(&x, FS, &[(0.35, 0.55)], 0.1, 0.2);
        assert!((t.u - 0.3).abs() < 1e-12, "guard failed: {}", t.u);
    }

    #[test]
    fn oracle_with_no_non_alarm_peaks_is_zero() {
        let x = track_with_peaks(1000, &[(400, 0.9)]);
        let t = estimate_threshold_oracle(&x, FS, &[(0.35, 0.55)], 0.1, 0.2);
        assert_eq!(t.u, 0.0);
    }

    #[test]
    fn oracle_examples_pair() {
        // Non-alarm peaks {0.2, 0.4}: oracle picks 0.4.
        let x = track_with_peaks(2000, &[(300, 0.2), (900, 0.4)]);
        let t = estimate_threshold_oracle(&x, FS, &[], 0.1, 0.2);
        assert!((t.u - 0.4).abs() < 1e-12);
    }

    #[test]
    fn cv_threshold_is_the_midpoint_of_the_training_range() {
        let t = estimate_threshold_cv(&[0.2, 0.6]);
        assert_eq!(t.mode, ThresholdMode::Cv);
        assert!((t.u - 0.4).abs() < 1e-12);
        assert_eq!(estimate_threshold_cv(&[]).u, 0.0);
        assert!((estimate_threshold_cv(&[0.3]).u - 0.3).abs() < 1e-12);
    }

    #[test]
    fn smoothing_fir_centers_on_its_peak() {
        let response = vec![0.1, 0.4, 2.0, 0.4, 0.1, 0.05];
        let fir = SmoothingFir::from_response(&response).unwrap();
        assert_eq!(fir.center, 2);
        assert_eq!(fir.taps[2], 1.0);
        // An impulse smooths into the kernel, peak staying put.
        let mut x = vec![0.0; 50];
        x[20] = 1.0;
        let y = smooth_envelope(&x, &fir);
        assert_eq!(y.len(), x.len());
        let argmax = y
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0;
        assert_eq!(argmax, 20);
        assert!((y[20] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_smoothing_responses_are_rejected() {
        assert!(SmoothingFir::from_response(&[]).is_err());
        assert!(SmoothingFir::from_response(&[0.0, 0.0]).is_err());
        assert!(DecisionThreshold::new(-0.1, ThresholdMode::Cv).is_err());
    }
}
