//! Temporal post-processing shared by every detector: period-probability
//! aggregation over posterior tracks, peak picking with period spacing,
//! majority smoothing, frame/period conversions, scheme combination, and the
//! equal-error-rate threshold.

use crate::audio::Annotation;
use crate::error::{Error, Result};

/// Per-frame log posteriors of the alarm and non-alarm classes on a fixed
/// analysis grid. The two posteriors sum to one per frame.
#[derive(Debug, Clone)]
pub struct PosteriorTrack {
    pub log_alarm: Vec<f64>,
    pub log_non_alarm: Vec<f64>,
    pub hop_s: f64,
}

impl PosteriorTrack {
    /// Build from per-frame log likelihoods; the pair is normalized so the
    /// two posteriors sum to one.
    pub fn from_log_likelihoods(ll_alarm: &[f64], ll_non_alarm: &[f64], hop_s: f64) -> PosteriorTrack {
        assert_eq!(ll_alarm.len(), ll_non_alarm.len());
        let mut log_alarm = Vec::with_capacity(ll_alarm.len());
        let mut log_non = Vec::with_capacity(ll_alarm.len());
        for (&a, &n) in ll_alarm.iter().zip(ll_non_alarm.iter()) {
            let m = a.max(n);
            let lse = m + ((a - m).exp() + (n - m).exp()).ln();
            log_alarm.push(a - lse);
            log_non.push(n - lse);
        }
        PosteriorTrack { log_alarm, log_non_alarm: log_non, hop_s }
    }

    pub fn len(&self) -> usize {
        self.log_alarm.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_alarm.is_empty()
    }

    /// Per-frame difference `log P(alarm) - log P(non-alarm)`.
    pub fn delta(&self) -> Vec<f64> {
        self.log_alarm
            .iter()
            .zip(self.log_non_alarm.iter())
            .map(|(a, n)| a - n)
            .collect()
    }
}

/// Period probability per candidate start frame. `values[t]` corresponds to
/// frame `t` of the source track; a track shorter than one period yields no
/// values.
#[derive(Debug, Clone)]
pub struct PeriodProbabilityTrack {
    pub values: Vec<f64>,
    pub l_sig_frames: usize,
    pub l_sil_frames: usize,
    pub hop_s: f64,
}

/// Detector output for one class on one scenario. Onsets are seconds,
/// strictly increasing, spaced at least 0.75 period apart.
#[derive(Debug, Clone)]
pub struct DetectionResult {
    pub class_id: String,
    pub frame_labels: Vec<bool>,
    pub period_onsets: Vec<f64>,
}

/// Period probability: for each start frame `t`, the posterior margin summed
/// over an expected signal stretch minus the margin over the expected
/// silence stretch.
pub fn period_probability(
    track: &PosteriorTrack,
    l_sig_frames: usize,
    l_sil_frames: usize,
) -> Result<PeriodProbabilityTrack> {
    let delta = track.delta();
    let values = period_probability_delta(&delta, l_sig_frames, l_sil_frames)?;
    Ok(PeriodProbabilityTrack {
        values,
        l_sig_frames,
        l_sil_frames,
        hop_s: track.hop_s,
    })
}

/// Core of the period probability on a margin track; output length is
/// `len - (l_sig + l_sil) + 1`, or zero for tracks shorter than one period.
pub fn period_probability_delta(delta: &[f64], l_sig: usize, l_sil: usize) -> Result<Vec<f64>> {
    let period = l_sig + l_sil;
    if l_sig == 0 || l_sil == 0 {
        return Err(Error::config("period probability needs positive window lengths"));
    }
    if delta.len() < period {
        return Ok(Vec::new());
    }
    // Prefix sums: P(t) = (D[t+ls] - D[t]) - (D[t+ls+lsil] - D[t+ls]).
    let mut prefix = Vec::with_capacity(delta.len() + 1);
    prefix.push(0.0);
    let mut acc = 0.0;
    for &d in delta {
        acc += d;
        prefix.push(acc);
    }
    let out_len = delta.len() - period + 1;
    let mut out = Vec::with_capacity(out_len);
    for t in 0..out_len {
        let sig = prefix[t + l_sig] - prefix[t];
        let sil = prefix[t + period] - prefix[t + l_sig];
        out.push(sig - sil);
    }
    Ok(out)
}

/// Peaks of a period probability track above `threshold`, spaced at least
/// 0.75 of the alarm period apart. Returns (start frame, peak value).
pub fn pick_periods(
    pp: &PeriodProbabilityTrack,
    threshold: f64,
    period_s: f64,
) -> Vec<(usize, f64)> {
    let min_spacing = 0.75 * period_s / pp.hop_s;
    pick_peaks_spaced(&pp.values, threshold, min_spacing)
}

/// Strict local maxima of `values` above `threshold` (plateaus count once,
/// at their first index), thinned so surviving peaks are at least
/// `min_spacing` indices apart; when two candidates conflict the larger
/// stays.
pub fn pick_peaks_spaced(values: &[f64], threshold: f64, min_spacing: f64) -> Vec<(usize, f64)> {
    let candidates: Vec<(usize, f64)> = crate::dsp::local_maxima(values)
        .into_iter()
        .filter(|&i| values[i] > threshold)
        .map(|i| (i, values[i]))
        .collect();
    enforce_min_spacing(&candidates, min_spacing)
}

/// Keep-larger spacing rule: peaks closer than `min_spacing` to an already
/// accepted (larger or earlier-at-equal-height) peak are dropped. Exact
/// spacing `min_spacing` is allowed.
pub fn enforce_min_spacing(peaks: &[(usize, f64)], min_spacing: f64) -> Vec<(usize, f64)> {
    let mut order: Vec<usize> = (0..peaks.len()).collect();
    order.sort_by(|&a, &b| {
        peaks[b]
            .1
            .partial_cmp(&peaks[a].1)
            .unwrap()
            .then(peaks[a].0.cmp(&peaks[b].0))
    });
    let mut kept: Vec<(usize, f64)> = Vec::new();
    for idx in order {
        let (pos, h) = peaks[idx];
        let clash = kept
            .iter()
            .any(|&(kp, _)| ((kp as f64) - (pos as f64)).abs() < min_spacing);
        if !clash {
            kept.push((pos, h));
        }
    }
    kept.sort_by_key(|&(pos, _)| pos);
    kept
}

/// Majority vote over a centered window. Even windows are widened by one.
/// Windows are truncated at the edges; a truncated-window tie keeps the
/// original label. Applied once: iterating the vote can oscillate between
/// two states, so callers must not run it to convergence.
pub fn majority_smooth(labels: &[bool], window: usize) -> Vec<bool> {
    assert!(window >= 1);
    let w = if window % 2 == 0 { window + 1 } else { window };
    let half = w / 2;
    let n = labels.len();
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let lo = i.saturating_sub(half);
        let hi = (i + half + 1).min(n);
        let alarm = labels[lo..hi].iter().filter(|&&l| l).count();
        let non = (hi - lo) - alarm;
        out.push(match alarm.cmp(&non) {
            std::cmp::Ordering::Greater => true,
            std::cmp::Ordering::Less => false,
            std::cmp::Ordering::Equal => labels[i],
        });
    }
    out
}

/// Smoothing window for a class: `min(l_sig, l_sil)` frames.
pub fn smoothing_window(l_sig_frames: usize, l_sil_frames: usize) -> usize {
    l_sig_frames.min(l_sil_frames).max(1)
}

/// Frame count covered by a duration on the analysis grid.
pub fn duration_frames(duration_s: f64, hop: usize, fs: u32) -> usize {
    let hop_s = hop as f64 / fs as f64;
    (duration_s / hop_s).round().max(1.0) as usize
}

/// Onsets of maximal alarm runs, thinned by the keep-first spacing rule.
pub fn frames_to_periods(labels: &[bool], min_spacing: f64) -> Vec<usize> {
    let mut onsets = Vec::new();
    let mut last_kept: Option<usize> = None;
    for i in 0..labels.len() {
        let run_start = labels[i] && (i == 0 || !labels[i - 1]);
        if run_start {
            let ok = match last_kept {
                Some(prev) => (i - prev) as f64 >= min_spacing,
                None => true,
            };
            if ok {
                onsets.push(i);
                last_kept = Some(i);
            }
        }
    }
    onsets
}

/// Paint `l_sig` alarm frames from every onset, clipped to the track length.
pub fn periods_to_frames(onsets: &[usize], l_sig: usize, n_frames: usize) -> Vec<bool> {
    let mut out = vec![false; n_frames];
    for &o in onsets {
        for slot in out.iter_mut().skip(o).take(l_sig) {
            *slot = true;
        }
    }
    out
}

/// Combination of a frame scheme with a period scheme: an alarm run survives
/// only if some period onset lands inside it or within `l_sig/2` frames of
/// its ends; onsets survive only if they confirmed a surviving run.
pub fn combine_schemes(
    frame_labels: &[bool],
    period_onsets: &[(usize, f64)],
    l_sig_frames: usize,
) -> (Vec<bool>, Vec<(usize, f64)>) {
    let tol = l_sig_frames as f64 / 2.0;
    let mut out = vec![false; frame_labels.len()];
    let mut onset_used = vec![false; period_onsets.len()];
    let mut i = 0;
    while i < frame_labels.len() {
        if frame_labels[i] {
            let start = i;
            while i < frame_labels.len() && frame_labels[i] {
                i += 1;
            }
            let end = i - 1;
            let mut confirmed = false;
            for (oi, &(onset, _)) in period_onsets.iter().enumerate() {
                let dist = if onset < start {
                    (start - onset) as f64
                } else if onset > end {
                    (onset - end) as f64
                } else {
                    0.0
                };
                if dist <= tol {
                    onset_used[oi] = true;
                    confirmed = true;
                }
            }
            if confirmed {
                for slot in out.iter_mut().take(end + 1).skip(start) {
                    *slot = true;
                }
            }
        } else {
            i += 1;
        }
    }
    let onsets = period_onsets
        .iter()
        .zip(onset_used.iter())
        .filter(|(_, &used)| used)
        .map(|(&p, _)| p)
        .collect();
    (out, onsets)
}

/// Threshold at the equal error rate: sweep midpoints between sorted unique
/// scores (plus outer extremes), keep the first threshold minimizing
/// `|MR - FAR|`, and report `(threshold, (MR + FAR) / 2)`. Errors if either
/// class is absent.
pub fn eer_threshold(scores: &[f64], labels: &[bool]) -> Result<(f64, f64)> {
    assert_eq!(scores.len(), labels.len());
    let n_alarm = labels.iter().filter(|&&l| l).count();
    let n_non = labels.len() - n_alarm;
    if n_alarm == 0 || n_non == 0 {
        return Err(Error::data(format!(
            "EER needs both classes; got {n_alarm} alarm and {n_non} non-alarm scores"
        )));
    }
    let mut unique: Vec<f64> = scores.to_vec();
    unique.sort_by(|a, b| a.partial_cmp(b).unwrap());
    unique.dedup();
    let mut sweep = Vec::with_capacity(unique.len() + 1);
    sweep.push(unique[0] - 1.0);
    for pair in unique.windows(2) {
        sweep.push((pair[0] + pair[1]) / 2.0);
    }
    sweep.push(unique[unique.len() - 1] + 1.0);

    let mut best: Option<(f64, f64, f64)> = None; // (threshold, |mr-far|, eer)
    for &thr in &sweep {
        let mut missed = 0usize;
        let mut false_alarm = 0usize;
        for (&s, &l) in scores.iter().zip(labels.iter()) {
            let predicted = s > thr;
            if l && !predicted {
                missed += 1;
            }
            if !l && predicted {
                false_alarm += 1;
            }
        }
        let mr = missed as f64 / n_alarm as f64;
        let far = false_alarm as f64 / n_non as f64;
        let diff = (mr - far).abs();
        if best.map_or(true, |(_, d, _)| diff < d) {
            best = Some((thr, diff, (mr + far) / 2.0));
        }
    }
    let (thr, _, eer) = best.unwrap();
    Ok((thr, eer))
}

/// Reference frame labels for one class: a frame is alarm when at least half
/// of its span overlaps the union of that class's annotated intervals.
pub fn reference_frame_labels(
    annotations: &[Annotation],
    class_id: &str,
    n_frames: usize,
    frame_len: usize,
    hop: usize,
    fs: u32,
) -> Vec<bool> {
    let mut intervals: Vec<(f64, f64)> = annotations
        .iter()
        .filter(|a| a.class_id == class_id)
        .map(|a| (a.start_s, a.end_s))
        .collect();
    intervals.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    // Union of possibly overlapping intervals.
    let mut merged: Vec<(f64, f64)> = Vec::new();
    for (s, e) in intervals {
        match merged.last_mut() {
            Some((_, le)) if s <= *le => *le = le.max(e),
            _ => merged.push((s, e)),
        }
    }
    let fs = fs as f64;
    let frame_dur = frame_len as f64 / fs;
    (0..n_frames)
        .map(|i| {
            let a = i as f64 * hop as f64 / fs;
            let b = a + frame_dur;
            let overlap: f64 = merged
                .iter()
                .map(|&(s, e)| (b.min(e) - a.max(s)).max(0.0))
                .sum();
            overlap >= 0.5 * frame_dur
        })
        .collect()
}
