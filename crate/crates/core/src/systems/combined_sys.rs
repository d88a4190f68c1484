//! Combined detection system on the fold harness: sinusoid-evidence frame
//! features scored by per-class Gaussian state models, with selectable
//! post-processing - none, majority smoothing, period-probability temporal
//! modelling, or their parallel combination. The peak mixture models are
//! trained once per run and shared across classes and folds.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::audio::{frame_signal, FRAME_HOP, FRAME_LEN};
use crate::dsp;
use crate::error::{Error, Result};
use crate::eval::{
    period_metrics_per_ref, reference_onsets, ClassDetection, DetectionPipeline, FoldContext,
    PeriodCounts, ScenarioDetections, ToleranceConfig,
};
use crate::registry::Registry;
use crate::seeding::derive_seed;
use crate::sinusoid::{
    assemble_frame_feature, class_intervals, extract_peak_features, score_spectrum,
    GaussClassModel, SinusoidModels, FINE_FFT_LEN,
};
use crate::synth::AnnotatedScenario;
use crate::systems::nonmodel_sys::merge_version_candidates;
use crate::temporal::{
    combine_schemes, duration_frames, eer_threshold, frames_to_periods, majority_smooth,
    period_probability_delta, periods_to_frames, pick_periods, reference_frame_labels,
    smoothing_window, PeriodProbabilityTrack, PosteriorTrack,
};

/// Candidate count of the period-threshold sweep (inclusive endpoints).
const PERIOD_SWEEP_POINTS: usize = 101;
/// Onsets must sit at least this fraction of the period apart.
const MIN_ONSET_SPACING_PERIODS: f64 = 0.75;

/// Post-processing applied to the frame-level decisions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PostScheme {
    /// Raw thresholded frame labels.
    None,
    /// Majority-vote smoothing.
    Smoothing,
    /// Period-probability temporal modelling.
    TemporalModel,
    /// Smoothing and temporal modelling combined in parallel.
    Combined,
}

impl PostScheme {
    pub fn parse(name: &str) -> Result<PostScheme> {
        match name {
            "none" => Ok(PostScheme::None),
            "s" => Ok(PostScheme::Smoothing),
            "tm" => Ok(PostScheme::TemporalModel),
            "stm" => Ok(PostScheme::Combined),
            other => Err(Error::config(format!(
                "unknown post-processing scheme '{other}' (expected none, s, tm, stm)"
            ))),
        }
    }

    fn tag(&self) -> &'static str {
        match self {
            PostScheme::None => "none",
            PostScheme::Smoothing => "s",
            PostScheme::TemporalModel => "tm",
            PostScheme::Combined => "stm",
        }
    }

    fn smooths(&self) -> bool {
        matches!(self, PostScheme::Smoothing | PostScheme::Combined)
    }

    fn models_periods(&self) -> bool {
        matches!(self, PostScheme::TemporalModel | PostScheme::Combined)
    }
}

/// Trained per-fold state of one run: Gaussian state models, frame decision
/// thresholds, and period-probability thresholds (temporal schemes only).
/// Capturable after a run and injectable into a later one.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct CombinedFrozen {
    pub gaussians: BTreeMap<usize, BTreeMap<String, GaussClassModel>>,
    pub eer_thresholds: BTreeMap<usize, BTreeMap<String, f64>>,
    pub period_thresholds: BTreeMap<usize, BTreeMap<String, f64>>,
}

struct CombinedVersion {
    l_sig_frames: usize,
    l_sil_frames: usize,
    period_s: f64,
}

struct CombinedBank {
    class_id: String,
    /// Fine-grid bin intervals around the class's component frequencies.
    intervals: Vec<(usize, usize)>,
    versions: Vec<CombinedVersion>,
    min_period_s: f64,
    min_sig_frames: usize,
    min_sil_frames: usize,
}

pub struct CombinedSystem {
    name: String,
    scheme: PostScheme,
    sample_rate: u32,
    seed: u64,
    registry: Registry,
    models: SinusoidModels,
    banks: Vec<CombinedBank>,
    /// (scenario_id, class_id) -> per-frame class features. Features do not
    /// depend on the fold, so tracks are shared across folds.
    feature_cache: HashMap<(String, String), Vec<Vec<f64>>>,
    captured: CombinedFrozen,
    frozen: Option<CombinedFrozen>,
}

impl CombinedSystem {
    pub fn new(
        registry: &Registry,
        models: SinusoidModels,
        scheme: PostScheme,
        seed: u64,
    ) -> Result<CombinedSystem> {
        let fs = registry.sample_rate;
        if models.sample_rate != fs {
            return Err(Error::config(format!(
                "peak models were trained at {} Hz, registry runs at {fs} Hz",
                models.sample_rate
            )));
        }
        let mut banks = Vec::with_capacity(registry.classes.len());
        for class in &registry.classes {
            let mut versions = Vec::with_capacity(class.versions.len());
            let mut min_sig = usize::MAX;
            let mut min_sil = usize::MAX;
            for version in &class.versions {
                let l_sig = duration_frames(version.signal_s(), FRAME_HOP, fs);
                let l_sil =
                    duration_frames(version.period_s() - version.signal_s(), FRAME_HOP, fs);
                min_sig = min_sig.min(l_sig);
                min_sil = min_sil.min(l_sil);
                versions.push(CombinedVersion {
                    l_sig_frames: l_sig,
                    l_sil_frames: l_sil,
                    period_s: version.period_s(),
                });
            }
            banks.push(CombinedBank {
                class_id: class.id.clone(),
                intervals: class_intervals(class, fs, FINE_FFT_LEN)?,
                versions,
                min_period_s: class.min_period_s(),
                min_sig_frames: min_sig,
                min_sil_frames: min_sil,
            });
        }
        Ok(CombinedSystem {
            name: format!("combined-{}", scheme.tag()),
            scheme,
            sample_rate: fs,
            seed,
            registry: registry.clone(),
            models,
            banks,
            feature_cache: HashMap::new(),
            captured: CombinedFrozen::default(),
            frozen: None,
        })
    }

    /// Reuse state captured from an earlier run instead of fitting models
    /// and sweeping thresholds.
    pub fn with_frozen(mut self, frozen: CombinedFrozen) -> CombinedSystem {
        self.frozen = Some(frozen);
        self
    }

    /// State applied by the folds run so far.
    pub fn captured(&self) -> &CombinedFrozen {
        &self.captured
    }

    fn hop_s(&self) -> f64 {
        FRAME_HOP as f64 / self.sample_rate as f64
    }

    fn spacing_frames(&self, bank: &CombinedBank) -> f64 {
        MIN_ONSET_SPACING_PERIODS * bank.min_period_s / self.hop_s()
    }

    /// Extract every class's feature track of one scenario in a single pass
    /// over its frames.
    fn ensure_features(&mut self, scenario: &AnnotatedScenario) {
        let probe = (scenario.id.clone(), self.banks[0].class_id.clone());
        if self.feature_cache.contains_key(&probe) {
            return;
        }
        let frames = frame_signal(&scenario.audio.samples, FRAME_LEN, FRAME_HOP);
        let mut per_class: Vec<Vec<Vec<f64>>> =
            vec![Vec::with_capacity(frames.len()); self.banks.len()];
        let mut prev_phases: Option<Vec<f64>> = None;
        for (t, frame) in frames.iter().enumerate() {
            let (mags, phases) = dsp::spectrum_mag_phase(frame, FINE_FFT_LEN);
            let peaks = extract_peak_features(
                &mags,
                &phases,
                prev_phases.as_deref(),
                FRAME_HOP,
                FINE_FFT_LEN,
            );
            let scored = score_spectrum(&peaks, t, &self.models.sin, &self.models.noise);
            for (ci, bank) in self.banks.iter().enumerate() {
                let filler_seed = derive_seed(self.seed, &scenario.id, ci as u64);
                per_class[ci].push(assemble_frame_feature(
                    &scored,
                    &mags,
                    &bank.intervals,
                    filler_seed,
                ));
            }
            prev_phases = Some(phases);
        }
        for (ci, feats) in per_class.into_iter().enumerate() {
            self.feature_cache
                .insert((scenario.id.clone(), self.banks[ci].class_id.clone()), feats);
        }
    }

    fn features(&self, scenario_id: &str, class_id: &str) -> &[Vec<f64>] {
        &self.feature_cache[&(scenario_id.to_string(), class_id.to_string())]
    }

    fn fit_gaussian(&self, ctx: &FoldContext, bank: &CombinedBank) -> Result<GaussClassModel> {
        let mut feats: Vec<Vec<f64>> = Vec::new();
        let mut labels: Vec<bool> = Vec::new();
        for sess in &ctx.train {
            for scenario in &sess.scenarios {
                let track = self.features(&scenario.id, &bank.class_id);
                let refs = reference_frame_labels(
                    &scenario.annotations,
                    &bank.class_id,
                    track.len(),
                    FRAME_LEN,
                    FRAME_HOP,
                    self.sample_rate,
                );
                feats.extend_from_slice(track);
                labels.extend(refs);
            }
        }
        GaussClassModel::fit(&feats, &labels)
    }

    /// Posterior margin per frame: alarm minus non-alarm probability, i.e.
    /// tanh of half the log-posterior margin. Bounded in [-1, 1], so period
    /// aggregation counts per-frame evidence instead of density magnitudes;
    /// one loud interferer frame otherwise outweighs a whole alarm period.
    fn delta_track(&self, gauss: &GaussClassModel, scenario_id: &str, class_id: &str) -> Vec<f64> {
        let track = self.features(scenario_id, class_id);
        let mut ll_a = Vec::with_capacity(track.len());
        let mut ll_na = Vec::with_capacity(track.len());
        for f in track {
            let (a, na) = gauss.score(f);
            ll_a.push(a);
            ll_na.push(na);
        }
        PosteriorTrack::from_log_likelihoods(&ll_a, &ll_na, self.hop_s())
            .delta()
            .into_iter()
            .map(|d| (d / 2.0).tanh())
            .collect()
    }

    fn period_tracks(&self, bank: &CombinedBank, delta: &[f64]) -> Result<Vec<PeriodProbabilityTrack>> {
        bank.versions
            .iter()
            .map(|v| {
                let values = period_probability_delta(delta, v.l_sig_frames, v.l_sil_frames)?;
                Ok(PeriodProbabilityTrack {
                    values,
                    l_sig_frames: v.l_sig_frames,
                    l_sil_frames: v.l_sil_frames,
                    hop_s: self.hop_s(),
                })
            })
            .collect()
    }

    /// Cross-version period picks at one threshold: per-version peaks above
    /// it, merged under the spacing rule in the frame domain. Entries are
    /// (frame, peak value, version index).
    fn period_picks(
        &self,
        bank: &CombinedBank,
        pp: &[PeriodProbabilityTrack],
        threshold: f64,
    ) -> Vec<(f64, f64, usize)> {
        let mut pooled: Vec<(f64, f64, usize)> = Vec::new();
        for (vi, (track, version)) in pp.iter().zip(bank.versions.iter()).enumerate() {
            for (frame, value) in pick_periods(track, threshold, version.period_s) {
                pooled.push((frame as f64, value, vi));
            }
        }
        merge_version_candidates(pooled, self.spacing_frames(bank))
    }

    /// Class period threshold: the sweep value maximizing period-level F1 of
    /// this scheme's own output over the training scenarios. For the
    /// combination scheme each candidate is scored after the smoothing veto
    /// (with a frame threshold pooled over the training scenarios), since
    /// that is the output the threshold serves. Ties resolve to the smallest
    /// maximizer: period-probability scale moves with the fitted Gaussian
    /// sharpness, so only the low end of a winning plateau survives
    /// fold-to-fold scale changes.
    fn sweep_period_threshold(
        &self,
        ctx: &FoldContext,
        bank: &CombinedBank,
        gauss: &GaussClassModel,
    ) -> Result<f64> {
        struct SweepEntry {
            pp: Vec<PeriodProbabilityTrack>,
            refs: Vec<(f64, f64)>,
            delta: Vec<f64>,
            ref_labels: Vec<bool>,
        }
        let mut entries: Vec<SweepEntry> = Vec::new();
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for sess in &ctx.train {
            for scenario in &sess.scenarios {
                let delta = self.delta_track(gauss, &scenario.id, &bank.class_id);
                let pp = self.period_tracks(bank, &delta)?;
                for (track, version) in pp.iter().zip(bank.versions.iter()) {
                    for (_, value) in pick_periods(track, f64::NEG_INFINITY, version.period_s) {
                        lo = lo.min(value);
                        hi = hi.max(value);
                    }
                }
                let refs = reference_onsets(
                    scenario,
                    &self.registry,
                    &bank.class_id,
                    ToleranceConfig::pb_err(),
                )?;
                let ref_labels = reference_frame_labels(
                    &scenario.annotations,
                    &bank.class_id,
                    delta.len(),
                    FRAME_LEN,
                    FRAME_HOP,
                    self.sample_rate,
                );
                entries.push(SweepEntry { pp, refs, delta, ref_labels });
            }
        }
        if lo > hi {
            // No period-probability peaks anywhere in training.
            return Ok(0.0);
        }

        let smoothed: Option<Vec<Vec<bool>>> = if matches!(self.scheme, PostScheme::Combined) {
            let mut pooled_scores = Vec::new();
            let mut pooled_labels = Vec::new();
            for e in &entries {
                pooled_scores.extend_from_slice(&e.delta);
                pooled_labels.extend_from_slice(&e.ref_labels);
            }
            let thr = eer_threshold(&pooled_scores, &pooled_labels)?.0;
            let window = smoothing_window(bank.min_sig_frames, bank.min_sil_frames);
            Some(
                entries
                    .iter()
                    .map(|e| {
                        let raw: Vec<bool> = e.delta.iter().map(|&d| d > thr).collect();
                        majority_smooth(&raw, window)
                    })
                    .collect(),
            )
        } else {
            None
        };

        let candidates: Vec<f64> = (0..PERIOD_SWEEP_POINTS)
            .map(|i| lo + (hi - lo) * i as f64 / (PERIOD_SWEEP_POINTS - 1) as f64)
            .collect();
        let mut scores = Vec::with_capacity(candidates.len());
        for &cand in &candidates {
            let mut counts = PeriodCounts::default();
            for (i, entry) in entries.iter().enumerate() {
                let picks = self.period_picks(bank, &entry.pp, cand);
                let onset_frames: Vec<usize> = match smoothed.as_ref() {
                    Some(labels) => {
                        let frame_picks: Vec<(usize, f64)> =
                            picks.iter().map(|p| (p.0 as usize, p.1)).collect();
                        let (_, confirmed) =
                            combine_schemes(&labels[i], &frame_picks, bank.min_sig_frames);
                        confirmed.into_iter().map(|(f, _)| f).collect()
                    }
                    None => picks.into_iter().map(|(f, _, _)| f as usize).collect(),
                };
                let onsets: Vec<f64> = onset_frames
                    .into_iter()
                    .map(|f| super::frame_onset_s(f, FRAME_HOP, self.sample_rate))
                    .collect();
                counts.add(&period_metrics_per_ref(&entry.refs, &onsets));
            }
            scores.push(1.0 - counts.pb_err());
        }
        let best = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let winner = (0..scores.len())
            .find(|&i| scores[i] == best)
            .expect("sweep produced at least one candidate");
        Ok(candidates[winner])
    }

    fn frozen_entry<'a, T>(
        table: &'a BTreeMap<usize, BTreeMap<String, T>>,
        fold: usize,
        class_id: &str,
        what: &str,
    ) -> Result<&'a T> {
        table.get(&fold).and_then(|m| m.get(class_id)).ok_or_else(|| {
            Error::config(format!(
                "frozen state carries no {what} for fold {fold}, class {class_id}"
            ))
        })
    }

    /// Detection of one test scenario under the configured scheme.
    fn detect(
        &self,
        bank: &CombinedBank,
        delta: Vec<f64>,
        eer_thr: f64,
        period_thr: Option<f64>,
    ) -> Result<ClassDetection> {
        let n_frames = delta.len();
        let raw: Vec<bool> = delta.iter().map(|&d| d > eer_thr).collect();
        let spacing = self.spacing_frames(bank);

        let smoothed = self.scheme.smooths().then(|| {
            majority_smooth(&raw, smoothing_window(bank.min_sig_frames, bank.min_sil_frames))
        });
        let period_onsets: Option<Vec<(f64, f64, usize)>> = match period_thr {
            Some(thr) => {
                let pp = self.period_tracks(bank, &delta)?;
                Some(self.period_picks(bank, &pp, thr))
            }
            None => None,
        };

        let (frame_labels, onset_frames): (Vec<bool>, Vec<usize>) = match self.scheme {
            PostScheme::None => {
                let onsets = frames_to_periods(&raw, spacing);
                (raw, onsets)
            }
            PostScheme::Smoothing => {
                let labels = smoothed.expect("scheme smooths");
                let onsets = frames_to_periods(&labels, spacing);
                (labels, onsets)
            }
            PostScheme::TemporalModel => {
                let picks = period_onsets.expect("scheme models periods");
                let mut labels = vec![false; n_frames];
                for (vi, version) in bank.versions.iter().enumerate() {
                    let frames: Vec<usize> = picks
                        .iter()
                        .filter(|p| p.2 == vi)
                        .map(|p| p.0 as usize)
                        .collect();
                    let marked = periods_to_frames(&frames, version.l_sig_frames, n_frames);
                    for (slot, m) in labels.iter_mut().zip(marked) {
                        *slot |= m;
                    }
                }
                let onsets = picks.iter().map(|p| p.0 as usize).collect();
                (labels, onsets)
            }
            PostScheme::Combined => {
                let s_labels = smoothed.expect("scheme smooths");
                let picks = period_onsets.expect("scheme models periods");
                let frame_picks: Vec<(usize, f64)> =
                    picks.iter().map(|p| (p.0 as usize, p.1)).collect();
                let (labels, confirmed) =
                    combine_schemes(&s_labels, &frame_picks, bank.min_sig_frames);
                (labels, confirmed.into_iter().map(|(f, _)| f).collect())
            }
        };

        Ok(ClassDetection {
            frame_labels,
            onsets: onset_frames
                .into_iter()
                .map(|f| super::frame_onset_s(f, FRAME_HOP, self.sample_rate))
                .collect(),
            frame_scores: Some(delta),
        })
    }
}

impl DetectionPipeline for CombinedSystem {
    fn name(&self) -> &str {
        &self.name
    }

    fn run_fold(&mut self, ctx: &FoldContext) -> Result<Vec<ScenarioDetections>> {
        for sess in ctx.train.iter().chain(std::iter::once(&ctx.test)) {
            for scenario in &sess.scenarios {
                self.ensure_features(scenario);
            }
        }

        let mut per_class_rows: Vec<Vec<ClassDetection>> = Vec::with_capacity(self.banks.len());
        for bi in 0..self.banks.len() {
            let bank = &self.banks[bi];
            let class_id = bank.class_id.clone();

            let gauss = match self.frozen.as_ref() {
                Some(f) => {
                    Self::frozen_entry(&f.gaussians, ctx.fold_index, &class_id, "Gaussian model")?
                        .clone()
                }
                None => self.fit_gaussian(ctx, bank)?,
            };

            let period_thr = if self.scheme.models_periods() {
                Some(match self.frozen.as_ref() {
                    Some(f) => *Self::frozen_entry(
                        &f.period_thresholds,
                        ctx.fold_index,
                        &class_id,
                        "period threshold",
                    )?,
                    None => self.sweep_period_threshold(ctx, bank, &gauss)?,
                })
            } else {
                None
            };

            let deltas: Vec<Vec<f64>> = ctx
                .test
                .scenarios
                .iter()
                .map(|s| self.delta_track(&gauss, &s.id, &class_id))
                .collect();

            let eer_thr = match self.frozen.as_ref() {
                Some(f) => *Self::frozen_entry(
                    &f.eer_thresholds,
                    ctx.fold_index,
                    &class_id,
                    "decision threshold",
                )?,
                None => {
                    let mut pooled_scores = Vec::new();
                    let mut pooled_labels = Vec::new();
                    for (scenario, delta) in ctx.test.scenarios.iter().zip(deltas.iter()) {
                        pooled_scores.extend_from_slice(delta);
                        pooled_labels.extend(reference_frame_labels(
                            &scenario.annotations,
                            &class_id,
                            delta.len(),
                            FRAME_LEN,
                            FRAME_HOP,
                            self.sample_rate,
                        ));
                    }
                    eer_threshold(&pooled_scores, &pooled_labels)?.0
                }
            };

            let mut rows = Vec::with_capacity(deltas.len());
            for delta in deltas {
                rows.push(self.detect(bank, delta, eer_thr, period_thr)?);
            }
            per_class_rows.push(rows);

            let fold = ctx.fold_index;
            self.captured.gaussians.entry(fold).or_default().insert(class_id.clone(), gauss);
            self.captured
                .eer_thresholds
                .entry(fold)
                .or_default()
                .insert(class_id.clone(), eer_thr);
            if let Some(thr) = period_thr {
                self.captured
                    .period_thresholds
                    .entry(fold)
                    .or_default()
                    .insert(class_id, thr);
            }
        }

        let mut results = Vec::with_capacity(ctx.test.scenarios.len());
        for (k, scenario) in ctx.test.scenarios.iter().enumerate() {
            let mut per_class = BTreeMap::new();
            for (bi, rows) in per_class_rows.iter_mut().enumerate() {
                per_class
                    .insert(self.banks[bi].class_id.clone(), std::mem::take(&mut rows[k]));
            }
            results.push(ScenarioDetections { scenario_id: scenario.id.clone(), per_class });
        }
        Ok(results)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::{generate_benchmark, BenchConfig};
    use crate::eval::{run_cv, SessionScenarios};
    use crate::sinusoid::train_sinusoid_models_with;
    use crate::synth::NoiseKind;
    use std::sync::OnceLock;

    pub(super) fn shared_models() -> &'static SinusoidModels {
        static MODELS: OnceLock<SinusoidModels> = OnceLock::new();
        MODELS.get_or_init(|| train_sinusoid_models_with(24000, 7, 1200).unwrap())
    }

    pub(super) fn small_benchmark() -> (Registry, Vec<SessionScenarios>) {
        let registry = Registry::default_synthetic();
        let cfg = BenchConfig::new(2, f64::INFINITY, NoiseKind::White, 11);
        let sessions = generate_benchmark(&registry, &cfg).unwrap();
        (registry, sessions)
    }

    #[test]
    fn noise_free_benchmark_scores_zero_period_error() {
        // 4 sessions: the smallest benchmark where every leave-one-out
        // training fold still contains every class version. Period
        // thresholds are absolute period-probability values, so the class
        // model must have seen each version's scale during training.
        let registry = Registry::default_synthetic();
        let cfg = BenchConfig::new(4, f64::INFINITY, NoiseKind::White, 11);
        let sessions = generate_benchmark(&registry, &cfg).unwrap();
        let mut sys = CombinedSystem::new(
            &registry,
            shared_models().clone(),
            PostScheme::Combined,
            5,
        )
        .unwrap();
        let report = run_cv(&sessions, &registry, &mut sys, 5, 4).unwrap();
        assert_eq!(report.system, "combined-stm");
        for class in &report.per_class {
            assert_eq!(
                class.period.pb_err(),
                0.0,
                "class {} must be period-perfect without noise: {:?}",
                class.class_id,
                class.period
            );
            assert!(class.period.n_correct > 0, "class {} never fired", class.class_id);
        }
    }

    #[test]
    fn frozen_state_reproduces_the_capturing_run() {
        let (registry, sessions) = small_benchmark();
        let mut first = CombinedSystem::new(
            &registry,
            shared_models().clone(),
            PostScheme::Combined,
            5,
        )
        .unwrap();
        let report_a = run_cv(&sessions, &registry, &mut first, 5, 2).unwrap();
        let captured = first.captured().clone();
        assert_eq!(captured.gaussians.len(), 2);
        assert_eq!(captured.period_thresholds[&0].len(), registry.classes.len());

        let mut second = CombinedSystem::new(
            &registry,
            shared_models().clone(),
            PostScheme::Combined,
            5,
        )
        .unwrap()
        .with_frozen(captured);
        let report_b = run_cv(&sessions, &registry, &mut second, 5, 2).unwrap();
        assert_eq!(report_a.to_csv(), report_b.to_csv());
    }

    #[test]
    fn combination_never_adds_frames_beyond_smoothing() {
        let (registry, sessions) = small_benchmark();
        let run = |scheme: PostScheme| {
            let mut sys =
                CombinedSystem::new(&registry, shared_models().clone(), scheme, 5).unwrap();
            run_cv(&sessions, &registry, &mut sys, 5, 2).unwrap()
        };
        let s = run(PostScheme::Smoothing);
        let stm = run(PostScheme::Combined);
        for (cs, cc) in s.per_class.iter().zip(stm.per_class.iter()) {
            let alarm_s = cs.frame.n_alarm - cs.frame.n_missed + cs.frame.n_false_alarm;
            let alarm_stm = cc.frame.n_alarm - cc.frame.n_missed + cc.frame.n_false_alarm;
            assert!(
                alarm_stm <= alarm_s,
                "class {}: combination marked {alarm_stm} alarm frames, smoothing {alarm_s}",
                cs.class_id
            );
        }
    }

    #[test]
    fn missing_frozen_entry_is_a_config_error() {
        let (registry, sessions) = small_benchmark();
        let mut sys = CombinedSystem::new(
            &registry,
            shared_models().clone(),
            PostScheme::Combined,
            5,
        )
        .unwrap()
        .with_frozen(CombinedFrozen::default());
        let err = run_cv(&sessions, &registry, &mut sys, 5, 2).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }
}
