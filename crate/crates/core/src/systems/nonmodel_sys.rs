//! Matched-filter detection system on the fold harness. Each class runs a
//! bank of per-version detectors; compressor thresholds are pooled from the
//! training sessions, decision thresholds follow the oracle or
//! cross-validated protocol, and version detections merge under the period
//! spacing rule.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::audio::{frame_count, FRAME_HOP, FRAME_LEN};
use crate::dsp;
use crate::error::{Error, Result};
use crate::eval::{ClassDetection, DetectionPipeline, FoldContext, ScenarioDetections};
use crate::nonmodel::{
    bands_for, candidate_peaks, decimated_level_db, envelope_for, estimate_threshold_cv,
    onset_guard_s, oracle_threshold_from_peaks, reference_from_registry, smooth_envelope,
    smoothing_fir_for, threshold_from_levels, CompressorConfig, DecisionThreshold,
    ReferenceSignal, SmoothingFir, ThresholdMode, MIN_ONSET_SPACING_PERIODS,
};
use crate::registry::Registry;
use crate::synth::AnnotatedScenario;
use crate::temporal::{duration_frames, periods_to_frames};

/// Thresholds of one run, keyed the way they are applied: compressor
/// thresholds per fold and class, decision thresholds per class and test
/// scenario. Capturable after a run and injectable into a later one.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct NonModelThresholds {
    pub compressor_db: BTreeMap<usize, BTreeMap<String, f64>>,
    pub decision: BTreeMap<String, BTreeMap<String, f64>>,
}

struct VersionBank {
    reference: ReferenceSignal,
    fir: SmoothingFir,
    period_s: f64,
    signal_s: f64,
    l_sig_frames: usize,
}

struct ClassBank {
    class_id: String,
    versions: Vec<VersionBank>,
    /// Level-tracking filter bands: the class's component union.
    bands: Vec<(f64, f64)>,
    min_period_s: f64,
}

pub struct NonModelSystem {
    mode: ThresholdMode,
    sample_rate: u32,
    banks: Vec<ClassBank>,
    /// (scenario_id, class_id) -> decimated level track of the class-banded
    /// stream; levels do not depend on the compressor threshold, so tracks
    /// are shared across folds.
    level_cache: HashMap<(String, String), Vec<f64>>,
    captured: NonModelThresholds,
    frozen: Option<NonModelThresholds>,
}

impl NonModelSystem {
    pub fn new(registry: &Registry, mode: ThresholdMode) -> Result<NonModelSystem> {
        let fs = registry.sample_rate;
        let fs_f = fs as f64;
        let mut banks = Vec::with_capacity(registry.classes.len());
        for class in &registry.classes {
            let mut versions = Vec::with_capacity(class.versions.len());
            for (vi, version) in class.versions.iter().enumerate() {
                let reference = reference_from_registry(registry, &class.id, vi as u32)?;
                let fir = smoothing_fir_for(&reference, fs_f)?;
                versions.push(VersionBank {
                    fir,
                    period_s: version.period_s(),
                    signal_s: version.signal_s(),
                    l_sig_frames: duration_frames(version.signal_s(), FRAME_HOP, fs),
                    reference,
                });
            }
            banks.push(ClassBank {
                class_id: class.id.clone(),
                bands: bands_for(&class.frequency_union(0.0)),
                min_period_s: class.min_period_s(),
                versions,
            });
        }
        Ok(NonModelSystem {
            mode,
            sample_rate: fs,
            banks,
            level_cache: HashMap::new(),
            captured: NonModelThresholds::default(),
            frozen: None,
        })
    }

    /// Reuse thresholds captured from an earlier run instead of estimating.
    pub fn with_frozen(mut self, thresholds: NonModelThresholds) -> NonModelSystem {
        self.frozen = Some(thresholds);
        self
    }

    /// Thresholds applied by the folds run so far.
    pub fn captured(&self) -> &NonModelThresholds {
        &self.captured
    }

    fn ensure_level(&mut self, scenario: &AnnotatedScenario, bank_idx: usize) {
        let key = (scenario.id.clone(), self.banks[bank_idx].class_id.clone());
        if !self.level_cache.contains_key(&key) {
            let banded = dsp::band_mask_filter(
                &scenario.audio.samples,
                self.sample_rate as f64,
                &self.banks[bank_idx].bands,
            );
            let track =
                decimated_level_db(&banded, &CompressorConfig::standard(0.0), self.sample_rate as f64);
            self.level_cache.insert(key, track);
        }
    }

    fn compressor_threshold(&mut self, ctx: &FoldContext, bank_idx: usize) -> Result<f64> {
        for sess in &ctx.train {
            for scenario in &sess.scenarios {
                self.ensure_level(scenario, bank_idx);
            }
        }
        let class_id = self.banks[bank_idx].class_id.clone();
        let mut tracks: Vec<&[f64]> = Vec::new();
        for sess in &ctx.train {
            for scenario in &sess.scenarios {
                let key = (scenario.id.clone(), class_id.clone());
                tracks.push(self.level_cache[&key].as_slice());
            }
        }
        threshold_from_levels(&tracks)
    }

    /// Candidate peaks of one scenario for one class: per-version envelope,
    /// smoothing, and peak picking, then the cross-version merge. Entries
    /// are (time s, height, version index), time-ordered.
    pub fn merged_peaks(
        &self,
        samples: &[f64],
        class_id: &str,
        compressor_db: f64,
    ) -> Result<Vec<(f64, f64, usize)>> {
        let bank = self.bank(class_id)?;
        let fs_f = self.sample_rate as f64;
        let mut pooled: Vec<(f64, f64, usize)> = Vec::new();
        for (vi, vb) in bank.versions.iter().enumerate() {
            let envelope = envelope_for(samples, &vb.reference, compressor_db, fs_f)?;
            let smoothed = smooth_envelope(&envelope.values, &vb.fir);
            for (t, h) in candidate_peaks(&smoothed, vb.period_s, fs_f) {
                pooled.push((t, h, vi));
            }
        }
        Ok(merge_version_candidates(
            pooled,
            MIN_ONSET_SPACING_PERIODS * bank.min_period_s,
        ))
    }

    fn oracle_u(
        &self,
        scenario: &AnnotatedScenario,
        bank: &ClassBank,
        merged: &[(f64, f64, usize)],
    ) -> DecisionThreshold {
        let spans: Vec<(f64, f64)> = scenario
            .annotations
            .iter()
            .filter(|a| a.class_id == bank.class_id)
            .map(|a| (a.start_s, a.end_s))
            .collect();
        let max_signal_s = bank.versions.iter().map(|v| v.signal_s).fold(0.0f64, f64::max);
        let untagged: Vec<(f64, f64)> = merged.iter().map(|&(t, h, _)| (t, h)).collect();
        oracle_threshold_from_peaks(&untagged, &spans, onset_guard_s(max_signal_s))
    }

    /// Detections above the threshold, as the harness consumes them.
    pub fn detection_from_peaks(
        &self,
        class_id: &str,
        merged: &[(f64, f64, usize)],
        threshold: DecisionThreshold,
        n_frames: usize,
    ) -> Result<ClassDetection> {
        let bank = self.bank(class_id)?;
        let accepted: Vec<&(f64, f64, usize)> =
            merged.iter().filter(|p| p.1 > threshold.u).collect();
        let mut frame_labels = vec![false; n_frames];
        for (vi, vb) in bank.versions.iter().enumerate() {
            let onsets: Vec<usize> = accepted
                .iter()
                .filter(|p| p.2 == vi)
                .map(|p| super::onset_frame(p.0, FRAME_HOP, self.sample_rate))
                .collect();
            let marked = periods_to_frames(&onsets, vb.l_sig_frames, n_frames);
            for (slot, m) in frame_labels.iter_mut().zip(marked) {
                *slot |= m;
            }
        }
        Ok(ClassDetection {
            frame_labels,
            onsets: accepted.iter().map(|p| p.0).collect(),
            frame_scores: None,
        })
    }

    fn bank(&self, class_id: &str) -> Result<&ClassBank> {
        self.banks
            .iter()
            .find(|b| b.class_id == class_id)
            .ok_or_else(|| Error::data(format!("no detector bank for class {class_id:?}")))
    }

    fn frozen_compressor(&self, fold: usize, class_id: &str) -> Option<f64> {
        self.frozen.as_ref()?.compressor_db.get(&fold)?.get(class_id).copied()
    }

    fn frozen_decision(&self, class_id: &str, scenario_id: &str) -> Result<Option<DecisionThreshold>> {
        let Some(frozen) = self.frozen.as_ref() else {
            return Ok(None);
        };
        let u = frozen
            .decision
            .get(class_id)
            .and_then(|m| m.get(scenario_id))
            .copied()
            .ok_or_else(|| {
                Error::config(format!(
                    "frozen thresholds carry no entry for class {class_id}, scenario {scenario_id}"
                ))
            })?;
        Ok(Some(DecisionThreshold { u, mode: self.mode }))
    }
}

/// Keep-larger spacing over pooled version candidates (time, height,
/// version): peaks closer than `min_spacing` to an already accepted (larger,
/// or earlier at equal height) peak are dropped. Exact spacing survives.
/// Time and spacing share any one unit. Result time-ordered.
pub fn merge_version_candidates(
    pooled: Vec<(f64, f64, usize)>,
    min_spacing: f64,
) -> Vec<(f64, f64, usize)> {
    let mut order: Vec<usize> = (0..pooled.len()).collect();
    order.sort_by(|&a, &b| {
        pooled[b]
            .1
            .partial_cmp(&pooled[a].1)
            .unwrap()
            .then(pooled[a].0.partial_cmp(&pooled[b].0).unwrap())
    });
    let mut kept: Vec<(f64, f64, usize)> = Vec::new();
    for i in order {
        let (t, h, v) = pooled[i];
        if kept.iter().all(|&(kt, _, _)| (kt - t).abs() >= min_spacing) {
            kept.push((t, h, v));
        }
    }
    kept.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    kept
}

impl DetectionPipeline for NonModelSystem {
    fn name(&self) -> &str {
        match self.mode {
            ThresholdMode::Oracle => "nonmodel-oracle",
            ThresholdMode::Cv => "nonmodel-cv",
        }
    }

    fn run_fold(&mut self, ctx: &FoldContext) -> Result<Vec<ScenarioDetections>> {
        // Compressor threshold per class.
        let mut t_db = Vec::with_capacity(self.banks.len());
        for bi in 0..self.banks.len() {
            let t = match self.frozen_compressor(ctx.fold_index, &self.banks[bi].class_id) {
                Some(v) => v,
                None => self.compressor_threshold(ctx, bi)?,
            };
            self.captured
                .compressor_db
                .entry(ctx.fold_index)
                .or_default()
                .insert(self.banks[bi].class_id.clone(), t);
            t_db.push(t);
        }

        // Fold-level decision thresholds (cv protocol): per-scenario oracle
        // thresholds over the training fold, collapsed to their midpoint.
        let mut fold_u: Vec<Option<DecisionThreshold>> = vec![None; self.banks.len()];
        if self.frozen.is_none() && self.mode == ThresholdMode::Cv {
            for bi in 0..self.banks.len() {
                let mut us = Vec::new();
                for sess in &ctx.train {
                    for scenario in &sess.scenarios {
                        let merged = self.merged_peaks(
                            &scenario.audio.samples,
                            &self.banks[bi].class_id,
                            t_db[bi],
                        )?;
                        us.push(self.oracle_u(scenario, &self.banks[bi], &merged).u);
                    }
                }
                fold_u[bi] = Some(estimate_threshold_cv(&us));
            }
        }

        let mut results = Vec::with_capacity(ctx.test.scenarios.len());
        for scenario in &ctx.test.scenarios {
            let n_frames = frame_count(scenario.audio.samples.len(), FRAME_LEN, FRAME_HOP);
            let mut per_class = BTreeMap::new();
            for (bi, bank_t) in t_db.iter().enumerate() {
                let class_id = self.banks[bi].class_id.clone();
                let merged = self.merged_peaks(&scenario.audio.samples, &class_id, *bank_t)?;
                let threshold = match self.frozen_decision(&class_id, &scenario.id)? {
                    Some(t) => t,
                    None => match fold_u[bi] {
                        Some(t) => t,
                        None => self.oracle_u(scenario, &self.banks[bi], &merged),
                    },
                };
                self.captured
                    .decision
                    .entry(class_id.clone())
                    .or_default()
                    .insert(scenario.id.clone(), threshold.u);
                let det = self.detection_from_peaks(&class_id, &merged, threshold, n_frames)?;
                per_class.insert(class_id, det);
            }
            results.push(ScenarioDetections { scenario_id: scenario.id.clone(), per_class });
        }
        Ok(results)
    }
}
