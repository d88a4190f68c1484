//! Neural detection systems on the fold harness: one binary network per
//! class and fold, fed either generic pooled spectra or class-specific
//! frequency bins, with a five-frame time-weighting front layer. Frame
//! decisions threshold the alarm posterior at the fold's equal error rate;
//! period onsets come from majority-smoothed labels.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::audio::{frame_signal, log_spectrum, FRAME_HOP, FRAME_LEN};
use crate::error::{Error, Result};
use crate::eval::{ClassDetection, DetectionPipeline, FoldContext, ScenarioDetections};
use crate::nn::{
    balance_training_set, build_class_specific_input, build_generic_input, class_input_bins,
    stack_context, train, Activation, GenericVariant, LayerSpec, Network, Normalization,
    TrainConfig, CLASS_INPUT_HALO, TIME_CONTEXT,
};
use crate::nonmodel::MIN_ONSET_SPACING_PERIODS;
use crate::registry::Registry;
use crate::seeding::derive_seed;
use crate::synth::AnnotatedScenario;
use crate::temporal::{
    duration_frames, eer_threshold, frames_to_periods, majority_smooth, reference_frame_labels,
    smoothing_window,
};

/// Hidden layer width after the time-weighting layer.
const HIDDEN_UNITS: usize = 8;

/// Per-frame input source for the networks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NnInput {
    /// Same pooled spectrum for every class.
    Generic(GenericVariant),
    /// Log magnitudes at each class's own frequency bins (halo 2).
    ClassSpecific,
}

/// Trained state of one run: networks and decision thresholds per fold and
/// class. Capturable after a run and injectable into a later one.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct NnFrozen {
    pub networks: BTreeMap<usize, BTreeMap<String, Network>>,
    pub thresholds: BTreeMap<usize, BTreeMap<String, f64>>,
}

struct NnClassBank {
    class_id: String,
    /// Spectrum bins for class-specific input; None for generic.
    bins: Option<Vec<usize>>,
    min_sig_frames: usize,
    min_sil_frames: usize,
    min_period_s: f64,
}

pub struct NnSystem {
    name: String,
    input: NnInput,
    sample_rate: u32,
    banks: Vec<NnClassBank>,
    /// (scenario_id, class_id) -> per-frame network inputs before context
    /// stacking; generic inputs are class-independent and keyed with an
    /// empty class id.
    feature_cache: HashMap<(String, String), Vec<Vec<f64>>>,
    captured: NnFrozen,
    frozen: Option<NnFrozen>,
}

impl NnSystem {
    pub fn new(registry: &Registry, input: NnInput) -> Result<NnSystem> {
        let fs = registry.sample_rate;
        let mut banks = Vec::with_capacity(registry.classes.len());
        for class in &registry.classes {
            let bins = match input {
                NnInput::Generic(_) => None,
                NnInput::ClassSpecific => Some(class_input_bins(
                    class,
                    fs as f64,
                    FRAME_LEN / 2,
                    CLASS_INPUT_HALO,
                )?),
            };
            let mut min_sig = usize::MAX;
            let mut min_sil = usize::MAX;
            for version in &class.versions {
                min_sig = min_sig.min(duration_frames(version.signal_s(), FRAME_HOP, fs));
                min_sil = min_sil
                    .min(duration_frames(version.period_s() - version.signal_s(), FRAME_HOP, fs));
            }
            banks.push(NnClassBank {
                class_id: class.id.clone(),
                bins,
                min_sig_frames: min_sig,
                min_sil_frames: min_sil,
                min_period_s: class.min_period_s(),
            });
        }
        let name = match input {
            NnInput::Generic(v) => format!("nn-generic-{}", v.name()),
            NnInput::ClassSpecific => "nn-class".to_string(),
        };
        Ok(NnSystem {
            name,
            input,
            sample_rate: fs,
            banks,
            feature_cache: HashMap::new(),
            captured: NnFrozen::default(),
            frozen: None,
        })
    }

    /// Reuse networks and thresholds captured from an earlier run instead of
    /// training and sweeping.
    pub fn with_frozen(mut self, frozen: NnFrozen) -> NnSystem {
        self.frozen = Some(frozen);
        self
    }

    /// Networks and thresholds applied by the folds run so far.
    pub fn captured(&self) -> &NnFrozen {
        &self.captured
    }

    fn cache_class_id(&self, bank_idx: usize) -> String {
        match self.input {
            NnInput::Generic(_) => String::new(),
            NnInput::ClassSpecific => self.banks[bank_idx].class_id.clone(),
        }
    }

    fn ensure_features(&mut self, scenario: &AnnotatedScenario, bank_idx: usize) {
        let key = (scenario.id.clone(), self.cache_class_id(bank_idx));
        if self.feature_cache.contains_key(&key) {
            return;
        }
        let frames = frame_signal(&scenario.audio.samples, FRAME_LEN, FRAME_HOP);
        let per_frame: Vec<Vec<f64>> = frames
            .iter()
            .enumerate()
            .map(|(i, frame)| {
                let spec = log_spectrum(frame, self.sample_rate, i, 0);
                match self.input {
                    NnInput::Generic(v) => build_generic_input(&spec, v),
                    NnInput::ClassSpecific => build_class_specific_input(
                        &spec,
                        self.banks[bank_idx].bins.as_ref().expect("class bins"),
                    ),
                }
            })
            .collect();
        self.feature_cache.insert(key, per_frame);
    }

    fn features(&self, scenario_id: &str, bank_idx: usize) -> &[Vec<f64>] {
        &self.feature_cache[&(scenario_id.to_string(), self.cache_class_id(bank_idx))]
    }

    fn train_class(&self, ctx: &FoldContext, bank_idx: usize) -> Result<Network> {
        let bank = &self.banks[bank_idx];
        let class_seed = derive_seed(ctx.seed, "class", bank_idx as u64);

        // Frame index pool over the training scenarios, balanced before any
        // context stacking so only selected frames are materialized.
        let mut pool: Vec<((usize, usize, usize), bool)> = Vec::new();
        for (si, sess) in ctx.train.iter().enumerate() {
            for (ki, scenario) in sess.scenarios.iter().enumerate() {
                let per_frame = self.features(&scenario.id, bank_idx);
                let labels = reference_frame_labels(
                    &scenario.annotations,
                    &bank.class_id,
                    per_frame.len(),
                    FRAME_LEN,
                    FRAME_HOP,
                    self.sample_rate,
                );
                for (t, &l) in labels.iter().enumerate() {
                    pool.push(((si, ki, t), l));
                }
            }
        }
        let balanced = balance_training_set(&pool, derive_seed(class_seed, "balance", 0))?;
        let data: Vec<(Vec<f64>, bool)> = balanced
            .iter()
            .map(|&((si, ki, t), l)| {
                let per_frame = self.features(&ctx.train[si].scenarios[ki].id, bank_idx);
                (stack_context(per_frame, t, TIME_CONTEXT), l)
            })
            .collect();

        let dim = data[0].0.len() / TIME_CONTEXT;
        let specs = [
            LayerSpec::partial_time(dim, TIME_CONTEXT, Activation::Sigmoid),
            LayerSpec::fully_connected(dim, HIDDEN_UNITS, Activation::Sigmoid),
            LayerSpec::fully_connected(HIDDEN_UNITS, 2, Activation::Softmax),
        ];
        let mut net = Network::init(
            &specs,
            self.sample_rate as f64,
            derive_seed(class_seed, "init", 0),
        )?;
        let inputs: Vec<Vec<f64>> = data.iter().map(|(x, _)| x.clone()).collect();
        net.norm = Some(Normalization::fit(&inputs)?);
        train(&mut net, &data, &TrainConfig::standard(derive_seed(class_seed, "shuffle", 0)))?;
        Ok(net)
    }

    fn scenario_scores(
        &self,
        net: &Network,
        scenario_id: &str,
        bank_idx: usize,
    ) -> Result<Vec<f64>> {
        let per_frame = self.features(scenario_id, bank_idx);
        let inputs: Vec<Vec<f64>> =
            (0..per_frame.len()).map(|t| stack_context(per_frame, t, TIME_CONTEXT)).collect();
        net.alarm_scores(&inputs)
    }

    /// Frame labels and period onsets from posterior scores at a threshold.
    /// Labels stay unsmoothed; onsets come from majority-smoothed labels so
    /// isolated frame flips cannot spawn spurious periods.
    fn detection_from_scores(&self, bank_idx: usize, scores: Vec<f64>, thr: f64) -> ClassDetection {
        let bank = &self.banks[bank_idx];
        let labels: Vec<bool> = scores.iter().map(|&s| s > thr).collect();
        let window = smoothing_window(bank.min_sig_frames, bank.min_sil_frames);
        let smoothed = majority_smooth(&labels, window);
        let spacing = MIN_ONSET_SPACING_PERIODS * bank.min_period_s * self.sample_rate as f64
            / FRAME_HOP as f64;
        let onsets = frames_to_periods(&smoothed, spacing)
            .into_iter()
            .map(|f| super::frame_onset_s(f, FRAME_HOP, self.sample_rate))
            .collect();
        ClassDetection { frame_labels: labels, onsets, frame_scores: Some(scores) }
    }

    fn frozen_net(&self, fold: usize, class_id: &str) -> Result<Option<&Network>> {
        let Some(frozen) = self.frozen.as_ref() else {
            return Ok(None);
        };
        frozen
            .networks
            .get(&fold)
            .and_then(|m| m.get(class_id))
            .map(Some)
            .ok_or_else(|| {
                Error::config(format!(
                    "frozen state carries no network for fold {fold}, class {class_id}"
                ))
            })
    }

    fn frozen_threshold(&self, fold: usize, class_id: &str) -> Result<Option<f64>> {
        let Some(frozen) = self.frozen.as_ref() else {
            return Ok(None);
        };
        frozen
            .thresholds
            .get(&fold)
            .and_then(|m| m.get(class_id))
            .copied()
            .map(Some)
            .ok_or_else(|| {
                Error::config(format!(
                    "frozen state carries no threshold for fold {fold}, class {class_id}"
                ))
            })
    }
}

impl DetectionPipeline for NnSystem {
    fn name(&self) -> &str {
        &self.name
    }

    fn run_fold(&mut self, ctx: &FoldContext) -> Result<Vec<ScenarioDetections>> {
        // Per-class caches are shared for generic input, so bank 0 suffices
        // there; every bank needs its own pass for class-specific bins.
        let cache_banks: Vec<usize> = match self.input {
            NnInput::Generic(_) => vec![0],
            NnInput::ClassSpecific => (0..self.banks.len()).collect(),
        };
        for &bi in &cache_banks {
            for sess in ctx.train.iter().chain(std::iter::once(&ctx.test)) {
                for scenario in &sess.scenarios {
                    self.ensure_features(scenario, bi);
                }
            }
        }

        // (class -> per-test-scenario detections), assembled per class and
        // transposed into the harness's per-scenario shape at the end.
        let mut per_class_rows: Vec<Vec<ClassDetection>> = Vec::with_capacity(self.banks.len());
        for bi in 0..self.banks.len() {
            let class_id = self.banks[bi].class_id.clone();
            let net = match self.frozen_net(ctx.fold_index, &class_id)? {
                Some(n) => n.clone(),
                None => self.train_class(ctx, bi)?,
            };

            let mut scores_per_scenario = Vec::with_capacity(ctx.test.scenarios.len());
            for scenario in &ctx.test.scenarios {
                scores_per_scenario.push(self.scenario_scores(&net, &scenario.id, bi)?);
            }

            let thr = match self.frozen_threshold(ctx.fold_index, &class_id)? {
                Some(t) => t,
                None => {
                    let mut pooled_scores = Vec::new();
                    let mut pooled_labels = Vec::new();
                    for (scenario, scores) in
                        ctx.test.scenarios.iter().zip(scores_per_scenario.iter())
                    {
                        pooled_scores.extend_from_slice(scores);
                        pooled_labels.extend(reference_frame_labels(
                            &scenario.annotations,
                            &class_id,
                            scores.len(),
                            FRAME_LEN,
                            FRAME_HOP,
                            self.sample_rate,
                        ));
                    }
                    eer_threshold(&pooled_scores, &pooled_labels)?.0
                }
            };

            self.captured
                .networks
                .entry(ctx.fold_index)
                .or_default()
                .insert(class_id.clone(), net);
            self.captured
                .thresholds
                .entry(ctx.fold_index)
                .or_default()
                .insert(class_id.clone(), thr);

            per_class_rows.push(
                scores_per_scenario
                    .into_iter()
                    .map(|scores| self.detection_from_scores(bi, scores, thr))
                    .collect(),
            );
        }

        let mut results = Vec::with_capacity(ctx.test.scenarios.len());
        for (k, scenario) in ctx.test.scenarios.iter().enumerate() {
            let mut per_class = BTreeMap::new();
            for (bi, rows) in per_class_rows.iter_mut().enumerate() {
                per_class.insert(
                    self.banks[bi].class_id.clone(),
                    std::mem::take(&mut rows[k]),
                );
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
    use crate::eval::run_cv;
    use crate::synth::NoiseKind;

    fn small_benchmark() -> (Registry, Vec<crate::eval::SessionScenarios>) {
        let registry = Registry::default_synthetic();
        let cfg = BenchConfig::new(2, f64::INFINITY, NoiseKind::White, 11);
        let sessions = generate_benchmark(&registry, &cfg).unwrap();
        (registry, sessions)
    }

    #[test]
    fn identical_seed_gives_identical_reports() {
        let (registry, sessions) = small_benchmark();
        let run = || {
            let mut sys =
                NnSystem::new(&registry, NnInput::Generic(GenericVariant::Msmp60)).unwrap();
            run_cv(&sessions, &registry, &mut sys, 5, 2).unwrap().to_csv()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn frozen_state_reproduces_the_capturing_run_without_training() {
        let (registry, sessions) = small_benchmark();
        let mut first = NnSystem::new(&registry, NnInput::ClassSpecific).unwrap();
        let report_a = run_cv(&sessions, &registry, &mut first, 5, 2).unwrap();
        let captured = first.captured().clone();
        assert_eq!(captured.networks.len(), 2);
        assert_eq!(captured.networks[&0].len(), registry.classes.len());

        let mut second =
            NnSystem::new(&registry, NnInput::ClassSpecific).unwrap().with_frozen(captured);
        let report_b = run_cv(&sessions, &registry, &mut second, 5, 2).unwrap();
        assert_eq!(report_a.to_csv(), report_b.to_csv());
    }

    #[test]
    fn clean_audio_separates_classes_well() {
        let (registry, sessions) = small_benchmark();
        let mut sys = NnSystem::new(&registry, NnInput::ClassSpecific).unwrap();
        let report = run_cv(&sessions, &registry, &mut sys, 5, 2).unwrap();
        for class in &report.per_class {
            let eer = class.eer.expect("scores were provided");
            assert!(eer < 0.25, "class {} EER {eer} is out of range", class.class_id);
        }
    }

    #[test]
    fn missing_frozen_entry_is_a_config_error() {
        let (registry, sessions) = small_benchmark();
        let mut sys = NnSystem::new(&registry, NnInput::ClassSpecific)
            .unwrap()
            .with_frozen(NnFrozen::default());
        let err = run_cv(&sessions, &registry, &mut sys, 5, 2).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }
}
