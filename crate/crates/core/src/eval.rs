//! Metrics and the cross-validation harness: frame-level missing and
//! false-alarm rates, period-level error with tolerance matching, the
//! class-confusion table, and the fold protocol shared by all systems.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::audio::{frame_count, FRAME_HOP, FRAME_LEN};
use crate::error::{Error, Result};
use crate::registry::Registry;
use crate::seeding::derive_seed;
use crate::synth::AnnotatedScenario;
use crate::temporal::{eer_threshold, reference_frame_labels};

/// Fraction of the alarm period used as the matching tolerance for the
/// period-based error rate.
pub const PB_ERR_TOL_FRACTION: f64 = 0.49;
/// Fraction used by the stricter confusion analysis.
pub const CONFUSION_TOL_FRACTION: f64 = 0.05;

/// Matching tolerance as a fraction of the alarm period.
#[derive(Debug, Clone, Copy)]
pub struct ToleranceConfig {
    t_tol_fraction: f64,
}

impl ToleranceConfig {
    pub fn new(t_tol_fraction: f64) -> Result<ToleranceConfig> {
        if !(t_tol_fraction > 0.0 && t_tol_fraction < 0.5) {
            return Err(Error::config(format!(
                "tolerance fraction must lie in (0, 0.5), got {t_tol_fraction}"
            )));
        }
        Ok(ToleranceConfig { t_tol_fraction })
    }

    pub fn pb_err() -> ToleranceConfig {
        ToleranceConfig { t_tol_fraction: PB_ERR_TOL_FRACTION }
    }

    pub fn confusion() -> ToleranceConfig {
        ToleranceConfig { t_tol_fraction: CONFUSION_TOL_FRACTION }
    }

    pub fn fraction(&self) -> f64 {
        self.t_tol_fraction
    }
}

/// Frame-level counts. `n_missed <= n_alarm`, `n_false_alarm <= n_non_alarm`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FrameCounts {
    pub n_missed: usize,
    pub n_alarm: usize,
    pub n_false_alarm: usize,
    pub n_non_alarm: usize,
}

impl FrameCounts {
    pub fn add(&mut self, other: &FrameCounts) {
        self.n_missed += other.n_missed;
        self.n_alarm += other.n_alarm;
        self.n_false_alarm += other.n_false_alarm;
        self.n_non_alarm += other.n_non_alarm;
    }

    /// Missing rate; absent when no alarm frames exist.
    pub fn mr(&self) -> Option<f64> {
        (self.n_alarm > 0).then(|| self.n_missed as f64 / self.n_alarm as f64)
    }

    /// False-alarm rate; absent when no non-alarm frames exist.
    pub fn far(&self) -> Option<f64> {
        (self.n_non_alarm > 0).then(|| self.n_false_alarm as f64 / self.n_non_alarm as f64)
    }
}

/// Period-level counts from one-to-one onset matching.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PeriodCounts {
    pub n_correct: usize,
    pub n_false_alarm: usize,
    pub n_missed: usize,
}

impl PeriodCounts {
    pub fn add(&mut self, other: &PeriodCounts) {
        self.n_correct += other.n_correct;
        self.n_false_alarm += other.n_false_alarm;
        self.n_missed += other.n_missed;
    }

    /// Period-based error rate: 1 - 2C / (2C + FA + M). Empty counts score
    /// a perfect 0.
    pub fn pb_err(&self) -> f64 {
        let denom = 2 * self.n_correct + self.n_false_alarm + self.n_missed;
        if denom == 0 {
            0.0
        } else {
            1.0 - 2.0 * self.n_correct as f64 / denom as f64
        }
    }
}

/// Frame-level rates from predicted vs reference label tracks.
pub fn frame_metrics(predicted: &[bool], reference: &[bool]) -> Result<FrameCounts> {
    if predicted.len() != reference.len() {
        return Err(Error::data(format!(
            "label track length mismatch: {} predicted vs {} reference",
            predicted.len(),
            reference.len()
        )));
    }
    let mut counts = FrameCounts::default();
    for (&p, &r) in predicted.iter().zip(reference.iter()) {
        if r {
            counts.n_alarm += 1;
            if !p {
                counts.n_missed += 1;
            }
        } else {
            counts.n_non_alarm += 1;
            if p {
                counts.n_false_alarm += 1;
            }
        }
    }
    Ok(counts)
}

/// Greedy one-to-one onset matching: references in ascending time order each
/// take the nearest unmatched detection inside their own tolerance window
/// (closed interval; equidistant candidates resolve to the earlier one).
/// Returns per-reference matched detection indices.
pub fn match_onsets(reference: &[(f64, f64)], detected: &[f64]) -> Vec<Option<usize>> {
    let mut ref_order: Vec<usize> = (0..reference.len()).collect();
    ref_order.sort_by(|&a, &b| reference[a].0.partial_cmp(&reference[b].0).unwrap());
    let mut det_taken = vec![false; detected.len()];
    let mut matched = vec![None; reference.len()];
    for ri in ref_order {
        let (onset, tol) = reference[ri];
        let mut best: Option<(f64, usize)> = None;
        for (di, &d) in detected.iter().enumerate() {
            if det_taken[di] {
                continue;
            }
            let dist = (d - onset).abs();
            if dist <= tol {
                let better = match best {
                    Some((bd, bi)) => {
                        dist < bd || (dist == bd && detected[di] < detected[bi])
                    }
                    None => true,
                };
                if better {
                    best = Some((dist, di));
                }
            }
        }
        if let Some((_, di)) = best {
            det_taken[di] = true;
            matched[ri] = Some(di);
        }
    }
    matched
}

/// Period-level counts for one scenario and class: detections within
/// `tol.fraction() * period_s` of an unmatched reference count as correct.
pub fn period_metrics(
    detected: &[f64],
    reference: &[f64],
    period_s: f64,
    tol: ToleranceConfig,
) -> PeriodCounts {
    let t_tol = tol.fraction() * period_s;
    let refs: Vec<(f64, f64)> = reference.iter().map(|&r| (r, t_tol)).collect();
    counts_from_matching(&refs, detected)
}

/// Period counts with a per-reference tolerance (used when references mix
/// alarm versions with different periods).
pub fn period_metrics_per_ref(reference: &[(f64, f64)], detected: &[f64]) -> PeriodCounts {
    counts_from_matching(reference, detected)
}

fn counts_from_matching(reference: &[(f64, f64)], detected: &[f64]) -> PeriodCounts {
    let matched = match_onsets(reference, detected);
    let n_correct = matched.iter().filter(|m| m.is_some()).count();
    PeriodCounts {
        n_correct,
        n_missed: reference.len() - n_correct,
        n_false_alarm: detected.len() - n_correct,
    }
}

/// Class confusion table: rows are actual classes, columns are detectors,
/// cells are percentages of each row class's reference periods that the
/// column detector matched. Rows need not sum to 100.
#[derive(Debug, Clone)]
pub struct ConfusionMatrix {
    pub class_ids: Vec<String>,
    /// cells[row][col], percent.
    pub cells: Vec<Vec<f64>>,
    /// Reference period count per row class.
    pub row_totals: Vec<usize>,
}

impl ConfusionMatrix {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("actual_class");
        for id in &self.class_ids {
            let _ = write!(out, ",det_{id}");
        }
        out.push_str(",n_reference\n");
        for (r, id) in self.class_ids.iter().enumerate() {
            let _ = write!(out, "{id}");
            for c in 0..self.class_ids.len() {
                let _ = write!(out, ",{:.2}", self.cells[r][c]);
            }
            let _ = writeln!(out, ",{}", self.row_totals[r]);
        }
        out
    }
}

/// Onset lists for one scenario: references per class (with per-onset
/// tolerance already scaled to the matching fraction) and detections per
/// detector.
pub struct ConfusionScenario {
    pub reference: BTreeMap<String, Vec<(f64, f64)>>,
    pub detected: BTreeMap<String, Vec<f64>>,
}

/// Accumulate the confusion table over scenarios. `class_ids` fixes the
/// row/column order. Every reference list is matched against every
/// detector's onsets independently, so one reference period matched by two
/// detectors contributes to both columns of its row.
pub fn confusion_matrix(class_ids: &[String], scenarios: &[ConfusionScenario]) -> ConfusionMatrix {
    let n = class_ids.len();
    let mut matched = vec![vec![0usize; n]; n];
    let mut totals = vec![0usize; n];
    for scenario in scenarios {
        for (r, row_id) in class_ids.iter().enumerate() {
            let refs = match scenario.reference.get(row_id) {
                Some(v) if !v.is_empty() => v,
                _ => continue,
            };
            totals[r] += refs.len();
            for (c, col_id) in class_ids.iter().enumerate() {
                let dets = scenario.detected.get(col_id).map(|v| v.as_slice()).unwrap_or(&[]);
                let m = match_onsets(refs, dets);
                matched[r][c] += m.iter().filter(|x| x.is_some()).count();
            }
        }
    }
    let cells = (0..n)
        .map(|r| {
            (0..n)
                .map(|c| {
                    if totals[r] == 0 {
                        0.0
                    } else {
                        100.0 * matched[r][c] as f64 / totals[r] as f64
                    }
                })
                .collect()
        })
        .collect();
    ConfusionMatrix {
        class_ids: class_ids.to_vec(),
        cells,
        row_totals: totals,
    }
}

/// Scenarios of one recording session.
#[derive(Debug, Clone)]
pub struct SessionScenarios {
    pub session_id: String,
    pub scenarios: Vec<AnnotatedScenario>,
}

/// Training/test split handed to a detection system for one fold.
pub struct FoldContext<'a> {
    pub fold_index: usize,
    pub train: Vec<&'a SessionScenarios>,
    pub test: &'a SessionScenarios,
    pub seed: u64,
}

/// Detector output for one class on one test scenario. Frame labels live on
/// the analysis grid; onsets are seconds. `frame_scores` (same grid) enables
/// the equal-error-rate sweep.
#[derive(Debug, Clone, Default)]
pub struct ClassDetection {
    pub frame_labels: Vec<bool>,
    pub onsets: Vec<f64>,
    pub frame_scores: Option<Vec<f64>>,
}

/// Detections for every class on one test scenario.
#[derive(Debug, Clone)]
pub struct ScenarioDetections {
    pub scenario_id: String,
    pub per_class: BTreeMap<String, ClassDetection>,
}

/// A detection system driven by the fold harness: trains on the given
/// sessions and returns detections for each test scenario in order.
pub trait DetectionPipeline {
    fn name(&self) -> &str;
    fn run_fold(&mut self, ctx: &FoldContext) -> Result<Vec<ScenarioDetections>>;
}

/// Per-class slice of a metrics report.
#[derive(Debug, Clone)]
pub struct ClassReport {
    pub class_id: String,
    pub frame: FrameCounts,
    pub period: PeriodCounts,
    /// Mean of per-fold equal error rates, absent when never computable.
    pub eer: Option<f64>,
}

/// Cross-validation report: per-class counts summed over folds, rates
/// derived from the sums, and class-averaged aggregate scores.
#[derive(Debug, Clone)]
pub struct MetricsReport {
    pub system: String,
    pub folds: usize,
    pub per_class: Vec<ClassReport>,
}

impl MetricsReport {
    /// Class-averaged scores: (MR, FAR, EER, PB-ERR). Absent per-class
    /// values are skipped.
    pub fn aggregate(&self) -> (Option<f64>, Option<f64>, Option<f64>, f64) {
        fn mean(values: &[f64]) -> Option<f64> {
            (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
        }
        let mrs: Vec<f64> = self.per_class.iter().filter_map(|c| c.frame.mr()).collect();
        let fars: Vec<f64> = self.per_class.iter().filter_map(|c| c.frame.far()).collect();
        let eers: Vec<f64> = self.per_class.iter().filter_map(|c| c.eer).collect();
        let pb: Vec<f64> = self.per_class.iter().map(|c| c.period.pb_err()).collect();
        (mean(&mrs), mean(&fars), mean(&eers), mean(&pb).unwrap_or(0.0))
    }

    pub fn to_text(&self) -> String {
        fn cell(v: Option<f64>) -> String {
            match v {
                Some(x) => format!("{:7.4}", x),
                None => format!("{:>7}", "-"),
            }
        }
        let mut out = String::new();
        let _ = writeln!(out, "system: {} ({} folds)", self.system, self.folds);
        let _ = writeln!(
            out,
            "{:<10} {:>7} {:>7} {:>7} {:>7}  {:>18} {:>15}",
            "class", "MR", "FAR", "EER", "PB-ERR", "frames m/A fa/NA", "periods C/FA/M"
        );
        for c in &self.per_class {
            let _ = writeln!(
                out,
                "{:<10} {} {} {} {:7.4}  {:>18} {:>15}",
                c.class_id,
                cell(c.frame.mr()),
                cell(c.frame.far()),
                cell(c.eer),
                c.period.pb_err(),
                format!(
                    "{}/{} {}/{}",
                    c.frame.n_missed, c.frame.n_alarm, c.frame.n_false_alarm, c.frame.n_non_alarm
                ),
                format!(
                    "{}/{}/{}",
                    c.period.n_correct, c.period.n_false_alarm, c.period.n_missed
                ),
            );
        }
        let (mr, far, eer, pb) = self.aggregate();
        let _ = writeln!(
            out,
            "{:<10} {} {} {} {:7.4}",
            "mean",
            cell(mr),
            cell(far),
            cell(eer),
            pb
        );
        out
    }

    pub fn to_csv(&self) -> String {
        fn cell(v: Option<f64>) -> String {
            v.map(|x| format!("{x:.6}")).unwrap_or_default()
        }
        let mut out = String::from(
            "system,class_id,mr,far,eer,pb_err,frames_missed,frames_alarm,\
             frames_false_alarm,frames_non_alarm,periods_correct,periods_false_alarm,\
             periods_missed\n",
        );
        for c in &self.per_class {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{:.6},{},{},{},{},{},{},{}",
                self.system,
                c.class_id,
                cell(c.frame.mr()),
                cell(c.frame.far()),
                cell(c.eer),
                c.period.pb_err(),
                c.frame.n_missed,
                c.frame.n_alarm,
                c.frame.n_false_alarm,
                c.frame.n_non_alarm,
                c.period.n_correct,
                c.period.n_false_alarm,
                c.period.n_missed,
            );
        }
        let (mr, far, eer, pb) = self.aggregate();
        let _ = writeln!(
            out,
            "{},mean,{},{},{},{:.6},,,,,,,",
            self.system,
            cell(mr),
            cell(far),
            cell(eer),
            pb
        );
        out
    }
}

/// Reference period onsets with per-onset matching tolerance for one class.
pub fn reference_onsets(
    scenario: &AnnotatedScenario,
    registry: &Registry,
    class_id: &str,
    tol: ToleranceConfig,
) -> Result<Vec<(f64, f64)>> {
    let class = registry.class(class_id)?;
    let mut out = Vec::new();
    for ann in &scenario.annotations {
        if ann.class_id != class_id {
            continue;
        }
        let version = class.versions.get(ann.version_id as usize).ok_or_else(|| {
            Error::data(format!(
                "annotation in {} references missing version {} of class {}",
                scenario.id, ann.version_id, class_id
            ))
        })?;
        out.push((ann.start_s, tol.fraction() * version.period_s()));
    }
    Ok(out)
}

/// Leave-one-session-out cross-validation. `expected_sessions` pins the
/// protocol size (10 in the standard run); fewer or more sessions are a
/// configuration error. Counts are summed over folds before any ratio is
/// taken; equal error rates are computed per fold on pooled test scores and
/// averaged.
pub fn run_cv(
    sessions: &[SessionScenarios],
    registry: &Registry,
    pipeline: &mut dyn DetectionPipeline,
    master_seed: u64,
    expected_sessions: usize,
) -> Result<MetricsReport> {
    if expected_sessions < 2 {
        return Err(Error::config(format!(
            "cross-validation needs at least 2 sessions, asked for {expected_sessions}"
        )));
    }
    if sessions.len() != expected_sessions {
        return Err(Error::config(format!(
            "expected {expected_sessions} sessions, manifest has {}",
            sessions.len()
        )));
    }
    let class_ids: Vec<String> = registry.classes.iter().map(|c| c.id.clone()).collect();
    let mut frame_totals: BTreeMap<String, FrameCounts> = BTreeMap::new();
    let mut period_totals: BTreeMap<String, PeriodCounts> = BTreeMap::new();
    let mut fold_eers: BTreeMap<String, Vec<f64>> = BTreeMap::new();

    for fold in 0..sessions.len() {
        let test = &sessions[fold];
        let train: Vec<&SessionScenarios> = sessions
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != fold)
            .map(|(_, s)| s)
            .collect();
        let ctx = FoldContext {
            fold_index: fold,
            train,
            test,
            seed: derive_seed(master_seed, "fold", fold as u64),
        };
        let detections = pipeline.run_fold(&ctx)?;
        if detections.len() != test.scenarios.len() {
            return Err(Error::data(format!(
                "fold {fold}: system returned {} scenario results for {} test scenarios",
                detections.len(),
                test.scenarios.len()
            )));
        }

        // Pool test scores per class across the fold's scenarios for EER.
        let mut fold_scores: BTreeMap<String, (Vec<f64>, Vec<bool>)> = BTreeMap::new();

        for (scenario, det) in test.scenarios.iter().zip(detections.iter()) {
            if det.scenario_id != scenario.id {
                return Err(Error::data(format!(
                    "fold {fold}: result for scenario {} arrived in place of {}",
                    det.scenario_id, scenario.id
                )));
            }
            let n_frames = frame_count(scenario.audio.samples.len(), FRAME_LEN, FRAME_HOP);
            for class_id in &class_ids {
                let reference = reference_frame_labels(
                    &scenario.annotations,
                    class_id,
                    n_frames,
                    FRAME_LEN,
                    FRAME_HOP,
                    scenario.audio.sample_rate,
                );
                let empty = ClassDetection::default();
                let d = det.per_class.get(class_id).unwrap_or(&empty);
                let all_non_alarm;
                let labels: &[bool] = if d.frame_labels.is_empty() {
                    all_non_alarm = vec![false; n_frames];
                    &all_non_alarm
                } else {
                    if d.frame_labels.len() != n_frames {
                        return Err(Error::data(format!(
                            "fold {fold}, scenario {}, class {class_id}: {} frame labels \
                             for a {n_frames}-frame scenario",
                            scenario.id,
                            d.frame_labels.len()
                        )));
                    }
                    &d.frame_labels[..]
                };
                let counts = frame_metrics(labels, &reference)?;
                frame_totals.entry(class_id.clone()).or_default().add(&counts);

                let refs = reference_onsets(scenario, registry, class_id, ToleranceConfig::pb_err())?;
                let pcounts = period_metrics_per_ref(&refs, &d.onsets);
                period_totals.entry(class_id.clone()).or_default().add(&pcounts);

                if let Some(scores) = &d.frame_scores {
                    if scores.len() != n_frames {
                        return Err(Error::data(format!(
                            "fold {fold}, scenario {}, class {class_id}: {} frame scores \
                             for a {n_frames}-frame scenario",
                            scenario.id,
                            scores.len()
                        )));
                    }
                    let pool = fold_scores.entry(class_id.clone()).or_default();
                    pool.0.extend_from_slice(scores);
                    pool.1.extend_from_slice(&reference);
                }
            }
        }

        for (class_id, (scores, labels)) in fold_scores {
            // Degenerate folds (a class absent from the test session) simply
            // contribute no EER sample.
            if let Ok((_, eer)) = eer_threshold(&scores, &labels) {
                fold_eers.entry(class_id).or_default().push(eer);
            }
        }
    }

    let per_class = class_ids
        .iter()
        .map(|id| ClassReport {
            class_id: id.clone(),
            frame: frame_totals.get(id).copied().unwrap_or_default(),
            period: period_totals.get(id).copied().unwrap_or_default(),
            eer: fold_eers.get(id).map(|v| v.iter().sum::<f64>() / v.len() as f64),
        })
        .collect();
    Ok(MetricsReport {
        system: pipeline.name().to_string(),
        folds: sessions.len(),
        per_class,
    })
}
