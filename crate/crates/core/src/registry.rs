//! Alarm class registry: the structural description of every alarm the
//! toolkit can synthesize and detect, loaded from a TOML file.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::path::Path;

/// One tone of an alarm: simultaneous sinusoidal components and a duration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ToneSpec {
    pub frequencies: Vec<f64>,
    pub relative_amplitudes: Vec<f64>,
    pub duration_s: f64,
}

/// One emitted variant of a class: consecutive tones followed by silence.
/// `f0` is the fundamental of the first tone and sets morphology scales.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AlarmVersionSpec {
    pub f0: f64,
    pub silence_s: f64,
    pub tones: Vec<ToneSpec>,
}

impl AlarmVersionSpec {
    /// Duration of the sounding part (all tones, no silence).
    pub fn signal_s(&self) -> f64 {
        self.tones.iter().map(|t| t.duration_s).sum()
    }

    /// Full period: tones plus trailing silence.
    pub fn period_s(&self) -> f64 {
        self.signal_s() + self.silence_s
    }

    /// All component frequencies of this version, in order of appearance.
    pub fn frequencies(&self) -> Vec<f64> {
        self.tones.iter().flat_map(|t| t.frequencies.iter().copied()).collect()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AlarmClassSpec {
    pub id: String,
    pub versions: Vec<AlarmVersionSpec>,
}

impl AlarmClassSpec {
    /// Union of component frequencies over all versions, deduplicated within
    /// `tol_hz` and sorted ascending.
    pub fn frequency_union(&self, tol_hz: f64) -> Vec<f64> {
        let mut freqs: Vec<f64> =
            self.versions.iter().flat_map(|v| v.frequencies()).collect();
        freqs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut out: Vec<f64> = Vec::new();
        for f in freqs {
            if out.last().map_or(true, |&last| f - last > tol_hz) {
                out.push(f);
            }
        }
        out
    }

    /// Shortest period over the class's versions.
    pub fn min_period_s(&self) -> f64 {
        self.versions.iter().map(|v| v.period_s()).fold(f64::MAX, f64::min)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Registry {
    pub sample_rate: u32,
    pub classes: Vec<AlarmClassSpec>,
}

impl Registry {
    pub fn load(path: &Path) -> Result<Registry> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read registry {}: {e}", path.display())))?;
        Registry::from_toml(&text)
    }

    pub fn from_toml(text: &str) -> Result<Registry> {
        let reg: Registry =
            toml::from_str(text).map_err(|e| Error::config(format!("registry parse: {e}")))?;
        reg.validate()?;
        Ok(reg)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = toml::to_string_pretty(self)
            .map_err(|e| Error::config(format!("registry serialize: {e}")))?;
        std::fs::write(path, text)?;
        Ok(())
    }

    /// The synthetic registry shipped with the toolkit.
    pub fn default_synthetic() -> Registry {
        Registry::from_toml(include_str!("../assets/default_registry.toml"))
            .expect("embedded registry must validate")
    }

    pub fn class(&self, id: &str) -> Result<&AlarmClassSpec> {
        self.classes
            .iter()
            .find(|c| c.id == id)
            .ok_or_else(|| Error::data(format!("unknown alarm class {id:?}")))
    }

    pub fn validate(&self) -> Result<()> {
        if self.sample_rate == 0 {
            return Err(Error::config("registry: sample_rate must be positive"));
        }
        if self.classes.is_empty() {
            return Err(Error::config("registry: no classes defined"));
        }
        let nyquist = self.sample_rate as f64 / 2.0;
        let mut seen = std::collections::BTreeSet::new();
        for class in &self.classes {
            if !seen.insert(class.id.clone()) {
                return Err(Error::config(format!("registry: duplicate class id {:?}", class.id)));
            }
            if class.versions.is_empty() {
                return Err(Error::config(format!("class {}: no versions", class.id)));
            }
            for (vi, version) in class.versions.iter().enumerate() {
                let at = format!("class {} version {vi}", class.id);
                if !(version.f0 > 0.0) {
                    return Err(Error::config(format!("{at}: f0 must be positive")));
                }
                if !(version.silence_s > 0.0) {
                    return Err(Error::config(format!("{at}: silence_s must be positive")));
                }
                if version.tones.is_empty() {
                    return Err(Error::config(format!("{at}: no tones")));
                }
                for (ti, tone) in version.tones.iter().enumerate() {
                    let at = format!("{at} tone {ti}");
                    if tone.frequencies.is_empty() {
                        return Err(Error::config(format!("{at}: no frequencies")));
                    }
                    if tone.frequencies.len() != tone.relative_amplitudes.len() {
                        return Err(Error::config(format!(
                            "{at}: {} frequencies but {} relative_amplitudes",
                            tone.frequencies.len(),
                            tone.relative_amplitudes.len()
                        )));
                    }
                    if !(tone.duration_s > 0.0) {
                        return Err(Error::config(format!("{at}: duration_s must be positive")));
                    }
                    for &f in &tone.frequencies {
                        if !(f > 0.0 && f < nyquist) {
                            return Err(Error::config(format!(
                                "{at}: frequency {f} Hz outside (0, {nyquist}) Hz"
                            )));
                        }
                    }
                    for &a in &tone.relative_amplitudes {
                        if !(a > 0.0) {
                            return Err(Error::config(format!(
                                "{at}: relative amplitude {a} must be positive"
                            )));
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_registry_validates_and_has_promised_structure() {
        let reg = Registry::default_synthetic();
        assert_eq!(reg.sample_rate, 24000);
        assert_eq!(reg.classes.len(), 7);

        let two_version: Vec<&str> = reg
            .classes
            .iter()
            .filter(|c| c.versions.len() == 2)
            .map(|c| c.id.as_str())
            .collect();
        assert_eq!(two_version, vec!["c1", "c2", "c4", "c6"]);

        // Three classes share the 960 Hz component; c7 is a single component
        // at that shared fundamental.
        let sharing: Vec<&str> = reg
            .classes
            .iter()
            .filter(|c| c.frequency_union(0.5).iter().any(|&f| (f - 960.0).abs() < 0.5))
            .map(|c| c.id.as_str())
            .collect();
        assert_eq!(sharing, vec!["c1", "c5", "c7"]);
        let c7 = reg.class("c7").unwrap();
        assert_eq!(c7.versions.len(), 1);
        assert_eq!(c7.versions[0].frequencies(), vec![960.0]);

        // c2 is the two-consecutive-tone class.
        let c2 = reg.class("c2").unwrap();
        assert!(c2.versions.iter().all(|v| v.tones.len() == 2));

        // c6 carries the rich non-harmonic spectrum.
        let c6 = reg.class("c6").unwrap();
        assert!(c6.versions[0].tones[0].frequencies.len() >= 4);

        // Period bookkeeping.
        let c1 = reg.class("c1").unwrap();
        assert!((c1.versions[0].period_s() - 1.07).abs() < 1e-12);
        assert!((c1.min_period_s() - 1.07).abs() < 1e-12);
        assert!((c2.versions[0].signal_s() - 0.30).abs() < 1e-12);
    }

    #[test]
    fn frequency_union_dedups_close_components() {
        let reg = Registry::default_synthetic();
        let c1 = reg.class("c1").unwrap();
        // 955 vs 960 (5 Hz apart) stay separate at 0.5 Hz tolerance...
        assert_eq!(c1.frequency_union(0.5).len(), 6);
        // ...and merge pairwise at 20 Hz tolerance (harmonic pairs are
        // 5-15 Hz apart across the two versions).
        assert_eq!(c1.frequency_union(20.0).len(), 3);
    }

    #[test]
    fn validation_names_the_bad_field() {
        let mut reg = Registry::default_synthetic();
        reg.classes[2].versions[0].tones[0].frequencies[0] = 13000.0;
        let err = reg.validate().unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("class c3"), "{msg}");
        assert!(msg.contains("13000"), "{msg}");
        assert_eq!(err.exit_code(), 2);

        let mut reg2 = Registry::default_synthetic();
        reg2.classes[0].versions[0].tones[0].relative_amplitudes.pop();
        let msg2 = reg2.validate().unwrap_err().to_string();
        assert!(msg2.contains("relative_amplitudes"), "{msg2}");
    }

    #[test]
    fn toml_round_trip() {
        let reg = Registry::default_synthetic();
        let text = toml::to_string_pretty(&reg).unwrap();
        let back = Registry::from_toml(&text).unwrap();
        assert_eq!(back.classes.len(), reg.classes.len());
        assert_eq!(
            back.class("c5").unwrap().versions[0].frequencies(),
            reg.class("c5").unwrap().versions[0].frequencies()
        );
    }
}
