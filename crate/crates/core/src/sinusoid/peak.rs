//! Spectral-peak features: local shape of the padded magnitude spectrum plus
//! the deviation of the frame-to-frame phase advance from the stationary
//! prediction for the peak bin.

use crate::dsp;

/// Half-width of the shape neighborhood; the shape holds `2 * SHAPE_HALF + 1`
/// peak-normalized magnitudes.
pub const SHAPE_HALF: usize = 3;

/// One spectral peak. `shape[SHAPE_HALF]` is exactly 1 by construction.
#[derive(Debug, Clone)]
pub struct PeakFeature {
    /// Bin index on the padded (fine) frequency grid.
    pub bin: usize,
    /// Linear magnitude at the peak bin, before normalization.
    pub magnitude: f64,
    /// Magnitudes over `bin - SHAPE_HALF ..= bin + SHAPE_HALF`, divided by the
    /// peak magnitude.
    pub shape: Vec<f64>,
    /// Observed phase advance at the peak bin minus the advance a stationary
    /// sinusoid at that bin's frequency would show over one hop, wrapped to
    /// (-pi, pi]. Zero when no previous frame exists.
    pub phase_dev: f64,
}

impl PeakFeature {
    /// Input vector for the sinusoid/noise mixture models: the six shape
    /// values away from the center (which is always 1) plus the phase
    /// deviation.
    pub fn model_feature(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(2 * SHAPE_HALF + 1);
        for (i, &s) in self.shape.iter().enumerate() {
            if i != SHAPE_HALF {
                out.push(s);
            }
        }
        out.push(self.phase_dev);
        out
    }
}

/// Wrap an angle to (-pi, pi].
pub fn wrap_phase(x: f64) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    let mut y = x.rem_euclid(two_pi);
    if y > std::f64::consts::PI {
        y -= two_pi;
    }
    y
}

/// Extract peak features from one frame's fine-grid magnitudes and phases.
/// Peaks too close to the grid edges for a full shape are dropped.
/// `prev_phases` is the previous frame's phase array at the same grid;
/// `None` (first frame) pins every phase deviation to zero.
pub fn extract_peak_features(
    mags: &[f64],
    phases: &[f64],
    prev_phases: Option<&[f64]>,
    hop: usize,
    fft_len: usize,
) -> Vec<PeakFeature> {
    assert_eq!(mags.len(), phases.len());
    let mut out = Vec::new();
    for bin in dsp::local_maxima(mags) {
        if bin < SHAPE_HALF || bin + SHAPE_HALF >= mags.len() {
            continue;
        }
        let peak_mag = mags[bin];
        let shape: Vec<f64> =
            mags[bin - SHAPE_HALF..=bin + SHAPE_HALF].iter().map(|&m| m / peak_mag).collect();
        let phase_dev = match prev_phases {
            None => 0.0,
            Some(prev) => {
                let expected =
                    2.0 * std::f64::consts::PI * bin as f64 * hop as f64 / fft_len as f64;
                wrap_phase(phases[bin] - prev[bin] - expected)
            }
        };
        out.push(PeakFeature { bin, magnitude: peak_mag, shape, phase_dev });
    }
    out
}
