//! Matched filtering of a preprocessed stream against an alarm reference.

use crate::dsp;
use crate::error::{Error, Result};
use crate::nonmodel::reference::ReferenceSignal;

/// Normalized cross-correlation of `input` with reference samples `a`:
///
///   c[n] = sum_k input[n + k] a[k] / sum_k a[k]^2
///
/// defined for n in [0, N - L]. The reference aligned with itself gives 1
/// regardless of its amplitude scale.
pub fn matched_filter(input: &[f64], reference: &ReferenceSignal) -> Result<Vec<f64>> {
    let l = reference.len();
    if input.len() < l {
        return Err(Error::data(format!(
            "matched filter input ({} samples) is shorter than the reference ({l})",
            input.len()
        )));
    }
    let energy = reference.energy();
    let raw = dsp::xcorr_valid(input, &reference.samples);
    Ok(raw.into_iter().map(|v| v / energy).collect())
}
