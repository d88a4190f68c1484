//! Baseline frame features: log mel filter-bank energies compressed to a
//! frequency flux (first difference across filters) plus its time delta.

use crate::audio::LOG_EPS;

/// Number of triangular mel filters.
pub const N_MEL_FILTERS: usize = 20;

fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Triangular mel filters over `n_bins` linear bins, each returned as sparse
/// `(bin, weight)` pairs with weights summing to one, so a flat power
/// spectrum yields identical energies in every filter.
pub fn mel_triangle_weights(
    n_bins: usize,
    n_filters: usize,
    sample_rate: f64,
) -> Vec<Vec<(usize, f64)>> {
    let nyquist = sample_rate / 2.0;
    let bin_hz = nyquist / n_bins as f64;
    let mel_max = hz_to_mel(nyquist);
    let edges: Vec<f64> =
        (0..n_filters + 2).map(|i| mel_to_hz(mel_max * i as f64 / (n_filters + 1) as f64)).collect();
    let mut filters = Vec::with_capacity(n_filters);
    for j in 0..n_filters {
        let (lo, center, hi) = (edges[j], edges[j + 1], edges[j + 2]);
        let mut taps: Vec<(usize, f64)> = Vec::new();
        for bin in 0..n_bins {
            let f = bin as f64 * bin_hz;
            let w = if f <= lo || f >= hi {
                0.0
            } else if f <= center {
                (f - lo) / (center - lo)
            } else {
                (hi - f) / (hi - center)
            };
            if w > 0.0 {
                taps.push((bin, w));
            }
        }
        if taps.is_empty() {
            // Degenerate only for very coarse grids: snap to the center bin.
            let bin = ((center / bin_hz).round() as usize).min(n_bins - 1);
            taps.push((bin, 1.0));
        }
        let sum: f64 = taps.iter().map(|(_, w)| w).sum();
        for t in taps.iter_mut() {
            t.1 /= sum;
        }
        filters.push(taps);
    }
    filters
}

/// Log filter-bank energies of one frame's power spectrum.
pub fn mel_log_energies(power: &[f64], filters: &[Vec<(usize, f64)>]) -> Vec<f64> {
    filters
        .iter()
        .map(|taps| {
            let e: f64 = taps.iter().map(|&(bin, w)| w * power[bin]).sum();
            (e + LOG_EPS).ln()
        })
        .collect()
}

/// Frequency flux across the filter axis: `y[j] = x[j+1] - x[j-1]` for the
/// interior filters, dropping both ends.
pub fn frequency_flux(log_energies: &[f64]) -> Vec<f64> {
    (1..log_energies.len() - 1).map(|j| log_energies[j + 1] - log_energies[j - 1]).collect()
}

/// Full per-frame feature track: frequency flux (interior filters) plus its
/// symmetric time delta with edge replication. For `N_MEL_FILTERS` filters
/// the output has `2 * (N_MEL_FILTERS - 2)` dimensions per frame.
pub fn ff_lfbe_features(per_frame_log_energies: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let flux: Vec<Vec<f64>> =
        per_frame_log_energies.iter().map(|e| frequency_flux(e)).collect();
    let n = flux.len();
    let mut out = Vec::with_capacity(n);
    for t in 0..n {
        let prev = &flux[t.saturating_sub(1)];
        let next = &flux[(t + 1).min(n - 1)];
        let mut feature = flux[t].clone();
        feature.extend(prev.iter().zip(next.iter()).map(|(p, q)| (q - p) / 2.0));
        out.push(feature);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const N_BINS: usize = 1024;
    const FS: f64 = 24000.0;

    #[test]
    fn filters_are_normalized_and_ordered() {
        let filters = mel_triangle_weights(N_BINS, N_MEL_FILTERS, FS);
        assert_eq!(filters.len(), N_MEL_FILTERS);
        let mut prev_first = 0usize;
        for taps in &filters {
            assert!(!taps.is_empty());
            let sum: f64 = taps.iter().map(|(_, w)| w).sum();
            assert!((sum - 1.0).abs() < 1e-12);
            assert!(taps[0].0 >= prev_first, "filters ordered along frequency");
            prev_first = taps[0].0;
            for &(bin, w) in taps {
                assert!(bin < N_BINS);
                assert!(w > 0.0);
            }
        }
        // Mel spacing widens with frequency: the last filter covers more
        // linear bins than the first.
        assert!(filters.last().unwrap().len() > filters[0].len());
    }

    #[test]
    fn flat_spectrum_gives_the_zero_vector() {
        let filters = mel_triangle_weights(N_BINS, N_MEL_FILTERS, FS);
        let flat_frames: Vec<Vec<f64>> =
            (0..5).map(|_| mel_log_energies(&vec![2.5; N_BINS], &filters)).collect();
        let feats = ff_lfbe_features(&flat_frames);
        assert_eq!(feats.len(), 5);
        for f in &feats {
            assert_eq!(f.len(), 36);
            for &v in f {
                // Filter normalization rounds per tap, so energies agree only
                // to within a few ulps.
                assert!(v.abs() < 1e-12, "flat input must produce zero, got {v}");
            }
        }
    }

    #[test]
    fn flux_drops_both_end_filters() {
        let log_e: Vec<f64> = (0..N_MEL_FILTERS).map(|j| j as f64 * j as f64).collect();
        let flux = frequency_flux(&log_e);
        assert_eq!(flux.len(), 18);
        for (i, &v) in flux.iter().enumerate() {
            let j = i + 1;
            let expect = ((j + 1) * (j + 1)) as f64 - ((j - 1) * (j - 1)) as f64;
            assert_eq!(v, expect);
        }
    }

    #[test]
    fn time_delta_replicates_edges() {
        // log_e_t[j] = t * j makes the flux 2t in every dimension, so the
        // interior delta is 2 and both edges see half of that.
        let frames: Vec<Vec<f64>> = (0..6)
            .map(|t| (0..N_MEL_FILTERS).map(|j| (t * j) as f64).collect())
            .collect();
        let feats = ff_lfbe_features(&frames);
        for (t, f) in feats.iter().enumerate() {
            let expect = if t == 0 || t == 5 { 1.0 } else { 2.0 };
            for &d in &f[18..] {
                assert_eq!(d, expect, "frame {t}");
            }
            for (i, &v) in f[..18].iter().enumerate() {
                assert_eq!(v, (2 * t) as f64, "flux dim {i}");
            }
        }
    }

    #[test]
    fn tone_and_flat_spectra_separate() {
        let filters = mel_triangle_weights(N_BINS, N_MEL_FILTERS, FS);
        let mut tone_power = vec![1e-6; N_BINS];
        tone_power[170] = 50.0;
        let tone_e = mel_log_energies(&tone_power, &filters);
        let flat_e = mel_log_energies(&vec![1.0; N_BINS], &filters);
        let tone_flux = frequency_flux(&tone_e);
        let flat_flux = frequency_flux(&flat_e);
        let tone_mag: f64 = tone_flux.iter().map(|v| v.abs()).sum();
        let flat_mag: f64 = flat_flux.iter().map(|v| v.abs()).sum();
        assert!(tone_mag > 10.0 * (flat_mag + 1.0));
    }
}
