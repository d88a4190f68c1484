//! Shared signal-processing primitives: FFT wrappers, zero-phase band masks,
//! correlation and convolution, sliding extrema, and order statistics.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

pub fn next_pow2(n: usize) -> usize {
    n.next_power_of_two()
}

/// Forward FFT of a real signal, full complex spectrum of length `x.len()`.
pub fn fft_real(x: &[f64]) -> Vec<Complex<f64>> {
    let mut buf: Vec<Complex<f64>> = x.iter().map(|&v| Complex::new(v, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(buf.len()).process(&mut buf);
    buf
}

/// Inverse FFT including the 1/N scaling; returns the real parts.
pub fn ifft_real(spec: &[Complex<f64>]) -> Vec<f64> {
    let n = spec.len();
    let mut buf = spec.to_vec();
    FftPlanner::new().plan_fft_inverse(n).process(&mut buf);
    let scale = 1.0 / n as f64;
    buf.iter().map(|c| c.re * scale).collect()
}

/// Magnitudes and phases of the first `n/2` bins of the length-`n` DFT of `x`
/// zero-padded to `n`. `x.len()` must not exceed `n`.
pub fn spectrum_mag_phase(x: &[f64], n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(x.len() <= n, "frame longer than FFT size");
    let mut buf = vec![Complex::new(0.0, 0.0); n];
    for (b, &v) in buf.iter_mut().zip(x.iter()) {
        b.re = v;
    }
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let half = n / 2;
    let mags = buf[..half].iter().map(|c| c.norm()).collect();
    let phases = buf[..half].iter().map(|c| c.im.atan2(c.re)).collect();
    (mags, phases)
}

/// Periodogram `|X[k]|^2 / N` over the first `N/2` bins.
pub fn periodogram(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let spec = fft_real(x);
    spec[..n / 2].iter().map(|c| c.norm_sqr() / n as f64).collect()
}

/// Zero-phase band filter: the FFT bins whose center frequency falls outside
/// every `(lo, hi)` band are zeroed (negative frequencies mirrored), then the
/// signal is reconstructed by inverse FFT. Output length equals input length.
pub fn band_mask_filter(x: &[f64], sample_rate: f64, bands: &[(f64, f64)]) -> Vec<f64> {
    let n = x.len();
    if n == 0 {
        return Vec::new();
    }
    let mut spec = fft_real(x);
    let bin_hz = sample_rate / n as f64;
    for k in 0..n {
        // Frequency of bin k, using the aliased (negative) frequency above N/2.
        let f = if k <= n / 2 {
            k as f64 * bin_hz
        } else {
            (n - k) as f64 * bin_hz
        };
        let keep = bands.iter().any(|&(lo, hi)| f >= lo && f <= hi);
        if !keep {
            spec[k] = Complex::new(0.0, 0.0);
        }
    }
    ifft_real(&spec)
}

/// Fraction of signal energy that the band filter retains.
pub fn band_energy_fraction(x: &[f64], sample_rate: f64, bands: &[(f64, f64)]) -> f64 {
    let total: f64 = x.iter().map(|v| v * v).sum();
    if total == 0.0 {
        return 0.0;
    }
    let filtered = band_mask_filter(x, sample_rate, bands);
    filtered.iter().map(|v| v * v).sum::<f64>() / total
}

/// Cross-correlation `c[n] = sum_k s[n+k] t[k]` for every full-overlap lag,
/// length `s.len() - t.len() + 1`. FFT-based.
pub fn xcorr_valid(s: &[f64], t: &[f64]) -> Vec<f64> {
    let n = s.len();
    let l = t.len();
    assert!(l >= 1 && n >= l, "template longer than signal");
    let rev: Vec<f64> = t.iter().rev().copied().collect();
    let full = convolve_full(s, &rev);
    full[l - 1..n].to_vec()
}

/// Full linear convolution via FFT, length `x.len() + h.len() - 1`.
pub fn convolve_full(x: &[f64], h: &[f64]) -> Vec<f64> {
    let out_len = x.len() + h.len() - 1;
    let m = next_pow2(out_len);
    let mut a = vec![Complex::new(0.0, 0.0); m];
    let mut b = vec![Complex::new(0.0, 0.0); m];
    for (slot, &v) in a.iter_mut().zip(x.iter()) {
        slot.re = v;
    }
    for (slot, &v) in b.iter_mut().zip(h.iter()) {
        slot.re = v;
    }
    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(m);
    fwd.process(&mut a);
    fwd.process(&mut b);
    for (pa, pb) in a.iter_mut().zip(b.iter()) {
        *pa *= pb;
    }
    planner.plan_fft_inverse(m).process(&mut a);
    let scale = 1.0 / m as f64;
    a[..out_len].iter().map(|c| c.re * scale).collect()
}

/// "Same"-length convolution with the tap at `center` aligned to the output
/// sample, so a symmetric `h` centered there leaves peak positions in place.
pub fn convolve_same_centered(x: &[f64], h: &[f64], center: usize) -> Vec<f64> {
    assert!(center < h.len());
    let full = convolve_full(x, h);
    full[center..center + x.len()].to_vec()
}

/// Trailing-window maxima: `out[i] = max(x[i-w+1 ..= i])`, clipped at the start.
pub fn sliding_max_trailing(x: &[f64], w: usize) -> Vec<f64> {
    assert!(w >= 1);
    let mut out = Vec::with_capacity(x.len());
    let mut deque: std::collections::VecDeque<usize> = std::collections::VecDeque::new();
    for i in 0..x.len() {
        while let Some(&back) = deque.back() {
            if x[back] <= x[i] {
                deque.pop_back();
            } else {
                break;
            }
        }
        deque.push_back(i);
        if *deque.front().unwrap() + w <= i {
            deque.pop_front();
        }
        out.push(x[*deque.front().unwrap()]);
    }
    out
}

/// Leading-window minima: `out[i] = min(x[i ..= i+w-1])`, clipped at the end.
pub fn sliding_min_leading(x: &[f64], w: usize) -> Vec<f64> {
    let rev: Vec<f64> = x.iter().rev().map(|v| -v).collect();
    let mut m = sliding_max_trailing(&rev, w);
    m.reverse();
    m.iter().map(|v| -v).collect()
}

/// Nearest-rank percentile: the `ceil(p/100 * N)`-th smallest value.
pub fn percentile_nearest_rank(values: &[f64], p: f64) -> f64 {
    assert!(!values.is_empty(), "percentile of empty slice");
    assert!(p > 0.0 && p <= 100.0);
    let n = values.len();
    let rank = ((p / 100.0) * n as f64).ceil() as usize;
    let idx = rank.max(1) - 1;
    let mut v = values.to_vec();
    let (_, nth, _) = v.select_nth_unstable_by(idx, |a, b| a.partial_cmp(b).unwrap());
    *nth
}

/// Indices of strict local maxima; plateaus count once, at their first sample.
pub fn local_maxima(x: &[f64]) -> Vec<usize> {
    let n = x.len();
    let mut out = Vec::new();
    let mut i = 1;
    while i + 1 <= n.saturating_sub(1) {
        if x[i] > x[i - 1] {
            // Scan the plateau starting at i.
            let mut j = i;
            while j + 1 < n && x[j + 1] == x[i] {
                j += 1;
            }
            if j + 1 < n && x[j + 1] < x[i] {
                out.push(i);
            }
            i = j + 1;
        } else {
            i += 1;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dft_direct(x: &[f64]) -> Vec<Complex<f64>> {
        let n = x.len();
        (0..n)
            .map(|k| {
                let mut acc = Complex::new(0.0, 0.0);
                for (i, &v) in x.iter().enumerate() {
                    let ang = -2.0 * std::f64::consts::PI * (k * i) as f64 / n as f64;
                    acc += Complex::new(v * ang.cos(), v * ang.sin());
                }
                acc
            })
            .collect()
    }

    #[test]
    fn fft_matches_direct_dft() {
        let x: Vec<f64> = (0..64).map(|i| ((i * 37 + 11) % 17) as f64 / 17.0 - 0.4).collect();
        let a = fft_real(&x);
        let b = dft_direct(&x);
        for (p, q) in a.iter().zip(b.iter()) {
            assert!((p - q).norm() < 1e-9);
        }
    }

    #[test]
    fn ifft_inverts_fft() {
        let x: Vec<f64> = (0..128).map(|i| (i as f64 * 0.7).sin()).collect();
        let y = ifft_real(&fft_real(&x));
        for (a, b) in x.iter().zip(y.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn xcorr_matches_direct_sum() {
        let s: Vec<f64> = (0..200).map(|i| ((i * 13 + 5) % 23) as f64 / 23.0 - 0.5).collect();
        let t: Vec<f64> = (0..31).map(|i| ((i * 7 + 2) % 11) as f64 / 11.0 - 0.5).collect();
        let c = xcorr_valid(&s, &t);
        assert_eq!(c.len(), s.len() - t.len() + 1);
        for n in 0..c.len() {
            let direct: f64 = (0..t.len()).map(|k| s[n + k] * t[k]).sum();
            assert!((c[n] - direct).abs() < 1e-10);
        }
    }

    #[test]
    fn band_mask_keeps_in_band_tone() {
        let fs = 8000.0;
        let n = 4000;
        let x: Vec<f64> = (0..n)
            .map(|i| {
                let t = i as f64 / fs;
                (2.0 * std::f64::consts::PI * 1000.0 * t).sin()
                    + (2.0 * std::f64::consts::PI * 3000.0 * t).sin()
            })
            .collect();
        let y = band_mask_filter(&x, fs, &[(980.0, 1020.0)]);
        let frac = band_energy_fraction(&y, fs, &[(980.0, 1020.0)]);
        assert!(frac > 0.999, "filtered energy concentration {frac}");
        // Roughly half the energy (the 3 kHz tone) must be gone.
        let e_in: f64 = x.iter().map(|v| v * v).sum();
        let e_out: f64 = y.iter().map(|v| v * v).sum();
        assert!((e_out / e_in - 0.5).abs() < 0.01);
    }

    #[test]
    fn sliding_extrema_match_naive() {
        let x: Vec<f64> = (0..257).map(|i| ((i * 31 + 7) % 101) as f64).collect();
        for w in [1usize, 2, 5, 16, 300] {
            let fast = sliding_max_trailing(&x, w);
            let naive: Vec<f64> = (0..x.len())
                .map(|i| {
                    let lo = i.saturating_sub(w - 1);
                    x[lo..=i].iter().cloned().fold(f64::MIN, f64::max)
                })
                .collect();
            assert_eq!(fast, naive, "window {w}");
            let fast_min = sliding_min_leading(&x, w);
            let naive_min: Vec<f64> = (0..x.len())
                .map(|i| {
                    let hi = (i + w).min(x.len());
                    x[i..hi].iter().cloned().fold(f64::MAX, f64::min)
                })
                .collect();
            assert_eq!(fast_min, naive_min, "window {w}");
        }
    }

    #[test]
    fn percentile_nearest_rank_examples() {
        let seq: Vec<f64> = (1..=100).map(|v| v as f64).collect();
        assert_eq!(percentile_nearest_rank(&seq, 90.0), 90.0);
        assert_eq!(percentile_nearest_rank(&seq, 100.0), 100.0);
        assert_eq!(percentile_nearest_rank(&[5.0], 90.0), 5.0);
    }

    #[test]
    fn local_maxima_plateau_first_sample() {
        let x = [0.0, 1.0, 1.0, 0.5, 2.0, 0.1];
        assert_eq!(local_maxima(&x), vec![1, 4]);
        let flat = [1.0, 1.0, 1.0];
        assert!(local_maxima(&flat).is_empty());
    }
}
