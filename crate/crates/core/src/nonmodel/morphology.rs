//! Morphological envelope: close the rectified matched-filter track with a
//! flat structuring element spanning one fundamental period, then normalize
//! by the track's mode.

use crate::dsp;
use crate::error::{Error, Result};

/// Histogram resolution of the mode estimate.
pub const MODE_HISTOGRAM_BINS: usize = 1000;

/// Flat (all-ones) 1-D structuring element.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StructuringElement {
    pub size: usize,
}

impl StructuringElement {
    pub fn new(size: usize) -> Result<StructuringElement> {
        if size == 0 {
            return Err(Error::config("structuring element size must be >= 1"));
        }
        Ok(StructuringElement { size })
    }

    /// One period of the lowest relevant frequency, in samples.
    pub fn for_fundamental(sample_rate: f64, f0: f64) -> Result<StructuringElement> {
        if !(f0 > 0.0) {
            return Err(Error::config(format!("fundamental {f0} Hz must be positive")));
        }
        StructuringElement::new(((sample_rate / f0).round() as usize).max(1))
    }
}

/// Mode-normalized closed envelope.
#[derive(Debug, Clone)]
pub struct EnvelopeTrack {
    pub values: Vec<f64>,
    pub mode_value: f64,
}

/// Grayscale closing with a flat element: dilation (running max over the
/// trailing window) followed by erosion (running min over the leading
/// window). Window clipping at the edges equals padding with -inf / +inf,
/// which keeps the closing extensive and idempotent.
pub fn closing(x: &[f64], se: StructuringElement) -> Vec<f64> {
    dsp::sliding_min_leading(&dsp::sliding_max_trailing(x, se.size), se.size)
}

/// Most common value of a non-negative track: a 1000-bin histogram over
/// [0, max], first-most-populated bin wins, reported as the bin center.
pub fn mode_value(x: &[f64]) -> f64 {
    let max = x.iter().fold(0.0f64, |m, &v| m.max(v));
    if max <= 0.0 || x.is_empty() {
        return 0.0;
    }
    let mut counts = vec![0usize; MODE_HISTOGRAM_BINS];
    for &v in x {
        let bin = ((v / max * MODE_HISTOGRAM_BINS as f64) as usize).min(MODE_HISTOGRAM_BINS - 1);
        counts[bin] += 1;
    }
    let best = counts
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0)))
        .map(|(i, _)| i)
        .unwrap();
    (best as f64 + 0.5) * max / MODE_HISTOGRAM_BINS as f64
}

/// Close the rectified track and normalize by its mode. In noise the mode
/// sits at the noise floor of the closed track, so alarm peaks from
/// different scenarios land on a comparable scale.
pub fn morph_envelope(correlation: &[f64], se: StructuringElement) -> EnvelopeTrack {
    let rectified: Vec<f64> = correlation.iter().map(|v| v.abs()).collect();
    let closed = closing(&rectified, se);
    let mode = mode_value(&closed);
    let values = if mode > 0.0 { closed.iter().map(|&v| v / mode).collect() } else { closed };
    EnvelopeTrack { values, mode_value: mode }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Textbook closing: erosion of the dilation with explicit edge
    /// clipping, quadratic time.
    fn closing_oracle(x: &[f64], s: usize) -> Vec<f64> {
        let n = x.len();
        let dilated: Vec<f64> = (0..n)
            .map(|i| {
                let lo = i.saturating_sub(s - 1);
                x[lo..=i].iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v))
            })
            .collect();
        (0..n)
            .map(|i| {
                let hi = (i + s - 1).min(n - 1);
                dilated[i..=hi].iter().fold(f64::INFINITY, |m, &v| m.min(v))
            })
            .collect()
    }

    fn random_track(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.gen_range(0.0..1.0)).collect()
    }

    #[test]
    fn closing_matches_the_quadratic_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..200 {
            let n = rng.gen_range(1..120);
            let s = rng.gen_range(1..20);
            let x = random_track(&mut rng, n);
            let se = StructuringElement::new(s).unwrap();
            assert_eq!(closing(&x, se), closing_oracle(&x, s));
        }
    }

    #[test]
    fn closing_is_extensive_idempotent_and_monotone() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..200 {
            let n = rng.gen_range(1..100);
            let s = rng.gen_range(1..15);
            let se = StructuringElement::new(s).unwrap();
            let x = random_track(&mut rng, n);
            let cx = closing(&x, se);
            // Extensive: closing never lowers a sample.
            for (a, b) in x.iter().zip(cx.iter()) {
                assert!(b >= a);
            }
            // Idempotent: closing twice changes nothing. Exact equality:
            // min/max only move values, never produce new ones.
            assert_eq!(closing(&cx, se), cx);
            // Monotone: x <= y pointwise implies closing(x) <= closing(y).
            let y: Vec<f64> = x.iter().map(|&v| v + rng.gen_range(0.0..0.5)).collect();
            let cy = closing(&y, se);
            for (a, b) in cx.iter().zip(cy.iter()) {
                assert!(a <= b);
            }
        }
    }

    #[test]
    fn closing_fills_gaps_narrower_than_the_element() {
        // A dip of width 3 inside a plateau disappears under S = 5.
        let mut x = vec![1.0; 20];
        for v in &mut x[8..11] {
            *v = 0.2;
        }
        let closed = closing(&x, StructuringElement::new(5).unwrap());
        assert!(closed.iter().all(|&v| v == 1.0), "{closed:?}");
        // Under S = 2 the gap survives partially.
        let closed2 = closing(&x, StructuringElement::new(2).unwrap());
        assert!(closed2[9] < 1.0);
    }

    #[test]
    fn rectified_tone_closes_to_a_flat_envelope() {
        let fs = 24000.0;
        let f0 = 960.0;
        let se = StructuringElement::for_fundamental(fs, f0).unwrap();
        assert_eq!(se.size, 25);
        let x: Vec<f64> = (0..4800)
            .map(|i| (2.0 * std::f64::consts::PI * f0 * i as f64 / fs).sin())
            .collect();
        let rect: Vec<f64> = x.iter().map(|v| v.abs()).collect();
        let closed = closing(&rect, se);
        // Away from the edges every window holds a crest of |sin|.
        for &v in &closed[se.size..closed.len() - se.size] {
            assert!(v > 0.98 && v <= 1.0 + 1e-12, "ripple {v}");
        }
    }

    #[test]
    fn mode_examples() {
        assert_eq!(mode_value(&[]), 0.0);
        assert_eq!(mode_value(&[0.0; 50]), 0.0);
        // 90 samples near 0.1, 10 near 1.0: the mode is the crowd.
        let mut x = vec![0.1; 90];
        x.extend(vec![1.0; 10]);
        let m = mode_value(&x);
        assert!((m - 0.1005).abs() < 1e-12, "mode {m}");
        // Constant positive track: everything lands in the top bin.
        let m1 = mode_value(&[2.0; 7]);
        assert!((m1 - 2.0 * 999.5 / 1000.0).abs() < 1e-12);
    }

    #[test]
    fn envelope_normalization_uses_the_mode() {
        // Noise floor near 0.2 with one tall excursion: after
        // normalization the floor sits near 1.
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut x: Vec<f64> = (0..4000).map(|_| 0.2 + rng.gen_range(-0.01..0.01)).collect();
        for v in &mut x[2000..2100] {
            *v = 3.0;
        }
        let env = morph_envelope(&x, StructuringElement::new(25).unwrap());
        assert!(env.mode_value > 0.19 && env.mode_value < 0.22, "mode {}", env.mode_value);
        let floor_mean =
            env.values[100..1000].iter().sum::<f64>() / 900.0;
        assert!((floor_mean - 1.0).abs() < 0.1, "floor {floor_mean}");
        let peak = env.values.iter().cloned().fold(0.0f64, f64::max);
        assert!(peak > 10.0, "peak {peak}");
    }

    #[test]
    fn zero_track_stays_zero() {
        let env = morph_envelope(&[0.0; 100], StructuringElement::new(10).unwrap());
        assert_eq!(env.mode_value, 0.0);
        assert!(env.values.iter().all(|&v| v == 0.0));
    }
}
