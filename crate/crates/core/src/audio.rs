//! Audio containers, WAV I/O, framing, log spectra, and annotation files.

use crate::dsp;
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Additive floor inside every log-magnitude compression in the toolkit.
pub const LOG_EPS: f64 = 1e-10;

/// Analysis frame length in samples (about 85 ms at the 24 kHz project rate).
pub const FRAME_LEN: usize = 2048;
/// Analysis hop in samples: frames half-overlap.
pub const FRAME_HOP: usize = 1024;

/// Mono audio at a fixed rate. Samples are finite f64, nominally in [-1, 1].
#[derive(Debug, Clone)]
pub struct AudioBuffer {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl AudioBuffer {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::config("sample_rate must be positive"));
        }
        if samples.iter().any(|v| !v.is_finite()) {
            return Err(Error::numeric("audio contains non-finite samples"));
        }
        Ok(AudioBuffer { samples, sample_rate })
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}

/// One annotated alarm signal interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    pub class_id: String,
    pub version_id: u32,
    pub start_s: f64,
    pub end_s: f64,
}

impl Annotation {
    pub fn validate(&self) -> Result<()> {
        if !(self.end_s > self.start_s) {
            return Err(Error::data(format!(
                "annotation for class {} has end_s {} <= start_s {}",
                self.class_id, self.end_s, self.start_s
            )));
        }
        Ok(())
    }
}

/// Log-magnitude spectrum of one analysis frame (first half of the DFT).
#[derive(Debug, Clone)]
pub struct SpectralFrame {
    pub log_magnitudes: Vec<f64>,
    pub frame_index: usize,
    pub bin_hz: f64,
}

/// Read a PCM WAV file: mono or stereo (averaged to mono), 16-bit integer or
/// 32-bit float. Integer samples scale so that -32768 maps to -1.0.
pub fn read_wav(path: &Path) -> Result<AudioBuffer> {
    let reader = hound::WavReader::open(path).map_err(map_wav_err)?;
    let spec = reader.spec();
    if spec.channels == 0 || spec.channels > 2 {
        return Err(Error::unsupported(format!(
            "{} channels in {}; only mono and stereo are handled",
            spec.channels,
            path.display()
        )));
    }
    let mono = |interleaved: Vec<f64>| -> Vec<f64> {
        if spec.channels == 1 {
            interleaved
        } else {
            interleaved.chunks(2).map(|c| (c[0] + c[1]) / 2.0).collect()
        }
    };
    let samples = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Int, 16) => {
            let raw: std::result::Result<Vec<i16>, _> =
                reader.into_samples::<i16>().collect();
            mono(raw
                .map_err(map_wav_err)?
                .into_iter()
                .map(|s| s as f64 / 32768.0)
                .collect())
        }
        (hound::SampleFormat::Float, 32) => {
            let raw: std::result::Result<Vec<f32>, _> =
                reader.into_samples::<f32>().collect();
            mono(raw.map_err(map_wav_err)?.into_iter().map(|s| s as f64).collect())
        }
        (fmt, bits) => {
            return Err(Error::unsupported(format!(
                "{bits}-bit {fmt:?} encoding in {}; only 16-bit int and 32-bit float are handled",
                path.display()
            )))
        }
    };
    AudioBuffer::new(samples, spec.sample_rate)
}

/// Write mono 16-bit PCM. Samples are scaled by 32768 and clamped to i16.
pub fn write_wav(buf: &AudioBuffer, path: &Path) -> Result<()> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: buf.sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(map_wav_err)?;
    for &s in &buf.samples {
        let v = (s * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        writer.write_sample(v).map_err(map_wav_err)?;
    }
    writer.finalize().map_err(map_wav_err)?;
    Ok(())
}

fn map_wav_err(e: hound::Error) -> Error {
    match e {
        hound::Error::IoError(io) => Error::Io(io),
        hound::Error::FormatError(msg) => Error::data(format!("malformed WAV: {msg}")),
        hound::Error::Unsupported => Error::unsupported("WAV feature not handled".to_string()),
        other => Error::data(format!("WAV read/write failed: {other}")),
    }
}

/// Split into fully contained frames of `frame_len` samples every `hop`
/// samples. A signal shorter than one frame yields no frames.
pub fn frame_signal(samples: &[f64], frame_len: usize, hop: usize) -> Vec<&[f64]> {
    assert!(frame_len > 0 && hop > 0);
    if samples.len() < frame_len {
        return Vec::new();
    }
    let count = (samples.len() - frame_len) / hop + 1;
    (0..count).map(|i| &samples[i * hop..i * hop + frame_len]).collect()
}

/// Number of frames `frame_signal` yields for a given length.
pub fn frame_count(n_samples: usize, frame_len: usize, hop: usize) -> usize {
    if n_samples < frame_len {
        0
    } else {
        (n_samples - frame_len) / hop + 1
    }
}

/// Log-magnitude spectrum of one frame, optionally zero-padded by `zero_pad`
/// samples before the DFT. Returns the first half of the padded spectrum.
pub fn log_spectrum(
    frame: &[f64],
    sample_rate: u32,
    frame_index: usize,
    zero_pad: usize,
) -> SpectralFrame {
    let n = frame.len() + zero_pad;
    let (mags, _) = dsp::spectrum_mag_phase(frame, n);
    SpectralFrame {
        log_magnitudes: mags.iter().map(|m| (m + LOG_EPS).ln()).collect(),
        frame_index,
        bin_hz: sample_rate as f64 / n as f64,
    }
}

/// Read an annotation CSV with the header `class_id,version_id,start_s,end_s`.
pub fn read_annotations(path: &Path) -> Result<Vec<Annotation>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| Error::data(format!("cannot open annotations {}: {e}", path.display())))?;
    {
        let headers = reader
            .headers()
            .map_err(|e| Error::data(format!("bad annotation header: {e}")))?;
        let expect = ["class_id", "version_id", "start_s", "end_s"];
        if headers.iter().collect::<Vec<_>>() != expect {
            return Err(Error::data(format!(
                "annotation header {:?} in {}; expected {:?}",
                headers,
                path.display(),
                expect
            )));
        }
    }
    let mut out = Vec::new();
    for rec in reader.deserialize() {
        let ann: Annotation =
            rec.map_err(|e| Error::data(format!("bad annotation row in {}: {e}", path.display())))?;
        ann.validate()?;
        out.push(ann);
    }
    Ok(out)
}

pub fn write_annotations(annotations: &[Annotation], path: &Path) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)
        .map_err(|e| Error::data(format!("cannot create {}: {e}", path.display())))?;
    for ann in annotations {
        writer
            .serialize(ann)
            .map_err(|e| Error::data(format!("cannot write annotation: {e}")))?;
    }
    writer
        .flush()
        .map_err(|e| Error::data(format!("cannot flush annotations: {e}")))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rustfft::num_complex::Complex;

    fn sine(freq: f64, fs: u32, n: usize) -> Vec<f64> {
        (0..n)
            .map(|i| (2.0 * std::f64::consts::PI * freq * i as f64 / fs as f64).sin())
            .collect()
    }

    #[test]
    fn wav_round_trip_within_one_step() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rt.wav");
        let samples: Vec<f64> = (0..4096)
            .map(|i| ((i as f64 * 0.01).sin() * 0.9).clamp(-1.0, 1.0))
            .collect();
        let buf = AudioBuffer::new(samples.clone(), 24000).unwrap();
        write_wav(&buf, &path).unwrap();
        let back = read_wav(&path).unwrap();
        assert_eq!(back.sample_rate, 24000);
        assert_eq!(back.samples.len(), samples.len());
        let step = 1.0 / 32768.0;
        for (a, b) in samples.iter().zip(back.samples.iter()) {
            assert!((a - b).abs() <= step + 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn wav_full_scale_negative_maps_to_minus_one() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("fs.wav");
        let spec = hound::WavSpec {
            channels: 1,
            sample_rate: 8000,
            bits_per_sample: 16,
            sample_format: hound::SampleFormat::Int,
        };
        let mut w = hound::WavWriter::create(&path, spec).unwrap();
        w.write_sample(i16::MIN).unwrap();
        w.write_sample(i16::MAX).unwrap();
        w.finalize().unwrap();
        let buf = read_wav(&path).unwrap();
        assert_eq!(buf.samples[0], -1.0);
        assert!((buf.samples[1] - 32767.0 / 32768.0).abs() < 1e-12);
    }

    #[test]
    fn stereo_averages_and_float_reads() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("st.wav");
        let spec = hound::WavSpec {
            channels: 2,
            sample_rate: 16000,
            bits_per_sample: 32,
            sample_format: hound::SampleFormat::Float,
        };
        let mut w = hound::WavWriter::create(&path, spec).unwrap();
        for i in 0..10 {
            w.write_sample(i as f32 * 0.01).unwrap();
            w.write_sample(-(i as f32) * 0.01).unwrap();
        }
        w.finalize().unwrap();
        let buf = read_wav(&path).unwrap();
        assert_eq!(buf.samples.len(), 10);
        for v in &buf.samples {
            assert!(v.abs() < 1e-9);
        }
    }

    #[test]
    fn unsupported_bit_depth_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("24.wav");
        let spec = hound::WavSpec {
            channels: 1,
            sample_rate: 8000,
            bits_per_sample: 24,
            sample_format: hound::SampleFormat::Int,
        };
        let mut w = hound::WavWriter::create(&path, spec).unwrap();
        w.write_sample(1234i32).unwrap();
        w.finalize().unwrap();
        match read_wav(&path) {
            Err(Error::Unsupported(_)) => {}
            other => panic!("expected Unsupported, got {other:?}"),
        }
    }

    #[test]
    fn malformed_header_is_data_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("junk.wav");
        std::fs::write(&path, b"RIFFxxxxNOTWAVE").unwrap();
        match read_wav(&path) {
            Err(Error::Data(_)) | Err(Error::Unsupported(_)) => {}
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn frame_counts() {
        assert_eq!(frame_count(72000, 2048, 1024), 69);
        assert_eq!(frame_signal(&vec![0.0; 72000], 2048, 1024).len(), 69);
        assert_eq!(frame_count(2047, 2048, 1024), 0);
        assert_eq!(frame_count(2048, 2048, 1024), 1);
    }

    // Oracle: direct DFT argmax for an on-bin sinusoid, without and with padding.
    #[test]
    fn log_spectrum_argmax_on_bin() {
        let fs = 24000u32;
        let n = 2048usize;
        let k = 93usize;
        let freq = k as f64 * fs as f64 / n as f64;
        let frame = sine(freq, fs, n);

        let direct: Vec<f64> = (0..n / 2)
            .map(|bin| {
                let mut acc = Complex::new(0.0, 0.0);
                for (i, &v) in frame.iter().enumerate() {
                    let ang = -2.0 * std::f64::consts::PI * (bin * i) as f64 / n as f64;
                    acc += Complex::new(v * ang.cos(), v * ang.sin());
                }
                acc.norm()
            })
            .collect();
        let oracle_argmax = direct
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0;
        assert_eq!(oracle_argmax, k);

        let sf = log_spectrum(&frame, fs, 0, 0);
        let argmax = sf
            .log_magnitudes
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0;
        assert_eq!(argmax, k);
        assert!((sf.bin_hz - fs as f64 / n as f64).abs() < 1e-12);

        let sf_pad = log_spectrum(&frame, fs, 0, n);
        assert_eq!(sf_pad.log_magnitudes.len(), n);
        let argmax_pad = sf_pad
            .log_magnitudes
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0;
        assert_eq!(argmax_pad, 2 * k);
    }

    #[test]
    fn log_spectrum_gain_shifts_bins() {
        let frame = sine(1000.0, 24000, 2048);
        let a = log_spectrum(&frame, 24000, 0, 0);
        let scaled: Vec<f64> = frame.iter().map(|v| v * 8.0).collect();
        let b = log_spectrum(&scaled, 24000, 0, 0);
        for (x, y) in a.log_magnitudes.iter().zip(b.log_magnitudes.iter()) {
            // Only bins well above the floor obey the pure-shift rule.
            if *x > (1e-4f64).ln() {
                assert!((y - x - 8.0f64.ln()).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn annotations_round_trip_and_header_enforced() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ann.csv");
        let anns = vec![
            Annotation { class_id: "c1".into(), version_id: 0, start_s: 1.25, end_s: 1.47 },
            Annotation { class_id: "c2".into(), version_id: 1, start_s: 3.0, end_s: 3.32 },
        ];
        write_annotations(&anns, &path).unwrap();
        let back = read_annotations(&path).unwrap();
        assert_eq!(back, anns);

        let bad = dir.path().join("bad.csv");
        std::fs::write(&bad, "class,version,begin,finish\nc1,0,0,1\n").unwrap();
        assert!(matches!(read_annotations(&bad), Err(Error::Data(_))));

        let inverted = dir.path().join("inv.csv");
        std::fs::write(&inverted, "class_id,version_id,start_s,end_s\nc1,0,2.0,1.0\n").unwrap();
        assert!(matches!(read_annotations(&inverted), Err(Error::Data(_))));
    }
}
