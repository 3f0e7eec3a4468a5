//! WAV ingestion, resampling and volume normalization.

use std::f64::consts::PI;
use std::path::Path;

use crate::dataset::UtteranceRef;
use crate::error::{Error, Result};

pub const TARGET_RATE: u32 = 16_000;
/// Peak absolute amplitude after volume normalization.
pub const TARGET_PEAK: f64 = 0.95;

/// Mono waveform with its sample rate.
#[derive(Debug, Clone, PartialEq)]
pub struct Wave {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl Wave {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Self {
        Self {
            samples,
            sample_rate,
        }
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}

/// Read a PCM WAV file and downmix to mono.
pub fn read_wav(path: impl AsRef<Path>) -> Result<Wave> {
    let path = path.as_ref();
    let audio_err = |msg: String| Error::Audio {
        path: path.to_path_buf(),
        msg,
    };
    if !path.exists() {
        return Err(Error::NotFound(path.to_path_buf()));
    }
    let mut reader = hound::WavReader::open(path).map_err(|e| audio_err(e.to_string()))?;
    let spec = reader.spec();
    let channels = spec.channels.max(1) as usize;
    let interleaved: Vec<f64> = match spec.sample_format {
        hound::SampleFormat::Float => reader
            .samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| audio_err(e.to_string()))?,
        hound::SampleFormat::Int => {
            let scale = (1u64 << (spec.bits_per_sample - 1)) as f64;
            reader
                .samples::<i32>()
                .map(|s| s.map(|v| v as f64 / scale))
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| audio_err(e.to_string()))?
        }
    };
    let samples = interleaved
        .chunks(channels)
        .map(|frame| frame.iter().sum::<f64>() / channels as f64)
        .collect();
    Ok(Wave::new(samples, spec.sample_rate))
}

/// Write a mono 32-bit float WAV file.
pub fn write_wav(path: impl AsRef<Path>, wave: &Wave) -> Result<()> {
    let path = path.as_ref();
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: wave.sample_rate,
        bits_per_sample: 32,
        sample_format: hound::SampleFormat::Float,
    };
    let audio_err = |e: hound::Error| Error::Audio {
        path: path.to_path_buf(),
        msg: e.to_string(),
    };
    let mut w = hound::WavWriter::create(path, spec).map_err(audio_err)?;
    for &s in &wave.samples {
        w.write_sample(s as f32).map_err(audio_err)?;
    }
    w.finalize().map_err(audio_err)
}

const SINC_ZERO_CROSSINGS: f64 = 16.0;

/// Band-limited resampling by Hann-windowed sinc interpolation.
///
/// Output length is `round(len * to / from)`. When downsampling the kernel
/// cutoff drops to the new Nyquist frequency.
pub fn resample(samples: &[f64], from: u32, to: u32) -> Vec<f64> {
    if from == to || samples.is_empty() {
        return samples.to_vec();
    }
    let ratio = to as f64 / from as f64;
    let out_len = (samples.len() as f64 * ratio).round() as usize;
    resample_to_len(samples, ratio, out_len)
}

/// Resample with an explicit rate ratio (`out_rate / in_rate`) and output length.
pub fn resample_to_len(samples: &[f64], ratio: f64, out_len: usize) -> Vec<f64> {
    let cutoff = ratio.min(1.0);
    let half_width = SINC_ZERO_CROSSINGS / cutoff;
    let n = samples.len() as isize;
    // sin and cos advance by fixed angles from tap to tap, so rotate them
    // instead of calling trig functions per tap
    let (sd1, cd1) = (PI * cutoff).sin_cos();
    let (sd2, cd2) = (PI / half_width).sin_cos();
    (0..out_len)
        .map(|j| {
            let t = j as f64 / ratio;
            let lo = (t - half_width).ceil().max(0.0) as isize;
            let hi = ((t + half_width).floor() as isize).min(n - 1);
            if lo > hi {
                return 0.0;
            }
            let x0 = t - lo as f64;
            let (mut s1, mut c1) = (PI * cutoff * x0).sin_cos();
            let (mut s2, mut c2) = (PI * x0 / half_width).sin_cos();
            let mut acc = 0.0;
            for k in lo..=hi {
                let x = t - k as f64;
                let cx = cutoff * x;
                let sinc = if cx.abs() < 1e-12 {
                    1.0
                } else {
                    s1 / (PI * cx)
                };
                let w = 0.5 + 0.5 * c2;
                acc += samples[k as usize] * cutoff * sinc * w;
                (s1, c1) = (s1 * cd1 - c1 * sd1, c1 * cd1 + s1 * sd1);
                (s2, c2) = (s2 * cd2 - c2 * sd2, c2 * cd2 + s2 * sd2);
            }
            acc
        })
        .collect()
}

/// Scale so the peak absolute amplitude equals [`TARGET_PEAK`].
pub fn peak_normalize(samples: &mut [f64]) -> std::result::Result<(), &'static str> {
    let peak = samples.iter().fold(0.0f64, |m, s| m.max(s.abs()));
    if samples.is_empty() {
        return Err("zero-length audio");
    }
    if peak == 0.0 || !peak.is_finite() {
        return Err("silent or non-finite audio, volume normalization undefined");
    }
    let g = TARGET_PEAK / peak;
    samples.iter_mut().for_each(|s| *s *= g);
    Ok(())
}

/// Resample to 16 kHz first, then peak-normalize.
pub fn prepare_wave(wave: &Wave) -> std::result::Result<Vec<f64>, &'static str> {
    if wave.samples.is_empty() {
        return Err("zero-length audio");
    }
    let mut out = resample(&wave.samples, wave.sample_rate, TARGET_RATE);
    peak_normalize(&mut out)?;
    Ok(out)
}

/// Load and prepare the audio of one utterance.
pub fn prepare_audio(u: &UtteranceRef) -> Result<Vec<f64>> {
    let wave = read_wav(&u.audio_path)?;
    prepare_wave(&wave).map_err(|msg| Error::Audio {
        path: u.audio_path.clone(),
        msg: msg.to_string(),
    })
}
