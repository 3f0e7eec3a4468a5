//! Label-preserving augmentation: speaking-rate change by phase-vocoder
//! time stretching, and pitch shifting by stretch-then-resample.

use std::f64::consts::PI;

use rand::Rng;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::audio::resample_to_len;
use crate::error::{Error, Result};

/// Analysis window length of the phase vocoder.
pub const PV_WINDOW: usize = 1024;
/// Synthesis hop of the phase vocoder; duration contracts hold within one hop.
pub const PV_HOP: usize = PV_WINDOW / 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AugmentMode {
    /// Fresh parameters every time an example is drawn.
    PerStep,
    /// One fixed augmented copy per utterance, computed once.
    Offline,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentConfig {
    /// Tempo factors are drawn from `[1 - f_t, 1 + f_t]`.
    pub f_t: f64,
    /// Pitch shifts are drawn from `[-f_p, f_p]` cents.
    pub f_p: f64,
    pub enabled: bool,
    pub mode: AugmentMode,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            f_t: 0.1,
            f_p: 300.0,
            enabled: true,
            mode: AugmentMode::PerStep,
        }
    }
}

impl AugmentConfig {
    pub fn disabled() -> Self {
        Self {
            enabled: false,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.f_t) {
            return Err(Error::Config(format!(
                "augment.f_t must lie in [0, 1), got {}",
                self.f_t
            )));
        }
        if !(self.f_p >= 0.0) || !self.f_p.is_finite() {
            return Err(Error::Config(format!(
                "augment.f_p must be >= 0, got {}",
                self.f_p
            )));
        }
        Ok(())
    }
}

fn hann(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos())
        .collect()
}

fn wrap_phase(p: f64) -> f64 {
    p - 2.0 * PI * ((p + PI) / (2.0 * PI)).floor()
}

/// Phase-vocoder time stretch. `rate > 1` shortens the signal; the output
/// has exactly `round(len / rate)` samples and the same pitch.
pub fn time_stretch(wave: &[f64], rate: f64) -> Result<Vec<f64>> {
    if !(rate > 0.0) || !rate.is_finite() {
        return Err(Error::Argument(format!(
            "stretch rate must be > 0, got {rate}"
        )));
    }
    if wave.is_empty() {
        return Err(Error::Argument("empty waveform".into()));
    }
    let n = PV_WINDOW;
    let hs = PV_HOP;
    let half = n / 2;
    let out_len = ((wave.len() as f64 / rate).round() as usize).max(1);
    let frames = out_len.div_ceil(hs) + 2;

    // input padded by half a window on the left so frame k is centred on sample k * ha
    let last_pos = ((frames - 1) as f64 * hs as f64 * rate).round() as usize;
    let mut padded = vec![0.0; half];
    padded.extend_from_slice(wave);
    padded.resize((last_pos + n).max(padded.len()), 0.0);

    let window = hann(n);
    let mut planner = FftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(n);
    let ifft = planner.plan_fft_inverse(n);

    let bins = n / 2 + 1;
    let omega: Vec<f64> = (0..bins).map(|b| 2.0 * PI * b as f64 / n as f64).collect();
    let mut prev_phase = vec![0.0; bins];
    let mut acc_phase = vec![0.0; bins];
    let mut out = vec![0.0; (frames - 1) * hs + n];
    let mut norm = vec![0.0; out.len()];
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    let mut prev_pos = 0usize;

    for k in 0..frames {
        let pos = (k as f64 * hs as f64 * rate).round() as usize;
        for i in 0..n {
            buf[i] = Complex64::new(padded[pos + i] * window[i], 0.0);
        }
        fft.process(&mut buf);
        for b in 0..bins {
            let phase = buf[b].arg();
            if k == 0 {
                acc_phase[b] = phase;
            } else {
                let dpos = (pos - prev_pos) as f64;
                let inst = if dpos > 0.0 {
                    omega[b] + wrap_phase(phase - prev_phase[b] - omega[b] * dpos) / dpos
                } else {
                    omega[b]
                };
                acc_phase[b] += inst * hs as f64;
            }
            prev_phase[b] = phase;
            buf[b] = Complex64::from_polar(buf[b].norm(), acc_phase[b]);
        }
        for b in 1..(n - bins + 1) {
            buf[n - b] = buf[b].conj();
        }
        ifft.process(&mut buf);
        let off = k * hs;
        for i in 0..n {
            out[off + i] += buf[i].re / n as f64 * window[i];
            norm[off + i] += window[i] * window[i];
        }
        prev_pos = pos;
    }
    Ok((0..out_len)
        .map(|j| {
            let w = norm[j + half];
            if w > 1e-8 {
                out[j + half] / w
            } else {
                0.0
            }
        })
        .collect())
}

/// Change speaking rate by factor `f_t` (> 1 is faster), preserving pitch.
pub fn change_speed(wave: &[f64], f_t: f64) -> Result<Vec<f64>> {
    if !(f_t > 0.0) {
        return Err(Error::Argument(format!(
            "speed factor must be > 0, got {f_t}"
        )));
    }
    time_stretch(wave, f_t)
}

/// Shift pitch by `cents`, preserving duration: stretch by the pitch ratio,
/// then resample back to the original length.
pub fn shift_pitch(wave: &[f64], cents: f64) -> Result<Vec<f64>> {
    if wave.is_empty() {
        return Err(Error::Argument("empty waveform".into()));
    }
    if !cents.is_finite() {
        return Err(Error::Argument("non-finite pitch shift".into()));
    }
    if cents == 0.0 {
        return Ok(wave.to_vec());
    }
    let ratio = 2f64.powf(cents / 1200.0);
    let stretched = time_stretch(wave, 1.0 / ratio)?;
    Ok(resample_to_len(&stretched, 1.0 / ratio, wave.len()))
}

/// Draw `(f_t, f_p)` uniformly from `[1 - F_t, 1 + F_t]` and `[-F_p, F_p]`.
pub fn sample_augmentation<R: Rng + ?Sized>(cfg: &AugmentConfig, rng: &mut R) -> (f64, f64) {
    let f_t = if cfg.f_t == 0.0 {
        1.0
    } else {
        rng.random_range((1.0 - cfg.f_t)..=(1.0 + cfg.f_t))
    };
    let f_p = if cfg.f_p == 0.0 {
        0.0
    } else {
        rng.random_range(-cfg.f_p..=cfg.f_p)
    };
    (f_t, f_p)
}

/// Speed change followed by pitch shift with freshly sampled parameters.
/// The MOS label of the utterance is unchanged.
pub fn augment<R: Rng + ?Sized>(
    wave: &[f64],
    cfg: &AugmentConfig,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if !cfg.enabled {
        return Err(Error::Config("augmentation is disabled".into()));
    }
    let (f_t, f_p) = sample_augmentation(cfg, rng);
    shift_pitch(&change_speed(wave, f_t)?, f_p)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tone(freq: f64, n: usize) -> Vec<f64> {
        (0..n)
            .map(|i| 0.5 * (2.0 * PI * freq * i as f64 / 16_000.0).sin())
            .collect()
    }

    fn rms(x: &[f64]) -> f64 {
        (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
    }

    #[test]
    fn speed_duration_examples() {
        let w = tone(300.0, 16_000);
        assert_eq!(change_speed(&w, 1.25).unwrap().len(), 12_800);
        assert!(change_speed(&w, 0.0).is_err());
        assert!(change_speed(&w, -1.0).is_err());
    }

    #[test]
    fn unit_rate_is_near_identity() {
        let w = tone(440.0, 16_000);
        let out = change_speed(&w, 1.0).unwrap();
        assert_eq!(out.len(), w.len());
        let diff: Vec<f64> = out.iter().zip(&w).map(|(a, b)| a - b).collect();
        assert!(rms(&diff) < 0.01 * rms(&w), "residual {}", rms(&diff));
        assert!((rms(&out) - rms(&w)).abs() < 0.01 * rms(&w));
    }

    #[test]
    fn zero_cents_is_identity() {
        let w = tone(440.0, 4000);
        assert_eq!(shift_pitch(&w, 0.0).unwrap(), w);
    }

    #[test]
    fn degenerate_ranges() {
        let mut rng = crate::seed::rng_for(1, "t");
        let cfg = AugmentConfig {
            f_t: 0.0,
            f_p: 0.0,
            ..Default::default()
        };
        for _ in 0..10 {
            assert_eq!(sample_augmentation(&cfg, &mut rng), (1.0, 0.0));
        }
    }

    #[test]
    fn disabled_config_refuses() {
        let mut rng = crate::seed::rng_for(1, "t");
        assert!(augment(&tone(100.0, 2000), &AugmentConfig::disabled(), &mut rng).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(AugmentConfig::default().validate().is_ok());
        assert!(AugmentConfig {
            f_t: 1.0,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(AugmentConfig {
            f_p: -1.0,
            ..Default::default()
        }
        .validate()
        .is_err());
    }
}
