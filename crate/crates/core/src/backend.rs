//! Frame-level feature backends.
//!
//! A backend turns a prepared 16 kHz waveform into a `T x D` matrix of
//! frame features. Pretrained speech encoders plug in by implementing
//! [`FeatureBackend`] and registering with a [`BackendRegistry`]; the crate
//! itself ships [`ToyBackend`], a fixed random projection of log mel-band
//! energies that needs no model weights.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par::Exec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameFeatures {
    pub utterance_id: String,
    pub backend_id: String,
    /// `frames[t]` is the feature vector of frame `t`.
    pub frames: Vec<Vec<f64>>,
}

impl FrameFeatures {
    pub fn n_frames(&self) -> usize {
        self.frames.len()
    }

    pub fn dim(&self) -> usize {
        self.frames.first().map_or(0, Vec::len)
    }
}

pub trait FeatureBackend: Send + Sync {
    fn id(&self) -> &str;
    fn dim(&self) -> usize;
    /// Frame features of a prepared waveform; at least one frame.
    fn extract(&self, wave: &[f64]) -> Result<Vec<Vec<f64>>>;

    fn extract_features(&self, utterance_id: &str, wave: &[f64]) -> Result<FrameFeatures> {
        Ok(FrameFeatures {
            utterance_id: utterance_id.to_string(),
            backend_id: self.id().to_string(),
            frames: self.extract(wave)?,
        })
    }
}

/// Extract features for many utterances, in input order.
pub fn extract_batch(
    backend: &dyn FeatureBackend,
    items: &[(String, Vec<f64>)],
    exec: Exec,
) -> Result<Vec<FrameFeatures>> {
    exec.try_map(items, |(id, wave)| backend.extract_features(id, wave))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToyBackendConfig {
    pub dim: usize,
    pub seed: u64,
    pub n_bands: usize,
}

impl Default for ToyBackendConfig {
    fn default() -> Self {
        Self {
            dim: 64,
            seed: 0,
            n_bands: 32,
        }
    }
}

/// Log mel-band energies (25 ms Hann window, 20 ms hop) mapped through a
/// fixed seeded random projection and `tanh`.
#[derive(Debug, Clone)]
pub struct ToyBackend {
    id: String,
    cfg: ToyBackendConfig,
    projection: Vec<Vec<f64>>,
    bias: Vec<f64>,
    band_edges: Vec<usize>,
    window: Vec<f64>,
}

pub const SAMPLE_RATE: usize = 16_000;
pub const HOP: usize = 320;
const WIN: usize = 400;
const N_FFT: usize = 512;

fn mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

fn inv_mel(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

impl ToyBackend {
    pub fn new(id: impl Into<String>, cfg: ToyBackendConfig) -> Result<Self> {
        if cfg.dim == 0 || cfg.n_bands == 0 || cfg.n_bands > N_FFT / 2 {
            return Err(Error::Config(format!("invalid toy backend shape {cfg:?}")));
        }
        let mut rng = crate::seed::rng_for(cfg.seed, "backend/toy");
        let scale = 2.0 / (cfg.n_bands as f64).sqrt();
        let projection = (0..cfg.dim)
            .map(|_| {
                (0..cfg.n_bands)
                    .map(|_| {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        scale * z
                    })
                    .collect()
            })
            .collect();
        let bias = (0..cfg.dim).map(|_| rng.random_range(-0.5..0.5)).collect();

        // mel-spaced bin edges, each band at least one bin wide
        let bins = N_FFT / 2 + 1;
        let (lo, hi) = (mel(0.0), mel(SAMPLE_RATE as f64 / 2.0));
        let mut band_edges = vec![1usize];
        for b in 1..=cfg.n_bands {
            let f = inv_mel(lo + (hi - lo) * b as f64 / cfg.n_bands as f64);
            let bin = (f / SAMPLE_RATE as f64 * N_FFT as f64).round() as usize;
            let prev = *band_edges.last().unwrap();
            let remaining = cfg.n_bands - b;
            band_edges.push(bin.max(prev + 1).min(bins - remaining));
        }
        let window = (0..WIN)
            .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / WIN as f64).cos())
            .collect();
        Ok(Self {
            id: id.into(),
            cfg,
            projection,
            bias,
            band_edges,
            window,
        })
    }

    pub fn config(&self) -> &ToyBackendConfig {
        &self.cfg
    }

    /// Number of frames produced for `n` samples.
    pub fn n_frames(n: usize) -> usize {
        (n / HOP).max(1)
    }

    fn log_bands(&self, wave: &[f64], fft: &dyn rustfft::Fft<f64>) -> Vec<Vec<f64>> {
        let t = Self::n_frames(wave.len());
        let mut buf = vec![Complex64::new(0.0, 0.0); N_FFT];
        (0..t)
            .map(|k| {
                let centre = k * HOP + HOP / 2;
                buf.iter_mut().for_each(|c| *c = Complex64::new(0.0, 0.0));
                for i in 0..WIN {
                    let idx = centre as isize + i as isize - (WIN / 2) as isize;
                    if idx >= 0 && (idx as usize) < wave.len() {
                        buf[i].re = wave[idx as usize] * self.window[i];
                    }
                }
                fft.process(&mut buf);
                self.band_edges
                    .windows(2)
                    .map(|e| {
                        let p: f64 = buf[e[0]..e[1]].iter().map(|c| c.norm_sqr()).sum::<f64>()
                            / (e[1] - e[0]) as f64;
                        (p + 1e-10).ln() / 10.0
                    })
                    .collect()
            })
            .collect()
    }
}

impl FeatureBackend for ToyBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn dim(&self) -> usize {
        self.cfg.dim
    }

    fn extract(&self, wave: &[f64]) -> Result<Vec<Vec<f64>>> {
        if wave.is_empty() {
            return Err(Error::Argument("empty waveform".into()));
        }
        let fft = FftPlanner::<f64>::new().plan_fft_forward(N_FFT);
        let bands = self.log_bands(wave, fft.as_ref());
        Ok(bands
            .iter()
            .map(|v| {
                self.projection
                    .iter()
                    .zip(&self.bias)
                    .map(|(row, b)| (row.iter().zip(v).map(|(w, x)| w * x).sum::<f64>() + b).tanh())
                    .collect()
            })
            .collect())
    }
}

/// How a backend id is resolved.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BackendSpec {
    Toy {
        id: String,
        #[serde(default)]
        dim: Option<usize>,
        #[serde(default)]
        seed: Option<u64>,
    },
    /// A pretrained encoder supplied by the embedding application through
    /// [`BackendRegistry::register`].
    External { id: String },
}

impl BackendSpec {
    pub fn id(&self) -> &str {
        match self {
            BackendSpec::Toy { id, .. } | BackendSpec::External { id } => id,
        }
    }

    pub fn toy(id: impl Into<String>, dim: usize, seed: u64) -> Self {
        BackendSpec::Toy {
            id: id.into(),
            dim: Some(dim),
            seed: Some(seed),
        }
    }
}

/// Named backends available to a run.
#[derive(Clone, Default)]
pub struct BackendRegistry {
    backends: BTreeMap<String, Arc<dyn FeatureBackend>>,
}

impl BackendRegistry {
    pub fn register(&mut self, backend: Arc<dyn FeatureBackend>) {
        self.backends.insert(backend.id().to_string(), backend);
    }

    pub fn from_specs(specs: &[BackendSpec]) -> Result<Self> {
        let mut reg = Self::default();
        for s in specs {
            if let BackendSpec::Toy { id, dim, seed } = s {
                let cfg = ToyBackendConfig {
                    dim: dim.unwrap_or(64),
                    seed: seed.unwrap_or(0),
                    ..Default::default()
                };
                reg.register(Arc::new(ToyBackend::new(id.clone(), cfg)?));
            }
        }
        Ok(reg)
    }

    pub fn get(&self, id: &str) -> Result<Arc<dyn FeatureBackend>> {
        self.backends
            .get(id)
            .cloned()
            .ok_or_else(|| Error::Config(format!("feature backend {id:?} is not available")))
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.backends.keys().map(String::as_str)
    }
}
