use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::LossConfig;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhonemeEncoderConfig {
    pub enabled: bool,
    pub layers: usize,
    pub hidden: usize,
    pub bidirectional: bool,
    /// Size of the phoneme symbol embedding fed to the encoder.
    pub emb_dim: usize,
}

impl Default for PhonemeEncoderConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            layers: 3,
            hidden: 256,
            bidirectional: true,
            emb_dim: 256,
        }
    }
}

impl PhonemeEncoderConfig {
    /// Length of the context vector: two states per sequence, two sequences.
    pub fn context_dim(&self) -> usize {
        if self.enabled {
            2 * 2 * self.hidden
        } else {
            0
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HeadConfig {
    /// Bidirectional recurrent layers on top of the concatenated input.
    pub layers: usize,
    pub hidden: usize,
}

impl Default for HeadConfig {
    fn default() -> Self {
        Self {
            layers: 1,
            hidden: 256,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub peak_lr: f64,
    pub warmup_steps: usize,
    /// Number of optimizer updates.
    pub total_steps: usize,
    pub batch_size: usize,
    /// Micro-batches accumulated per optimizer update.
    pub grad_accum: usize,
    /// Global gradient-norm clip; 0 disables clipping.
    pub grad_clip_norm: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            adam_beta1: 0.9,
            adam_beta2: 0.99,
            peak_lr: 3e-5,
            warmup_steps: 4000,
            total_steps: 15_000,
            batch_size: 12,
            grad_accum: 2,
            grad_clip_norm: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StrongConfig {
    /// 0 drops listener conditioning.
    pub listener_emb_dim: usize,
    /// 0 drops domain conditioning.
    pub domain_emb_dim: usize,
    pub phoneme_encoder: PhonemeEncoderConfig,
    pub head: HeadConfig,
    pub loss: LossConfig,
    pub optimizer: OptimizerConfig,
    /// Mean-listener examples per utterance per epoch.
    pub mean_listener_copies: usize,
    /// Dev evaluation cadence in optimizer steps.
    pub eval_every: usize,
}

impl Default for StrongConfig {
    fn default() -> Self {
        Self {
            listener_emb_dim: 128,
            domain_emb_dim: 128,
            phoneme_encoder: PhonemeEncoderConfig::default(),
            head: HeadConfig::default(),
            loss: LossConfig::default(),
            optimizer: OptimizerConfig::default(),
            mean_listener_copies: 1,
            eval_every: 500,
        }
    }
}

impl StrongConfig {
    /// Small model used with the toy backend.
    pub fn toy() -> Self {
        Self {
            listener_emb_dim: 8,
            domain_emb_dim: 4,
            phoneme_encoder: PhonemeEncoderConfig {
                enabled: true,
                layers: 1,
                hidden: 8,
                bidirectional: true,
                emb_dim: 8,
            },
            head: HeadConfig {
                layers: 1,
                hidden: 16,
            },
            optimizer: OptimizerConfig {
                peak_lr: 1e-3,
                warmup_steps: 100,
                total_steps: 1000,
                ..OptimizerConfig::default()
            },
            eval_every: 100,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.loss.validate()?;
        let o = &self.optimizer;
        if o.warmup_steps >= o.total_steps {
            return Err(Error::Config(format!(
                "optimizer.warmup_steps ({}) must be < optimizer.total_steps ({})",
                o.warmup_steps, o.total_steps
            )));
        }
        if o.batch_size < 2 {
            return Err(Error::Config("optimizer.batch_size must be >= 2".into()));
        }
        if o.grad_accum == 0 || self.eval_every == 0 {
            return Err(Error::Config(
                "optimizer.grad_accum and eval_every must be >= 1".into(),
            ));
        }
        if !(o.peak_lr > 0.0) || !o.peak_lr.is_finite() {
            return Err(Error::Config(format!(
                "optimizer.peak_lr must be > 0, got {}",
                o.peak_lr
            )));
        }
        if !(0.0..1.0).contains(&o.adam_beta1) || !(0.0..1.0).contains(&o.adam_beta2) {
            return Err(Error::Config("adam betas must lie in [0, 1)".into()));
        }
        if !(o.grad_clip_norm >= 0.0) {
            return Err(Error::Config(
                "optimizer.grad_clip_norm must be >= 0".into(),
            ));
        }
        if self.head.layers == 0 || self.head.hidden == 0 {
            return Err(Error::Config(
                "head needs at least one layer with hidden > 0".into(),
            ));
        }
        let pe = &self.phoneme_encoder;
        if pe.enabled && (pe.layers == 0 || pe.hidden == 0 || pe.emb_dim == 0) {
            return Err(Error::Config(
                "enabled phoneme_encoder needs layers, hidden and emb_dim > 0".into(),
            ));
        }
        Ok(())
    }
}

/// Linear warmup to `peak_lr`, then linear decay to zero at `total_steps`.
pub fn lr_schedule(step: usize, cfg: &OptimizerConfig) -> f64 {
    let (w, t) = (cfg.warmup_steps as f64, cfg.total_steps as f64);
    let s = (step.min(cfg.total_steps)) as f64;
    if s <= w {
        if w == 0.0 {
            cfg.peak_lr
        } else {
            cfg.peak_lr * s / w
        }
    } else {
        cfg.peak_lr * (t - s) / (t - w)
    }
}
