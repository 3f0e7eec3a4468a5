//! Training losses: pairwise contrastive margin loss on score differences,
//! clipped squared error, and their weighted sum.
//!
//! All losses work in the normalized [-1, 1] score space.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossConfig {
    /// Margin below which score-difference errors are ignored.
    pub alpha: f64,
    /// Absolute errors at or below `tau` do not contribute to the regression term.
    pub tau: f64,
    /// Weight of the clipped regression term.
    pub beta: f64,
    /// Weight of the contrastive term.
    pub gamma: f64,
    /// Whether contrastive pairs may mix utterances from different domains.
    pub cross_domain_pairs: bool,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            tau: 0.25,
            beta: 1.0,
            gamma: 0.5,
            cross_domain_pairs: true,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("alpha", self.alpha),
            ("tau", self.tau),
            ("beta", self.beta),
            ("gamma", self.gamma),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::Config(format!(
                    "loss.{name} must be finite and >= 0, got {v}"
                )));
            }
        }
        if self.beta == 0.0 && self.gamma == 0.0 {
            return Err(Error::Config(
                "loss.beta and loss.gamma cannot both be zero".into(),
            ));
        }
        Ok(())
    }
}

/// `max(0, |(s1 - s2) - (p1 - p2)| - alpha)`.
pub fn contrastive_pair(s1: f64, s2: f64, p1: f64, p2: f64, alpha: f64) -> f64 {
    (((s1 - s2) - (p1 - p2)).abs() - alpha).max(0.0)
}

fn check_batch(scores: &[f64], preds: &[f64]) -> Result<()> {
    if scores.len() != preds.len() {
        return Err(Error::Argument(format!(
            "{} scores vs {} predictions",
            scores.len(),
            preds.len()
        )));
    }
    if scores.len() < 2 {
        return Err(Error::Argument(
            "contrastive loss needs at least two utterances".into(),
        ));
    }
    Ok(())
}

/// Sum of [`contrastive_pair`] over all ordered pairs `i != j`.
pub fn contrastive_batch(scores: &[f64], preds: &[f64], alpha: f64) -> Result<f64> {
    contrastive_batch_grouped(scores, preds, None, alpha).map(|(l, _)| l)
}

/// Contrastive loss and its gradient with respect to `preds`.
///
/// With `groups`, only pairs sharing a group label contribute. A hinge
/// exactly at the margin has subgradient zero.
pub fn contrastive_batch_grouped(
    scores: &[f64],
    preds: &[f64],
    groups: Option<&[usize]>,
    alpha: f64,
) -> Result<(f64, Vec<f64>)> {
    check_batch(scores, preds)?;
    let n = scores.len();
    let mut loss = 0.0;
    let mut grad = vec![0.0; n];
    for i in 0..n {
        for j in (i + 1)..n {
            if let Some(g) = groups {
                if g[i] != g[j] {
                    continue;
                }
            }
            let r = (scores[i] - scores[j]) - (preds[i] - preds[j]);
            let l = r.abs() - alpha;
            if l > 0.0 {
                // (i, j) and (j, i) contribute equally
                loss += 2.0 * l;
                let s = r.signum();
                grad[i] -= 2.0 * s;
                grad[j] += 2.0 * s;
            }
        }
    }
    Ok((loss, grad))
}

/// `1(|y - yhat| > tau) * (y - yhat)^2`.
pub fn clipped_mse(y: f64, yhat: f64, tau: f64) -> f64 {
    let e = y - yhat;
    if e.abs() > tau {
        e * e
    } else {
        0.0
    }
}

/// Derivative of [`clipped_mse`] with respect to `yhat`.
pub fn clipped_mse_grad(y: f64, yhat: f64, tau: f64) -> f64 {
    let e = y - yhat;
    if e.abs() > tau {
        -2.0 * e
    } else {
        0.0
    }
}

/// Utterance-level combined loss: `beta * mean clipped MSE + gamma * contrastive`.
pub fn combined_loss(scores: &[f64], preds: &[f64], cfg: &LossConfig) -> Result<f64> {
    combined_loss_grad(scores, preds, cfg).map(|(l, _)| l)
}

pub fn combined_loss_grad(
    scores: &[f64],
    preds: &[f64],
    cfg: &LossConfig,
) -> Result<(f64, Vec<f64>)> {
    check_batch(scores, preds)?;
    let w = 1.0 / scores.len() as f64;
    let mut reg = 0.0;
    let mut grad = vec![0.0; scores.len()];
    if cfg.beta != 0.0 {
        for (k, (&y, &p)) in scores.iter().zip(preds).enumerate() {
            reg += w * clipped_mse(y, p, cfg.tau);
            grad[k] += cfg.beta * w * clipped_mse_grad(y, p, cfg.tau);
        }
    }
    let mut con = 0.0;
    if cfg.gamma != 0.0 {
        let (l, g) = contrastive_batch_grouped(scores, preds, None, cfg.alpha)?;
        con = l;
        for (a, b) in grad.iter_mut().zip(g) {
            *a += cfg.gamma * b;
        }
    }
    Ok((cfg.beta * reg + cfg.gamma * con, grad))
}

/// Running mean; a constant sequence yields exactly that constant.
fn running_mean(xs: impl Iterator<Item = f64>) -> f64 {
    let mut m = 0.0;
    for (k, x) in xs.enumerate() {
        m += (x - m) / (k + 1) as f64;
    }
    m
}

/// Frame-level batch loss.
///
/// Each utterance's target is replicated over its frames. The regression
/// term is the batch mean of each utterance's frame-averaged clipped MSE, so
/// every utterance weighs the same whatever its length; the contrastive term
/// compares frame-averaged utterance scores. With constant frame predictions
/// the result is bit-identical to [`combined_loss`].
/// Returns the loss and the gradient with respect to every frame score.
pub fn frame_batch_loss(
    targets: &[f64],
    frame_preds: &[Vec<f64>],
    groups: Option<&[usize]>,
    cfg: &LossConfig,
) -> Result<(f64, Vec<Vec<f64>>)> {
    if targets.len() != frame_preds.len() {
        return Err(Error::Argument(
            "targets and frame predictions differ in length".into(),
        ));
    }
    if frame_preds.iter().any(Vec::is_empty) {
        return Err(Error::Argument("utterance with zero frames".into()));
    }
    let w = 1.0 / targets.len() as f64;
    let mut reg = 0.0;
    let mut grads: Vec<Vec<f64>> = frame_preds.iter().map(|f| vec![0.0; f.len()]).collect();
    if cfg.beta != 0.0 {
        for ((&y, frames), g) in targets.iter().zip(frame_preds).zip(&mut grads) {
            reg += w * running_mean(frames.iter().map(|&p| clipped_mse(y, p, cfg.tau)));
            let gw = cfg.beta * w / frames.len() as f64;
            for (&p, gi) in frames.iter().zip(g.iter_mut()) {
                *gi += gw * clipped_mse_grad(y, p, cfg.tau);
            }
        }
    }
    let mut con = 0.0;
    if cfg.gamma != 0.0 && targets.len() >= 2 {
        let utt: Vec<f64> = frame_preds
            .iter()
            .map(|f| running_mean(f.iter().copied()))
            .collect();
        let groups = if cfg.cross_domain_pairs { None } else { groups };
        let (l, g) = contrastive_batch_grouped(targets, &utt, groups, cfg.alpha)?;
        con = l;
        for ((gu, frames), gf) in g.iter().zip(frame_preds).zip(&mut grads) {
            let share = cfg.gamma * gu / frames.len() as f64;
            gf.iter_mut().for_each(|v| *v += share);
        }
    }
    Ok((cfg.beta * reg + cfg.gamma * con, grads))
}

/// Replicate an utterance-level target over `t` frames.
pub fn make_frame_targets(score: f64, t: usize) -> Vec<f64> {
    vec![score; t]
}
