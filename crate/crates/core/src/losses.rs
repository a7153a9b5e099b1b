//! Compound BCE + soft Dice training loss.

use serde::{Deserialize, Serialize};

use crate::decoder::sigmoid;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    /// Dice smoothing constant.
    pub epsilon: f64,
    /// Probabilities are clamped to `[clip, 1 − clip]` inside the BCE term.
    pub probability_clip: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self { epsilon: 1e-6, probability_clip: 1e-7 }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::config(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        if !(self.probability_clip > 0.0 && self.probability_clip < 0.5) {
            return Err(Error::config(format!("probability_clip must lie in (0, 0.5), got {}", self.probability_clip)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub bce: f64,
    pub dice: f64,
    pub total: f64,
}

fn check_lengths(y: &[f64], yhat: &[f64]) -> Result<()> {
    if y.len() != yhat.len() {
        return Err(Error::shape(format!("targets have {} entries, predictions {}", y.len(), yhat.len())));
    }
    if y.is_empty() {
        return Err(Error::shape("loss over zero pixels"));
    }
    Ok(())
}

/// `−(1/N) Σ [y log ŷ + (1 − y) log(1 − ŷ)]` with ŷ clipped.
pub fn bce_loss(y: &[f64], yhat: &[f64], cfg: &LossConfig) -> Result<f64> {
    check_lengths(y, yhat)?;
    let clip = cfg.probability_clip;
    let sum: f64 = y
        .iter()
        .zip(yhat)
        .map(|(&t, &p)| {
            let p = p.clamp(clip, 1.0 - clip);
            t * p.ln() + (1.0 - t) * (1.0 - p).ln()
        })
        .sum();
    Ok(-sum / y.len() as f64)
}

/// `1 − (2 Σ y ŷ + ε) / (Σ y + Σ ŷ + ε)` on soft predictions.
pub fn dice_loss(y: &[f64], yhat: &[f64], cfg: &LossConfig) -> Result<f64> {
    check_lengths(y, yhat)?;
    let (inter, total) = dice_sums(y, yhat);
    Ok(1.0 - (2.0 * inter + cfg.epsilon) / (total + cfg.epsilon))
}

fn dice_sums(y: &[f64], yhat: &[f64]) -> (f64, f64) {
    y.iter().zip(yhat).fold((0.0, 0.0), |(i, s), (&t, &p)| (i + t * p, s + t + p))
}

pub fn total_loss(y: &[f64], yhat: &[f64], cfg: &LossConfig) -> Result<f64> {
    Ok(bce_loss(y, yhat, cfg)? + dice_loss(y, yhat, cfg)?)
}

/// Loss components and the gradient of the total with respect to `yhat`.
pub fn total_loss_grad(y: &[f64], yhat: &[f64], cfg: &LossConfig) -> Result<(LossBreakdown, Vec<f64>)> {
    let bce = bce_loss(y, yhat, cfg)?;
    let dice = dice_loss(y, yhat, cfg)?;
    let n = y.len() as f64;
    let clip = cfg.probability_clip;
    let (inter, total) = dice_sums(y, yhat);
    let num = 2.0 * inter + cfg.epsilon;
    let den = total + cfg.epsilon;
    let grad = y
        .iter()
        .zip(yhat)
        .map(|(&t, &p)| {
            let g_bce = if p < clip || p > 1.0 - clip { 0.0 } else { -(t / p - (1.0 - t) / (1.0 - p)) / n };
            let g_dice = -(2.0 * t * den - num) / (den * den);
            g_bce + g_dice
        })
        .collect();
    Ok((LossBreakdown { bce, dice, total: bce + dice }, grad))
}

/// Applies the sigmoid to `logits`, evaluates the compound loss and returns
/// the gradient with respect to the logits.
pub fn loss_from_logits(y: &[f64], logits: &[f64], cfg: &LossConfig) -> Result<(LossBreakdown, Vec<f64>)> {
    let probs: Vec<f64> = logits.iter().map(|&z| sigmoid(z)).collect();
    let (loss, dprob) = total_loss_grad(y, &probs, cfg)?;
    let dlogits = dprob.iter().zip(&probs).map(|(g, p)| g * p * (1.0 - p)).collect();
    Ok((loss, dlogits))
}
