//! Base-model training, routed-adapter fine-tuning with two-speed learning
//! rates, routing-only few-shot fitting, and per-player evaluation.

mod base;
mod eval;
mod fewshot;
mod finetune;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

pub use base::{train_base, BaseOutcome};
pub use eval::{eval_per_player, EvalTable, PlayerEval, Split};
pub use fewshot::{fewshot_fit, fewshot_fit_many, FewshotJob, FewshotOutcome};
pub use finetune::{finetune_mhr, FinetuneOutcome};

use crate::adapter::{RowInit, StyleVector};
use crate::error::{Error, Result};
use crate::game::{encode_into, ActionSet, FEATURES};
use crate::numeric::{cross_entropy_with_grad, AdamConfig, Tensor};
use crate::policy::{masked_argmax, PolicyNet};
use crate::population::Sample;
use crate::rng::StreamRng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub base_epochs: usize,
    pub finetune_epochs: usize,
    pub fewshot_epochs: usize,
    /// Epochs without validation improvement before stopping (base and
    /// fine-tuning only; few-shot fits run their full budget).
    pub patience: usize,
    pub base_lr: f64,
    pub adapter_lr: f64,
    pub routing_lr: f64,
    pub adam: AdamConfig,
    pub routing_init: RowInit,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 256,
            base_epochs: 20,
            finetune_epochs: 30,
            fewshot_epochs: 50,
            patience: 5,
            base_lr: 1e-3,
            adapter_lr: 1e-3,
            routing_lr: 1e-2,
            adam: AdamConfig::default(),
            routing_init: RowInit::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        let rates = [self.base_lr, self.adapter_lr, self.routing_lr];
        if rates.iter().any(|r| !(r.is_finite() && *r >= 0.0)) {
            return Err(Error::Config("learning rates must be finite and >= 0".into()));
        }
        Ok(())
    }
}

/// One row of a training curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub epoch: usize,
    pub split: String,
    pub loss: f64,
    pub accuracy: f64,
}

/// Encoded features, mover-relative labels, and legal masks for samples.
pub(crate) struct Batch {
    pub x: Tensor<f32>,
    pub y: Vec<usize>,
    pub legal: Vec<ActionSet>,
}

impl Batch {
    pub fn from_samples<'a>(samples: impl ExactSizeIterator<Item = &'a Sample>) -> Result<Self> {
        let n = samples.len();
        if n == 0 {
            return Err(Error::Argument("empty batch".into()));
        }
        let mut x = Tensor::zeros(&[n, FEATURES]);
        let mut y = Vec::with_capacity(n);
        let mut legal = Vec::with_capacity(n);
        for (i, s) in samples.enumerate() {
            encode_into(&s.state, s.state.to_move, x.row_mut(i));
            y.push(s.action as usize);
            legal.push(s.state.legal_actions()?.relative_to(s.state.to_move));
        }
        Ok(Self { x, y, legal })
    }
}

/// Running sums of loss and correct predictions.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct Tally {
    loss: f64,
    correct: usize,
    count: usize,
}

impl Tally {
    pub fn add(&mut self, loss: f64, logits: &Tensor<f32>, batch: &Batch) {
        let n = batch.y.len();
        self.loss += loss * n as f64;
        self.count += n;
        self.correct += (0..n)
            .filter(|&i| masked_argmax(logits.row(i), batch.legal[i]) == batch.y[i])
            .count();
    }

    pub fn loss(&self) -> f64 {
        self.loss / self.count.max(1) as f64
    }

    pub fn accuracy(&self) -> f64 {
        self.correct as f64 / self.count.max(1) as f64
    }
}

const EVAL_CHUNK: usize = 2048;

/// Mean cross-entropy and masked move-matching accuracy over `samples`.
pub(crate) fn evaluate(net: &PolicyNet<f32>, style: Option<&StyleVector<f32>>, samples: &[Sample]) -> Result<Tally> {
    let mut tally = Tally::default();
    for chunk in samples.chunks(EVAL_CHUNK) {
        let batch = Batch::from_samples(chunk.iter())?;
        let logits = net.forward(style, &batch.x)?;
        let (loss, _) = cross_entropy_with_grad(&logits, &batch.y)?;
        tally.add(loss as f64, &logits, &batch);
    }
    Ok(tally)
}

/// Shuffled index batches over `0..n`.
pub(crate) fn shuffled_batches(n: usize, batch_size: usize, rng: &mut StreamRng) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    order.chunks(batch_size).map(<[usize]>::to_vec).collect()
}

pub(crate) fn check_finite(loss: f32, stage: &str, epoch: usize) -> Result<()> {
    if !loss.is_finite() {
        return Err(Error::Divergence(format!(
            "{stage}: non-finite loss {loss} in epoch {epoch}"
        )));
    }
    Ok(())
}

/// Tracks the best validation loss for early stopping.
pub(crate) struct EarlyStop {
    patience: usize,
    best: f64,
    best_epoch: usize,
    since: usize,
}

impl EarlyStop {
    pub fn new(patience: usize) -> Self {
        Self {
            patience,
            best: f64::INFINITY,
            best_epoch: 0,
            since: 0,
        }
    }

    /// Records an epoch; returns true if it is the best so far.
    pub fn observe(&mut self, epoch: usize, val_loss: f64) -> bool {
        if val_loss < self.best {
            self.best = val_loss;
            self.best_epoch = epoch;
            self.since = 0;
            true
        } else {
            self.since += 1;
            false
        }
    }

    pub fn should_stop(&self) -> bool {
        self.patience > 0 && self.since >= self.patience
    }

    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }
}


#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn early_stopping_counts_stale_epochs() {
        let mut e = EarlyStop::new(2);
        assert!(e.observe(0, 1.0));
        assert!(!e.observe(1, 1.5));
        assert!(!e.should_stop());
        assert!(!e.observe(2, 1.0));
        assert!(e.should_stop());
        assert_eq!(e.best_epoch(), 0);
    }

    #[test]
    fn divergence_is_reported() {
        assert!(matches!(check_finite(f32::NAN, "base", 3), Err(Error::Divergence(_))));
        assert!(check_finite(1.0, "base", 3).is_ok());
    }
}
