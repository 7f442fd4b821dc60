use rand::Rng;

use super::ConditionedPolicy;
use crate::error::{Error, Result};
use crate::game::{encode_into, Action, ActionSet, GameState, Policy, FEATURES, NUM_ACTIONS};
use crate::numeric::{Scalar, Tensor};
use crate::rng::StreamRng;

/// Index of the largest logit among `legal`, lowest index on ties.
pub fn masked_argmax<T: Scalar>(logits: &[T], legal: ActionSet) -> usize {
    let mut best = 0;
    let mut best_v = T::neg_infinity();
    for a in legal.iter() {
        let v = logits[a.index()];
        if v > best_v {
            best = a.index();
            best_v = v;
        }
    }
    best
}

/// Samples from `softmax(logits / temperature)` restricted to `legal`.
/// Temperatures below `1e-4` fall back to the masked argmax.
pub fn sample_action<T: Scalar, R: Rng + ?Sized>(
    logits: &[T],
    legal: ActionSet,
    temperature: f64,
    rng: &mut R,
) -> usize {
    if temperature < 1e-4 {
        return masked_argmax(logits, legal);
    }
    sample_action_at(logits, legal, temperature, rng.random::<f64>())
}

/// Inverse-CDF draw from the tempered legal softmax at `u` in `[0, 1)`.
/// Legal actions are visited in index order, so nearby distributions map
/// the same `u` to the same action as often as possible.
pub fn sample_action_at<T: Scalar>(logits: &[T], legal: ActionSet, temperature: f64, u: f64) -> usize {
    let max = legal
        .iter()
        .map(|a| logits[a.index()].as_f64())
        .fold(f64::NEG_INFINITY, f64::max);
    let mut w = [0.0; NUM_ACTIONS];
    let mut total = 0.0;
    for a in legal.iter() {
        w[a.index()] = ((logits[a.index()].as_f64() - max) / temperature).exp();
        total += w[a.index()];
    }
    let mut u = u * total;
    let mut last = 0;
    for a in legal.iter() {
        last = a.index();
        u -= w[last];
        if u < 0.0 {
            return last;
        }
    }
    last
}

/// Fraction of rows whose masked argmax equals the recorded label.
/// `legal[i]` is in the same (mover-relative) frame as the logits.
pub fn move_matching_accuracy<T: Scalar>(logits: &Tensor<T>, labels: &[usize], legal: &[ActionSet]) -> Result<f64> {
    if labels.is_empty() {
        return Err(Error::Argument("accuracy over an empty partition".into()));
    }
    if logits.shape().len() != 2 || logits.rows() != labels.len() || legal.len() != labels.len() {
        return Err(Error::dim(
            "move_matching_accuracy",
            logits.shape(),
            &[labels.len(), legal.len()],
        ));
    }
    let hits = labels
        .iter()
        .enumerate()
        .filter(|&(i, &y)| masked_argmax(logits.row(i), legal[i]) == y)
        .count();
    Ok(hits as f64 / labels.len() as f64)
}

/// Plays a conditioned network: encodes the state from the mover's view,
/// samples a legal mover-relative action, and maps it back to the board.
pub struct NetPolicy<'a> {
    pub policy: &'a ConditionedPolicy<f32>,
    pub temperature: f64,
}

impl Policy for NetPolicy<'_> {
    fn act(&self, state: &GameState, rng: &mut StreamRng) -> Result<Action> {
        let side = state.to_move;
        let mut x = [0.0f32; FEATURES];
        encode_into(state, side, &mut x);
        let logits = self.policy.logits(&x);
        let legal = state.legal_actions()?.relative_to(side);
        let idx = sample_action(&logits, legal, self.temperature, rng);
        let rel = Action::from_index(idx).expect("index below NUM_ACTIONS");
        Ok(rel.relative_to(side))
    }
}
