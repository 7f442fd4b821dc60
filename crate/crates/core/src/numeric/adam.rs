use serde::{Deserialize, Serialize};

use super::{Grads, Group, ParamId, ParamStore, Scalar, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Learning rate per parameter group. A group without a rate may not hold
/// trainable parameters when a step is taken.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct GroupRates {
    pub base: Option<f64>,
    pub adapter: Option<f64>,
    pub routing: Option<f64>,
}

impl GroupRates {
    pub fn get(&self, group: Group) -> Option<f64> {
        match group {
            Group::Base => self.base,
            Group::Adapter => self.adapter,
            Group::Routing => self.routing,
        }
    }
}

/// Adam with bias correction. Moment buffers and step counts are kept per
/// parameter, so sparse updates (one routing row at a time) only advance the
/// rows they touch.
#[derive(Debug, Clone)]
pub struct Adam<T> {
    config: AdamConfig,
    first: Vec<Tensor<T>>,
    second: Vec<Tensor<T>>,
    steps: Vec<u64>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(store: &ParamStore<T>, config: AdamConfig) -> Self {
        let zeros = || store.iter().map(|p| Tensor::zeros(p.value.shape())).collect();
        Self {
            config,
            first: zeros(),
            second: zeros(),
            steps: vec![0; store.len()],
        }
    }

    /// Number of updates applied to `id` so far.
    pub fn steps(&self, id: ParamId) -> u64 {
        self.steps[id.index()]
    }

    /// Updates every trainable parameter.
    pub fn step(&mut self, store: &mut ParamStore<T>, grads: &Grads<T>, rates: &GroupRates) -> Result<()> {
        let ids: Vec<ParamId> = store.ids().collect();
        self.step_params(store, grads, rates, &ids)
    }

    /// Updates the trainable parameters among `ids`; others keep their
    /// values and moments.
    pub fn step_params(
        &mut self,
        store: &mut ParamStore<T>,
        grads: &Grads<T>,
        rates: &GroupRates,
        ids: &[ParamId],
    ) -> Result<()> {
        if grads.len() != store.len() || self.first.len() != store.len() {
            return Err(Error::dim("adam_step", &[store.len()], &[grads.len()]));
        }
        for &id in ids {
            let p = store.param(id);
            if p.trainable && rates.get(p.group).is_none() {
                return Err(Error::Config(format!(
                    "no learning rate for group `{}` (parameter `{}`)",
                    p.group, p.name
                )));
            }
        }
        let c = self.config;
        let (b1, b2, eps) = (T::of(c.beta1), T::of(c.beta2), T::of(c.epsilon));
        for &id in ids {
            let param = store.param_mut(id);
            if !param.trainable {
                continue;
            }
            self.steps[id.index()] += 1;
            let t = self.steps[id.index()] as i32;
            let correct1 = 1.0 - c.beta1.powi(t);
            let correct2 = 1.0 - c.beta2.powi(t);
            let lr = rates.get(param.group).expect("checked above");
            let step_size = T::of(lr / correct1);
            let inv_c2 = T::of(1.0 / correct2);
            let g = grads.get(id).data();
            let m = self.first[id.index()].data_mut();
            let v = self.second[id.index()].data_mut();
            for (((w, &gi), mi), vi) in param.value.data_mut().iter_mut().zip(g).zip(m).zip(v) {
                *mi = b1 * *mi + (T::one() - b1) * gi;
                *vi = b2 * *vi + (T::one() - b2) * gi * gi;
                *w -= step_size * *mi / ((*vi * inv_c2).sqrt() + eps);
            }
        }
        Ok(())
    }
}
