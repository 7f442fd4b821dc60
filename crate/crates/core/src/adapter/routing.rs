use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{Group, Param, ParamStore, Scalar, Tensor};

/// Stable player identifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PlayerId(pub u32);

impl fmt::Display for PlayerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "p{:04}", self.0)
    }
}

/// One player's routing logits over `modules × heads`, row-major with the
/// head index varying fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct StyleVector<T = f32> {
    pub logits: Tensor<T>,
    pub player: Option<PlayerId>,
}

impl<T: Scalar> StyleVector<T> {
    pub fn new(logits: Tensor<T>, player: Option<PlayerId>) -> Result<Self> {
        if logits.shape().len() != 2 {
            return Err(Error::dim("style_vector", logits.shape(), &[0, 0]));
        }
        if !logits.is_finite() {
            return Err(Error::Argument("style vector logits must be finite".into()));
        }
        Ok(Self { logits, player })
    }

    pub fn zeros(modules: usize, heads: usize) -> Self {
        Self {
            logits: Tensor::zeros(&[modules, heads]),
            player: None,
        }
    }

    pub fn from_flat(modules: usize, heads: usize, flat: Vec<T>) -> Result<Self> {
        Self::new(Tensor::new(vec![modules, heads], flat)?, None)
    }

    pub fn modules(&self) -> usize {
        self.logits.shape()[0]
    }

    pub fn heads(&self) -> usize {
        self.logits.shape()[1]
    }

    pub fn as_slice(&self) -> &[T] {
        self.logits.data()
    }

    pub fn cast<U: Scalar>(&self) -> StyleVector<U> {
        StyleVector {
            logits: self.logits.cast(),
            player: self.player,
        }
    }

    /// The equivalent vector with zero mean over modules in every head.
    /// Routing is a per-head softmax, so both vectors route identically.
    pub fn centered(&self) -> Self {
        let (m, h) = (self.modules(), self.heads());
        let mut out = self.clone();
        let data = out.logits.data_mut();
        for k in 0..h {
            let mean = (0..m).map(|i| data[i * h + k].as_f64()).sum::<f64>() / m as f64;
            for i in 0..m {
                data[i * h + k] = T::of(data[i * h + k].as_f64() - mean);
            }
        }
        out
    }

    pub fn with_player(mut self, player: PlayerId) -> Self {
        self.player = Some(player);
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RowInit {
    Zeros,
    Gaussian { sigma: f64 },
}

impl Default for RowInit {
    fn default() -> Self {
        RowInit::Gaussian { sigma: 0.01 }
    }
}

/// The task-routing tensor: one style vector per player, in canonical
/// player-index order. Rows live in a [`ParamStore`] under the routing group
/// so the optimizer can address them individually.
#[derive(Debug, Clone, PartialEq)]
pub struct RoutingTensor<T = f32> {
    modules: usize,
    heads: usize,
    rows: ParamStore<T>,
    players: Vec<PlayerId>,
}

impl<T: Scalar> RoutingTensor<T> {
    pub fn new(modules: usize, heads: usize) -> Self {
        Self {
            modules,
            heads,
            rows: ParamStore::new(),
            players: Vec::new(),
        }
    }

    pub fn modules(&self) -> usize {
        self.modules
    }

    pub fn heads(&self) -> usize {
        self.heads
    }

    pub fn len(&self) -> usize {
        self.players.len()
    }

    pub fn is_empty(&self) -> bool {
        self.players.is_empty()
    }

    pub fn players(&self) -> &[PlayerId] {
        &self.players
    }

    pub fn index_of(&self, player: PlayerId) -> Option<usize> {
        self.players.iter().position(|&p| p == player)
    }

    pub fn row(&self, index: usize) -> StyleVector<T> {
        StyleVector {
            logits: self.rows.value(crate::numeric::ParamId(index)).clone(),
            player: Some(self.players[index]),
        }
    }

    /// Parameter id of row `index` inside [`Self::store`].
    pub fn row_param(&self, index: usize) -> crate::numeric::ParamId {
        assert!(index < self.len(), "routing row {index} out of range");
        crate::numeric::ParamId(index)
    }

    pub fn row_for(&self, player: PlayerId) -> Result<StyleVector<T>> {
        self.index_of(player)
            .map(|i| self.row(i))
            .ok_or_else(|| Error::Argument(format!("no routing row for player {player}")))
    }

    pub fn rows(&self) -> impl Iterator<Item = StyleVector<T>> + '_ {
        (0..self.len()).map(|i| self.row(i))
    }

    /// Appends a new row and returns its index. Existing rows are untouched.
    pub fn append_row<R: Rng + ?Sized>(&mut self, player: PlayerId, init: RowInit, rng: &mut R) -> usize {
        let logits = match init {
            RowInit::Zeros => Tensor::zeros(&[self.modules, self.heads]),
            RowInit::Gaussian { sigma } => Tensor::randn(&[self.modules, self.heads], sigma, rng),
        };
        self.push_logits(player, logits).expect("shape derived from self")
    }

    pub fn push(&mut self, style: &StyleVector<T>, player: PlayerId) -> Result<usize> {
        self.push_logits(player, style.logits.clone())
    }

    fn push_logits(&mut self, player: PlayerId, logits: Tensor<T>) -> Result<usize> {
        if logits.shape() != [self.modules, self.heads] {
            return Err(Error::dim("routing_row", logits.shape(), &[self.modules, self.heads]));
        }
        let index = self.players.len();
        self.rows.push(Param {
            name: format!("routing/{index}"),
            value: logits,
            group: Group::Routing,
            trainable: true,
            routing_row: Some(index),
        })?;
        self.players.push(player);
        Ok(index)
    }

    pub fn set_row(&mut self, index: usize, style: &StyleVector<T>) -> Result<()> {
        let slot = self.rows.value_mut(crate::numeric::ParamId(index));
        if slot.shape() != style.logits.shape() {
            return Err(Error::dim("routing_row", slot.shape(), style.logits.shape()));
        }
        *slot = style.logits.clone();
        Ok(())
    }

    pub fn store(&self) -> &ParamStore<T> {
        &self.rows
    }

    pub fn store_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.rows
    }

    pub fn cast<U: Scalar>(&self) -> RoutingTensor<U> {
        RoutingTensor {
            modules: self.modules,
            heads: self.heads,
            rows: self.rows.cast(),
            players: self.players.clone(),
        }
    }
}
