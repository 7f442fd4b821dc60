//! Poly and multi-head mixing of an adapter inventory, with the backward
//! pass needed to train both the inventory and the routing logits.
//!
//! Mixing happens in parameter space: the mixed `Aᵗ`, `Bᵗ` are materialized
//! and then applied like a single LoRA pair.

use super::{AdapterInventory, LoraPair, StyleVector};
use crate::error::{Error, Result};
use crate::numeric::{softmax_into, Scalar, Tensor};

/// Per-head softmax over modules. `logits` and the result are `m×h`,
/// row-major.
pub(crate) fn mixing_weights<T: Scalar>(logits: &[T], modules: usize, heads: usize) -> Vec<T> {
    debug_assert_eq!(logits.len(), modules * heads);
    let mut alpha = vec![T::zero(); modules * heads];
    let mut column = vec![T::zero(); modules];
    let mut probs = vec![T::zero(); modules];
    for k in 0..heads {
        for i in 0..modules {
            column[i] = logits[i * heads + k];
        }
        softmax_into(&column, &mut probs);
        for i in 0..modules {
            alpha[i * heads + k] = probs[i];
        }
    }
    alpha
}

/// Chain rule through the per-head softmax: accumulates `∂L/∂logits` given
/// `∂L/∂α`.
pub(crate) fn mixing_weights_backward<T: Scalar>(
    alpha: &[T],
    dalpha: &[T],
    modules: usize,
    heads: usize,
    dlogits: &mut [T],
) {
    for k in 0..heads {
        let mut dot = T::zero();
        for i in 0..modules {
            dot += alpha[i * heads + k] * dalpha[i * heads + k];
        }
        for i in 0..modules {
            let j = i * heads + k;
            dlogits[j] += alpha[j] * (dalpha[j] - dot);
        }
    }
}

/// Mixes a stacked `[m, rows, r]` inventory into `out: [rows, r]`, with the
/// rows split into `heads` contiguous blocks each using its own weights.
pub(crate) fn mix_stacked<T: Scalar>(
    stacked: &[T],
    modules: usize,
    rows: usize,
    rank: usize,
    alpha: &[T],
    heads: usize,
    out: &mut [T],
) {
    debug_assert_eq!(out.len(), rows * rank);
    let block = rows / heads;
    out.iter_mut().for_each(|x| *x = T::zero());
    for i in 0..modules {
        let module = &stacked[i * rows * rank..(i + 1) * rows * rank];
        for k in 0..heads {
            let w = alpha[i * heads + k];
            let span = k * block * rank..(k + 1) * block * rank;
            for (o, &v) in out[span.clone()].iter_mut().zip(&module[span]) {
                *o += w * v;
            }
        }
    }
}

/// Backward of [`mix_stacked`]: accumulates into `dstacked` (when the
/// inventory is trainable) and `dalpha`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn mix_stacked_backward<T: Scalar>(
    stacked: &[T],
    modules: usize,
    rows: usize,
    rank: usize,
    alpha: &[T],
    heads: usize,
    dmixed: &[T],
    mut dstacked: Option<&mut [T]>,
    dalpha: &mut [T],
) {
    let block = rows / heads;
    for i in 0..modules {
        let module = &stacked[i * rows * rank..(i + 1) * rows * rank];
        for k in 0..heads {
            let span = k * block * rank..(k + 1) * block * rank;
            let mut dot = T::zero();
            for (&v, &g) in module[span.clone()].iter().zip(&dmixed[span.clone()]) {
                dot += v * g;
            }
            dalpha[i * heads + k] += dot;
            if let Some(ds) = dstacked.as_deref_mut() {
                let w = alpha[i * heads + k];
                let base = i * rows * rank;
                for (d, &g) in ds[base + span.start..base + span.end].iter_mut().zip(&dmixed[span]) {
                    *d += w * g;
                }
            }
        }
    }
}

pub(crate) fn check_heads(inventory_rows: (usize, usize), heads: usize) -> Result<()> {
    let (d_out, d_in) = inventory_rows;
    if heads == 0 || d_out % heads != 0 || d_in % heads != 0 {
        return Err(Error::Config(format!(
            "head count {heads} must divide both d_out={d_out} and d_in={d_in}"
        )));
    }
    Ok(())
}

fn mix_with_heads<T: Scalar>(inventory: &AdapterInventory<T>, logits: &[T], heads: usize) -> LoraPair<T> {
    let (m, r) = (inventory.modules(), inventory.rank());
    let alpha = mixing_weights(logits, m, heads);
    let mut a = Tensor::zeros(&[inventory.d_out(), r]);
    let mut b = Tensor::zeros(&[inventory.d_in(), r]);
    mix_stacked(inventory.a.data(), m, inventory.d_out(), r, &alpha, heads, a.data_mut());
    mix_stacked(inventory.b.data(), m, inventory.d_in(), r, &alpha, heads, b.data_mut());
    LoraPair { a, b }
}

/// Poly routing: one softmax over the `m` modules, applied to both `A` and
/// `B`.
pub fn mix_poly<T: Scalar>(inventory: &AdapterInventory<T>, logits: &Tensor<T>) -> Result<LoraPair<T>> {
    if logits.len() != inventory.modules() {
        return Err(Error::dim("mix_poly", logits.shape(), &[inventory.modules()]));
    }
    Ok(mix_with_heads(inventory, logits.data(), 1))
}

/// Multi-head routing: `A` is split along its `d_out` rows and `B` along its
/// `d_in` rows into `h` blocks; block `k` is mixed with
/// `softmax(logits[:, k])` and the blocks are concatenated back.
pub fn mix_mhr<T: Scalar>(inventory: &AdapterInventory<T>, style: &StyleVector<T>) -> Result<LoraPair<T>> {
    if style.modules() != inventory.modules() {
        return Err(Error::dim(
            "mix_mhr",
            style.logits.shape(),
            &[inventory.modules(), style.heads()],
        ));
    }
    check_heads((inventory.d_out(), inventory.d_in()), style.heads())?;
    Ok(mix_with_heads(inventory, style.as_slice(), style.heads()))
}
