use rand::Rng;

use super::NetConfig;
use crate::adapter::mixing::{mix_stacked, mix_stacked_backward, mixing_weights, mixing_weights_backward};
use crate::adapter::{AffineGrads, AffineRef, StyleVector};
use crate::error::{Error, Result};
use crate::numeric::{Grads, Group, ParamId, ParamStore, Scalar, Tensor};

#[derive(Debug, Clone, Copy, PartialEq)]
struct Linear {
    w: ParamId,
    b: ParamId,
    d_in: usize,
    d_out: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Adapted {
    lin: Linear,
    lora_a: ParamId,
    lora_b: ParamId,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Block {
    fc1: Adapted,
    fc2: Adapted,
}

/// Residual MLP policy: `relu(input)`, then `L` blocks of
/// `h += fc2(relu(fc1(h)))` where both block maps carry adapters, then a
/// linear action head. One style vector routes every adapted layer.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyNet<T = f32> {
    config: NetConfig,
    params: ParamStore<T>,
    input: Linear,
    blocks: Vec<Block>,
    head: Linear,
}

/// Mixed adapters for one style: shared per-head weights and one
/// `(Aᵗ, Bᵗ)` per adapted layer in block order (fc1, fc2, fc1, ...).
#[derive(Debug, Clone)]
pub(crate) struct Mixing<T> {
    alpha: Vec<T>,
    layers: Vec<(Vec<T>, Vec<T>)>,
}

/// Activations kept for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache<T> {
    batch: usize,
    x: Vec<T>,
    pre0: Vec<T>,
    /// Residual stream entering each block, plus the final stream.
    stream: Vec<Vec<T>>,
    pre1: Vec<Vec<T>>,
    act1: Vec<Vec<T>>,
    u1: Vec<Vec<T>>,
    u2: Vec<Vec<T>>,
    mixing: Option<Mixing<T>>,
}

fn relu_into<T: Scalar>(src: &[T], dst: &mut [T]) {
    for (d, &s) in dst.iter_mut().zip(src) {
        *d = if s > T::zero() { s } else { T::zero() };
    }
}

impl<T: Scalar> PolicyNet<T> {
    pub fn new<R: Rng + ?Sized>(config: NetConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let mut params = ParamStore::new();
        let c = config;
        let linear = |params: &mut ParamStore<T>,
                      name: &str,
                      d_in: usize,
                      d_out: usize,
                      std: f64,
                      rng: &mut R|
         -> Result<Linear> {
            let w = params.insert(
                format!("{name}/w0"),
                Tensor::randn(&[d_out, d_in], std, rng),
                Group::Base,
            )?;
            let b = params.insert(format!("{name}/bias"), Tensor::zeros(&[d_out]), Group::Base)?;
            Ok(Linear { w, b, d_in, d_out })
        };
        let input = linear(
            &mut params,
            "input",
            c.input_dim,
            c.width,
            (2.0 / c.input_dim as f64).sqrt(),
            rng,
        )?;
        let mut blocks = Vec::with_capacity(c.blocks);
        let residual_scale = 1.0 / (c.blocks as f64).sqrt();
        for i in 0..c.blocks {
            let mut adapted = |name: String, d_in: usize, d_out: usize, std: f64, rng: &mut R| -> Result<Adapted> {
                let lin = linear(&mut params, &name, d_in, d_out, std, rng)?;
                let inv = crate::adapter::AdapterInventory::<T>::init(c.modules, d_out, d_in, c.rank, rng);
                let lora_a = params.insert(format!("{name}/lora_a"), inv.stacked_a().clone(), Group::Adapter)?;
                let lora_b = params.insert(format!("{name}/lora_b"), inv.stacked_b().clone(), Group::Adapter)?;
                Ok(Adapted { lin, lora_a, lora_b })
            };
            let fc1 = adapted(
                format!("block{i}/fc1"),
                c.width,
                c.hidden,
                (2.0 / c.width as f64).sqrt(),
                rng,
            )?;
            let fc2 = adapted(
                format!("block{i}/fc2"),
                c.hidden,
                c.width,
                (1.0 / c.hidden as f64).sqrt() * residual_scale,
                rng,
            )?;
            blocks.push(Block { fc1, fc2 });
        }
        let head = linear(
            &mut params,
            "head",
            c.width,
            c.actions,
            (1.0 / c.width as f64).sqrt(),
            rng,
        )?;
        Ok(Self {
            config,
            params,
            input,
            blocks,
            head,
        })
    }

    /// Rebuilds a network from named parameters (e.g. a loaded checkpoint).
    pub fn from_params(config: NetConfig, params: ParamStore<T>) -> Result<Self> {
        config.validate()?;
        let c = config;
        let find = |name: String, shape: &[usize], group: Group| -> Result<ParamId> {
            let id = params
                .id(&name)
                .ok_or_else(|| Error::Format(format!("missing parameter `{name}`")))?;
            let p = params.param(id);
            if p.value.shape() != shape {
                return Err(Error::dim("from_params", p.value.shape(), shape));
            }
            if p.group != group {
                return Err(Error::Format(format!(
                    "parameter `{name}` in group {}, expected {group}",
                    p.group
                )));
            }
            Ok(id)
        };
        let linear = |name: &str, d_in: usize, d_out: usize| -> Result<Linear> {
            Ok(Linear {
                w: find(format!("{name}/w0"), &[d_out, d_in], Group::Base)?,
                b: find(format!("{name}/bias"), &[d_out], Group::Base)?,
                d_in,
                d_out,
            })
        };
        let adapted = |name: String, d_in: usize, d_out: usize| -> Result<Adapted> {
            Ok(Adapted {
                lin: linear(&name, d_in, d_out)?,
                lora_a: find(format!("{name}/lora_a"), &[c.modules, d_out, c.rank], Group::Adapter)?,
                lora_b: find(format!("{name}/lora_b"), &[c.modules, d_in, c.rank], Group::Adapter)?,
            })
        };
        let input = linear("input", c.input_dim, c.width)?;
        let blocks = (0..c.blocks)
            .map(|i| {
                Ok(Block {
                    fc1: adapted(format!("block{i}/fc1"), c.width, c.hidden)?,
                    fc2: adapted(format!("block{i}/fc2"), c.hidden, c.width)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let head = linear("head", c.width, c.actions)?;
        let expected = 4 + 8 * c.blocks;
        if params.len() != expected {
            return Err(Error::Format(format!(
                "expected {expected} parameters, found {}",
                params.len()
            )));
        }
        Ok(Self {
            config,
            params,
            input,
            blocks,
            head,
        })
    }

    pub fn config(&self) -> &NetConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.params
    }

    pub fn into_params(self) -> ParamStore<T> {
        self.params
    }

    pub fn cast<U: Scalar>(&self) -> PolicyNet<U> {
        PolicyNet {
            config: self.config,
            params: self.params.cast(),
            input: self.input,
            blocks: self.blocks.clone(),
            head: self.head,
        }
    }

    fn adapted_layers(&self) -> impl Iterator<Item = &Adapted> {
        self.blocks.iter().flat_map(|b| [&b.fc1, &b.fc2])
    }

    pub(crate) fn mix(&self, style: &StyleVector<T>) -> Result<Mixing<T>> {
        let c = &self.config;
        if style.logits.shape() != [c.modules, c.heads] {
            return Err(Error::dim("style", style.logits.shape(), &[c.modules, c.heads]));
        }
        let alpha = mixing_weights(style.as_slice(), c.modules, c.heads);
        let layers = self
            .adapted_layers()
            .map(|l| {
                let mut a = vec![T::zero(); l.lin.d_out * c.rank];
                let mut b = vec![T::zero(); l.lin.d_in * c.rank];
                let sa = self.params.value(l.lora_a).data();
                let sb = self.params.value(l.lora_b).data();
                mix_stacked(sa, c.modules, l.lin.d_out, c.rank, &alpha, c.heads, &mut a);
                mix_stacked(sb, c.modules, l.lin.d_in, c.rank, &alpha, c.heads, &mut b);
                (a, b)
            })
            .collect();
        Ok(Mixing { alpha, layers })
    }

    fn affine<'a>(&'a self, lin: &Linear, lora: Option<&'a (Vec<T>, Vec<T>)>) -> AffineRef<'a, T> {
        AffineRef {
            w0: self.params.value(lin.w).data(),
            bias: Some(self.params.value(lin.b).data()),
            d_in: lin.d_in,
            d_out: lin.d_out,
            lora: lora.map(|(a, b)| (a.as_slice(), b.as_slice(), self.config.rank)),
        }
    }

    /// Action logits for a batch of encoded states; `style = None` is the
    /// base model (adapters skipped).
    pub fn forward(&self, style: Option<&StyleVector<T>>, states: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(self.forward_cached(style, states)?.0)
    }

    pub fn forward_cached(
        &self,
        style: Option<&StyleVector<T>>,
        states: &Tensor<T>,
    ) -> Result<(Tensor<T>, ForwardCache<T>)> {
        let c = self.config;
        if states.shape().len() != 2 || states.cols() != c.input_dim {
            return Err(Error::dim("policy_forward", states.shape(), &[0, c.input_dim]));
        }
        let batch = states.rows();
        let mixing = style.map(|s| self.mix(s)).transpose()?;
        let mut scratch = Vec::new();

        let mut pre0 = vec![T::zero(); batch * c.width];
        self.affine(&self.input, None)
            .forward(states.data(), batch, &mut pre0, &mut scratch);
        let mut h = vec![T::zero(); batch * c.width];
        relu_into(&pre0, &mut h);

        let mut cache = ForwardCache {
            batch,
            x: states.data().to_vec(),
            pre0,
            stream: Vec::with_capacity(c.blocks + 1),
            pre1: Vec::with_capacity(c.blocks),
            act1: Vec::with_capacity(c.blocks),
            u1: Vec::with_capacity(c.blocks),
            u2: Vec::with_capacity(c.blocks),
            mixing: None,
        };
        for (i, block) in self.blocks.iter().enumerate() {
            let lora1 = mixing.as_ref().map(|m| &m.layers[2 * i]);
            let lora2 = mixing.as_ref().map(|m| &m.layers[2 * i + 1]);
            let mut pre1 = vec![T::zero(); batch * c.hidden];
            let mut u1 = Vec::new();
            self.affine(&block.fc1.lin, lora1)
                .forward(&h, batch, &mut pre1, &mut u1);
            let mut act1 = vec![T::zero(); batch * c.hidden];
            relu_into(&pre1, &mut act1);
            let mut out2 = vec![T::zero(); batch * c.width];
            let mut u2 = Vec::new();
            self.affine(&block.fc2.lin, lora2)
                .forward(&act1, batch, &mut out2, &mut u2);
            let mut next = h.clone();
            for (n, &o) in next.iter_mut().zip(&out2) {
                *n += o;
            }
            cache.stream.push(std::mem::replace(&mut h, next));
            cache.pre1.push(pre1);
            cache.act1.push(act1);
            cache.u1.push(u1);
            cache.u2.push(u2);
        }
        let mut logits = Tensor::zeros(&[batch, c.actions]);
        self.affine(&self.head, None)
            .forward(&h, batch, logits.data_mut(), &mut scratch);
        cache.stream.push(h);
        cache.mixing = mixing;
        Ok((logits, cache))
    }

    fn trainable(&self, id: ParamId) -> bool {
        self.params.param(id).trainable
    }

    /// Accumulates parameter gradients into `grads` (only for trainable
    /// parameters) and, if requested, the gradient with respect to the style
    /// logits into `dstyle` (length `modules × heads`).
    pub fn backward(
        &self,
        cache: &ForwardCache<T>,
        dlogits: &Tensor<T>,
        grads: &mut Grads<T>,
        mut dstyle: Option<&mut [T]>,
    ) -> Result<()> {
        let c = self.config;
        let batch = cache.batch;
        if dlogits.shape() != [batch, c.actions] {
            return Err(Error::dim("policy_backward", dlogits.shape(), &[batch, c.actions]));
        }
        if grads.len() != self.params.len() {
            return Err(Error::dim(
                "policy_backward grads",
                &[grads.len()],
                &[self.params.len()],
            ));
        }
        let want_lora = cache.mixing.is_some() && (dstyle.is_some() || self.trainable(self.blocks[0].fc1.lora_a));
        let mut dmixed: Vec<(Vec<T>, Vec<T>)> = if want_lora {
            self.adapted_layers()
                .map(|l| {
                    (
                        vec![T::zero(); l.lin.d_out * c.rank],
                        vec![T::zero(); l.lin.d_in * c.rank],
                    )
                })
                .collect()
        } else {
            Vec::new()
        };

        // Disjoint mutable borrows of several gradient tensors at once.
        macro_rules! sinks {
            ($lin:expr) => {{
                let (w, b) = ($lin.w, $lin.b);
                let dw = self.trainable(w).then(|| grads.get_mut(w).data_mut().to_vec());
                let db = self.trainable(b).then(|| grads.get_mut(b).data_mut().to_vec());
                (dw, db)
            }};
        }
        let commit = |grads: &mut Grads<T>, id: ParamId, buf: Option<Vec<T>>| {
            if let Some(buf) = buf {
                grads.get_mut(id).data_mut().copy_from_slice(&buf);
            }
        };

        let final_stream = &cache.stream[c.blocks];
        let (mut dw, mut db) = sinks!(self.head);
        let mut dh = vec![T::zero(); batch * c.width];
        self.affine(&self.head, None).backward(
            final_stream,
            &[],
            dlogits.data(),
            batch,
            AffineGrads {
                dx: Some(&mut dh),
                dw0: dw.as_deref_mut(),
                dbias: db.as_deref_mut(),
                dlora: None,
            },
        );
        commit(grads, self.head.w, dw);
        commit(grads, self.head.b, db);

        for (i, block) in self.blocks.iter().enumerate().rev() {
            let lora1 = cache.mixing.as_ref().map(|m| &m.layers[2 * i]);
            let lora2 = cache.mixing.as_ref().map(|m| &m.layers[2 * i + 1]);

            let (mut dw, mut db) = sinks!(block.fc2.lin);
            let mut dact = vec![T::zero(); batch * c.hidden];
            {
                let dlora = if want_lora {
                    let (da, dbm) = &mut dmixed[2 * i + 1];
                    Some((da.as_mut_slice(), dbm.as_mut_slice()))
                } else {
                    None
                };
                self.affine(&block.fc2.lin, lora2).backward(
                    &cache.act1[i],
                    &cache.u2[i],
                    &dh,
                    batch,
                    AffineGrads {
                        dx: Some(&mut dact),
                        dw0: dw.as_deref_mut(),
                        dbias: db.as_deref_mut(),
                        dlora,
                    },
                );
            }
            commit(grads, block.fc2.lin.w, dw);
            commit(grads, block.fc2.lin.b, db);

            for (d, &p) in dact.iter_mut().zip(&cache.pre1[i]) {
                if p <= T::zero() {
                    *d = T::zero();
                }
            }
            let (mut dw, mut db) = sinks!(block.fc1.lin);
            let mut dstream = vec![T::zero(); batch * c.width];
            {
                let dlora = if want_lora {
                    let (da, dbm) = &mut dmixed[2 * i];
                    Some((da.as_mut_slice(), dbm.as_mut_slice()))
                } else {
                    None
                };
                self.affine(&block.fc1.lin, lora1).backward(
                    &cache.stream[i],
                    &cache.u1[i],
                    &dact,
                    batch,
                    AffineGrads {
                        dx: Some(&mut dstream),
                        dw0: dw.as_deref_mut(),
                        dbias: db.as_deref_mut(),
                        dlora,
                    },
                );
            }
            commit(grads, block.fc1.lin.w, dw);
            commit(grads, block.fc1.lin.b, db);
            for (d, &s) in dh.iter_mut().zip(&dstream) {
                *d += s;
            }
        }

        for (d, &p) in dh.iter_mut().zip(&cache.pre0) {
            if p <= T::zero() {
                *d = T::zero();
            }
        }
        let (mut dw, mut db) = sinks!(self.input);
        if dw.is_some() || db.is_some() {
            self.affine(&self.input, None).backward(
                &cache.x,
                &[],
                &dh,
                batch,
                AffineGrads {
                    dx: None,
                    dw0: dw.as_deref_mut(),
                    dbias: db.as_deref_mut(),
                    dlora: None,
                },
            );
        }
        commit(grads, self.input.w, dw);
        commit(grads, self.input.b, db);

        if let (true, Some(mixing)) = (want_lora, cache.mixing.as_ref()) {
            let mut dalpha = vec![T::zero(); c.modules * c.heads];
            let layers: Vec<Adapted> = self.adapted_layers().copied().collect();
            for (l, (da, dbm)) in layers.iter().zip(&dmixed) {
                let train_a = self.trainable(l.lora_a);
                let train_b = self.trainable(l.lora_b);
                let mut ga = train_a.then(|| grads.get(l.lora_a).data().to_vec());
                let mut gb = train_b.then(|| grads.get(l.lora_b).data().to_vec());
                mix_stacked_backward(
                    self.params.value(l.lora_a).data(),
                    c.modules,
                    l.lin.d_out,
                    c.rank,
                    &mixing.alpha,
                    c.heads,
                    da,
                    ga.as_deref_mut(),
                    &mut dalpha,
                );
                mix_stacked_backward(
                    self.params.value(l.lora_b).data(),
                    c.modules,
                    l.lin.d_in,
                    c.rank,
                    &mixing.alpha,
                    c.heads,
                    dbm,
                    gb.as_deref_mut(),
                    &mut dalpha,
                );
                commit(grads, l.lora_a, ga);
                commit(grads, l.lora_b, gb);
            }
            if let Some(ds) = dstyle.as_mut() {
                if ds.len() != c.modules * c.heads {
                    return Err(Error::dim("dstyle", &[ds.len()], &[c.modules * c.heads]));
                }
                mixing_weights_backward(&mixing.alpha, &dalpha, c.modules, c.heads, ds);
            }
        }
        Ok(())
    }

    /// Dense per-layer weights with the style's adapter shift folded in.
    pub fn conditioned(&self, style: Option<&StyleVector<T>>) -> Result<super::ConditionedPolicy<T>> {
        let c = self.config;
        let mixing = style.map(|s| self.mix(s)).transpose()?;
        let dense = |lin: &Linear, lora: Option<&(Vec<T>, Vec<T>)>| -> super::conditioned::DenseLayer<T> {
            let mut w = self.params.value(lin.w).data().to_vec();
            if let Some((a, b)) = lora {
                crate::numeric::gemm(
                    crate::numeric::Mat::new(a, lin.d_out, c.rank),
                    crate::numeric::Mat::new(b, lin.d_in, c.rank).t(),
                    T::one(),
                    &mut w,
                );
            }
            super::conditioned::DenseLayer {
                w,
                bias: self.params.value(lin.b).data().to_vec(),
                d_in: lin.d_in,
                d_out: lin.d_out,
            }
        };
        let blocks = self
            .blocks
            .iter()
            .enumerate()
            .map(|(i, b)| {
                let l1 = mixing.as_ref().map(|m| &m.layers[2 * i]);
                let l2 = mixing.as_ref().map(|m| &m.layers[2 * i + 1]);
                (dense(&b.fc1.lin, l1), dense(&b.fc2.lin, l2))
            })
            .collect();
        Ok(super::ConditionedPolicy {
            input: dense(&self.input, None),
            blocks,
            head: dense(&self.head, None),
        })
    }
}
