use super::mixing::{check_heads, mix_mhr};
use super::{AdapterInventory, LoraPair, StyleVector};
use crate::error::{Error, Result};
use crate::numeric::{gemm, Mat, Scalar, Tensor};

/// Borrowed weights of one linear map `y = x·(W₀ + AᵗBᵗᵀ)ᵀ + bias`.
pub(crate) struct AffineRef<'a, T> {
    pub w0: &'a [T],
    pub bias: Option<&'a [T]>,
    pub d_in: usize,
    pub d_out: usize,
    /// Mixed `Aᵗ: d_out×r`, `Bᵗ: d_in×r`, and `r`.
    pub lora: Option<(&'a [T], &'a [T], usize)>,
}

/// Gradient sinks for [`AffineRef::backward`]; `None` skips the work.
pub(crate) struct AffineGrads<'a, T> {
    pub dx: Option<&'a mut [T]>,
    pub dw0: Option<&'a mut [T]>,
    pub dbias: Option<&'a mut [T]>,
    pub dlora: Option<(&'a mut [T], &'a mut [T])>,
}

impl<T: Scalar> AffineRef<'_, T> {
    /// Writes `batch×d_out` outputs; `u` receives `x·Bᵗ` (`batch×r`) when
    /// an adapter is present.
    pub fn forward(&self, x: &[T], batch: usize, out: &mut [T], u: &mut Vec<T>) {
        let xm = Mat::new(x, batch, self.d_in);
        gemm(xm, Mat::new(self.w0, self.d_out, self.d_in).t(), T::zero(), out);
        if let Some(bias) = self.bias {
            for row in out.chunks_exact_mut(self.d_out) {
                for (o, &b) in row.iter_mut().zip(bias) {
                    *o += b;
                }
            }
        }
        if let Some((a, b, r)) = self.lora {
            u.clear();
            u.resize(batch * r, T::zero());
            gemm(xm, Mat::new(b, self.d_in, r), T::zero(), u);
            gemm(Mat::new(u, batch, r), Mat::new(a, self.d_out, r).t(), T::one(), out);
        }
    }

    pub fn backward(&self, x: &[T], u: &[T], dy: &[T], batch: usize, grads: AffineGrads<'_, T>) {
        let dym = Mat::new(dy, batch, self.d_out);
        let xm = Mat::new(x, batch, self.d_in);
        if let Some(dw0) = grads.dw0 {
            gemm(dym.t(), xm, T::one(), dw0);
        }
        if let Some(db) = grads.dbias {
            for row in dy.chunks_exact(self.d_out) {
                for (d, &g) in db.iter_mut().zip(row) {
                    *d += g;
                }
            }
        }
        let mut du = Vec::new();
        if let Some((a, _, r)) = self.lora {
            du.resize(batch * r, T::zero());
            gemm(dym, Mat::new(a, self.d_out, r), T::zero(), &mut du);
        }
        if let (Some((da, db)), Some((_, _, r))) = (grads.dlora, self.lora) {
            gemm(dym.t(), Mat::new(u, batch, r), T::one(), da);
            gemm(xm.t(), Mat::new(&du, batch, r), T::one(), db);
        }
        if let Some(dx) = grads.dx {
            gemm(dym, Mat::new(self.w0, self.d_out, self.d_in), T::zero(), dx);
            if let Some((_, b, r)) = self.lora {
                gemm(Mat::new(&du, batch, r), Mat::new(b, self.d_in, r).t(), T::one(), dx);
            }
        }
    }
}

/// A frozen linear layer with an inventory of low-rank adapters routed by a
/// caller-supplied style vector.
#[derive(Debug, Clone, PartialEq)]
pub struct MhrLayer<T = f32> {
    pub w0: Tensor<T>,
    pub bias: Option<Tensor<T>>,
    pub inventory: AdapterInventory<T>,
    pub heads: usize,
}

impl<T: Scalar> MhrLayer<T> {
    pub fn new(w0: Tensor<T>, bias: Option<Tensor<T>>, inventory: AdapterInventory<T>, heads: usize) -> Result<Self> {
        if w0.shape() != [inventory.d_out(), inventory.d_in()] {
            return Err(Error::dim(
                "mhr_layer",
                w0.shape(),
                &[inventory.d_out(), inventory.d_in()],
            ));
        }
        if let Some(b) = &bias {
            if b.len() != inventory.d_out() {
                return Err(Error::dim("mhr_layer bias", b.shape(), &[inventory.d_out()]));
            }
        }
        check_heads((inventory.d_out(), inventory.d_in()), heads)?;
        Ok(Self {
            w0,
            bias,
            inventory,
            heads,
        })
    }

    pub fn d_in(&self) -> usize {
        self.w0.cols()
    }

    pub fn d_out(&self) -> usize {
        self.w0.rows()
    }

    fn mixed(&self, style: &StyleVector<T>) -> Result<LoraPair<T>> {
        if style.heads() != self.heads {
            return Err(Error::dim(
                "adapted_forward",
                style.logits.shape(),
                &[self.inventory.modules(), self.heads],
            ));
        }
        mix_mhr(&self.inventory, style)
    }

    /// `x·(W₀ + AᵗBᵗᵀ)ᵀ + bias`; with `style = None` the adapters are skipped.
    pub fn adapted_forward(&self, style: Option<&StyleVector<T>>, x: &Tensor<T>) -> Result<Tensor<T>> {
        if x.shape().len() != 2 || x.cols() != self.d_in() {
            return Err(Error::dim("adapted_forward", x.shape(), self.w0.shape()));
        }
        let mixed = style.map(|s| self.mixed(s)).transpose()?;
        let affine = AffineRef {
            w0: self.w0.data(),
            bias: self.bias.as_ref().map(Tensor::data),
            d_in: self.d_in(),
            d_out: self.d_out(),
            lora: mixed.as_ref().map(|p| (p.a.data(), p.b.data(), p.rank())),
        };
        let mut out = Tensor::zeros(&[x.rows(), self.d_out()]);
        affine.forward(x.data(), x.rows(), out.data_mut(), &mut Vec::new());
        Ok(out)
    }

    /// Dense `W₀ + AᵗBᵗᵀ` for a style.
    pub fn dense_weight(&self, style: &StyleVector<T>) -> Result<Tensor<T>> {
        let mut w = self.mixed(style)?.delta();
        w.axpy(T::one(), &self.w0)?;
        Ok(w)
    }
}
