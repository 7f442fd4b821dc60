use rand::Rng;

use crate::error::{Error, Result};
use crate::numeric::{Scalar, Tensor};

/// A low-rank weight shift `ΔW = A·Bᵀ` with `A: d_out×r` and `B: d_in×r`.
#[derive(Debug, Clone, PartialEq)]
pub struct LoraPair<T = f32> {
    pub a: Tensor<T>,
    pub b: Tensor<T>,
}

impl<T: Scalar> LoraPair<T> {
    pub fn new(a: Tensor<T>, b: Tensor<T>) -> Result<Self> {
        if a.shape().len() != 2 || b.shape().len() != 2 || a.cols() != b.cols() {
            return Err(Error::dim("lora_pair", a.shape(), b.shape()));
        }
        Ok(Self { a, b })
    }

    pub fn rank(&self) -> usize {
        self.a.cols()
    }

    pub fn d_out(&self) -> usize {
        self.a.rows()
    }

    pub fn d_in(&self) -> usize {
        self.b.rows()
    }

    /// Dense `A·Bᵀ`, shape `d_out×d_in`.
    pub fn delta(&self) -> Tensor<T> {
        let mut out = Tensor::zeros(&[self.d_out(), self.d_in()]);
        crate::numeric::gemm(
            crate::numeric::Mat::of(&self.a),
            crate::numeric::Mat::of(&self.b).t(),
            T::zero(),
            out.data_mut(),
        );
        out
    }
}

/// `m` LoRA modules of identical shape, stored stacked as `A: [m, d_out, r]`
/// and `B: [m, d_in, r]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AdapterInventory<T = f32> {
    pub(crate) a: Tensor<T>,
    pub(crate) b: Tensor<T>,
}

impl<T: Scalar> AdapterInventory<T> {
    pub fn from_stacked(a: Tensor<T>, b: Tensor<T>) -> Result<Self> {
        let (sa, sb) = (a.shape(), b.shape());
        if sa.len() != 3 || sb.len() != 3 || sa[0] != sb[0] || sa[2] != sb[2] {
            return Err(Error::dim("adapter_inventory", sa, sb));
        }
        Ok(Self { a, b })
    }

    pub fn from_pairs(pairs: &[LoraPair<T>]) -> Result<Self> {
        let first = pairs
            .first()
            .ok_or_else(|| Error::Argument("adapter inventory needs at least one module".into()))?;
        let (d_out, d_in, r) = (first.d_out(), first.d_in(), first.rank());
        let mut a = Vec::with_capacity(pairs.len() * d_out * r);
        let mut b = Vec::with_capacity(pairs.len() * d_in * r);
        for p in pairs {
            if (p.d_out(), p.d_in(), p.rank()) != (d_out, d_in, r) {
                return Err(Error::dim(
                    "adapter_inventory",
                    &[d_out, d_in, r],
                    &[p.d_out(), p.d_in(), p.rank()],
                ));
            }
            a.extend_from_slice(p.a.data());
            b.extend_from_slice(p.b.data());
        }
        Self::from_stacked(
            Tensor::new(vec![pairs.len(), d_out, r], a)?,
            Tensor::new(vec![pairs.len(), d_in, r], b)?,
        )
    }

    /// Standard initialization: `A ~ N(0, 1/r)` and `B = 0`, so the initial
    /// shift is exactly zero.
    pub fn init<R: Rng + ?Sized>(modules: usize, d_out: usize, d_in: usize, rank: usize, rng: &mut R) -> Self {
        Self {
            a: Tensor::randn(&[modules, d_out, rank], (1.0 / rank as f64).sqrt(), rng),
            b: Tensor::zeros(&[modules, d_in, rank]),
        }
    }

    pub fn modules(&self) -> usize {
        self.a.shape()[0]
    }

    pub fn d_out(&self) -> usize {
        self.a.shape()[1]
    }

    pub fn d_in(&self) -> usize {
        self.b.shape()[1]
    }

    pub fn rank(&self) -> usize {
        self.a.shape()[2]
    }

    /// Adapter parameter count, `m·r·(d_out + d_in)`; independent of heads.
    pub fn num_params(&self) -> usize {
        self.a.len() + self.b.len()
    }

    pub fn module(&self, i: usize) -> LoraPair<T> {
        let (ao, bo) = (self.d_out() * self.rank(), self.d_in() * self.rank());
        LoraPair {
            a: Tensor::new(
                vec![self.d_out(), self.rank()],
                self.a.data()[i * ao..(i + 1) * ao].to_vec(),
            )
            .expect("module slice"),
            b: Tensor::new(
                vec![self.d_in(), self.rank()],
                self.b.data()[i * bo..(i + 1) * bo].to_vec(),
            )
            .expect("module slice"),
        }
    }

    pub fn stacked_a(&self) -> &Tensor<T> {
        &self.a
    }

    pub fn stacked_b(&self) -> &Tensor<T> {
        &self.b
    }
}
