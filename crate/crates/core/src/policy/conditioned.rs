use crate::numeric::Scalar;

#[derive(Debug, Clone)]
pub(crate) struct DenseLayer<T> {
    pub w: Vec<T>,
    pub bias: Vec<T>,
    pub d_in: usize,
    pub d_out: usize,
}

impl<T: Scalar> DenseLayer<T> {
    fn apply(&self, x: &[T], out: &mut [T]) {
        for (o, (row, &b)) in out.iter_mut().zip(self.w.chunks_exact(self.d_in).zip(&self.bias)) {
            *o = dot(row, x) + b;
        }
    }
}

/// Eight independent partial sums so the compiler can vectorize.
fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    let mut acc = [T::zero(); 8];
    let (ac, bc) = (a.chunks_exact(8), b.chunks_exact(8));
    let tail: T = ac.remainder().iter().zip(bc.remainder()).map(|(&x, &y)| x * y).sum();
    for (x, y) in ac.zip(bc) {
        for k in 0..8 {
            acc[k] += x[k] * y[k];
        }
    }
    acc.iter().copied().sum::<T>() + tail
}

/// A policy with one style folded into dense weights, for fast
/// single-state inference during match play.
#[derive(Debug, Clone)]
pub struct ConditionedPolicy<T = f32> {
    pub(crate) input: DenseLayer<T>,
    pub(crate) blocks: Vec<(DenseLayer<T>, DenseLayer<T>)>,
    pub(crate) head: DenseLayer<T>,
}

impl<T: Scalar> ConditionedPolicy<T> {
    pub fn logits(&self, features: &[T]) -> Vec<T> {
        let mut h = vec![T::zero(); self.input.d_out];
        self.input.apply(features, &mut h);
        h.iter_mut().for_each(|v| *v = v.max(T::zero()));
        let mut hidden = Vec::new();
        let mut out = vec![T::zero(); h.len()];
        for (fc1, fc2) in &self.blocks {
            hidden.resize(fc1.d_out, T::zero());
            fc1.apply(&h, &mut hidden);
            hidden.iter_mut().for_each(|v| *v = v.max(T::zero()));
            fc2.apply(&hidden, &mut out);
            for (a, &b) in h.iter_mut().zip(&out) {
                *a += b;
            }
        }
        let mut logits = vec![T::zero(); self.head.d_out];
        self.head.apply(&h, &mut logits);
        logits
    }
}
