use super::{Scalar, Tensor};
use crate::error::{Error, Result};

/// Row-major matrix view used by [`gemm`].
#[derive(Clone, Copy)]
pub(crate) struct Mat<'a, T> {
    pub data: &'a [T],
    pub rows: usize,
    pub cols: usize,
    pub transposed: bool,
}

impl<'a, T: Scalar> Mat<'a, T> {
    pub fn new(data: &'a [T], rows: usize, cols: usize) -> Self {
        debug_assert_eq!(data.len(), rows * cols);
        Self {
            data,
            rows,
            cols,
            transposed: false,
        }
    }

    pub fn of(t: &'a Tensor<T>) -> Self {
        Self::new(t.data(), t.rows(), t.cols())
    }

    pub fn t(self) -> Self {
        Self {
            transposed: !self.transposed,
            ..self
        }
    }

    fn logical(&self) -> (usize, usize) {
        if self.transposed {
            (self.cols, self.rows)
        } else {
            (self.rows, self.cols)
        }
    }

    fn strides(&self) -> (isize, isize) {
        if self.transposed {
            (1, self.cols as isize)
        } else {
            (self.cols as isize, 1)
        }
    }
}

/// `out = a·b + beta·out` where `out` is a row-major `m×n` buffer.
pub(crate) fn gemm<T: Scalar>(a: Mat<'_, T>, b: Mat<'_, T>, beta: T, out: &mut [T]) {
    let (m, k) = a.logical();
    let (kb, n) = b.logical();
    assert_eq!(k, kb, "gemm inner dimensions");
    assert_eq!(out.len(), m * n, "gemm output size");
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        out.iter_mut().for_each(|x| *x *= beta);
        return;
    }
    let (rsa, csa) = a.strides();
    let (rsb, csb) = b.strides();
    // SAFETY: dimensions and strides were derived from slices of exactly
    // rows*cols elements, and `out` holds m*n elements.
    unsafe {
        T::gemm_raw(
            m,
            k,
            n,
            T::one(),
            a.data.as_ptr(),
            rsa,
            csa,
            b.data.as_ptr(),
            rsb,
            csb,
            beta,
            out.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

pub fn matmul<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    if a.shape().len() != 2 || b.shape().len() != 2 || a.cols() != b.rows() {
        return Err(Error::dim("matmul", a.shape(), b.shape()));
    }
    let mut out = Tensor::zeros(&[a.rows(), b.cols()]);
    gemm(Mat::of(a), Mat::of(b), T::zero(), out.data_mut());
    Ok(out)
}

/// Numerically stable softmax of `logits` into `out`.
pub(crate) fn softmax_into<T: Scalar>(logits: &[T], out: &mut [T]) {
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let mut sum = T::zero();
    for (o, &z) in out.iter_mut().zip(logits) {
        *o = (z - max).exp();
        sum += *o;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
}

pub fn softmax<T: Scalar>(logits: &Tensor<T>) -> Result<Tensor<T>> {
    if logits.is_empty() {
        return Err(Error::Argument("softmax of an empty vector".into()));
    }
    let mut out = Tensor::zeros(logits.shape());
    softmax_into(logits.data(), out.data_mut());
    Ok(out)
}

fn check_labels<T: Scalar>(logits: &Tensor<T>, labels: &[usize]) -> Result<()> {
    if logits.shape().len() != 2 || logits.rows() != labels.len() {
        return Err(Error::dim("cross_entropy", logits.shape(), &[labels.len()]));
    }
    let k = logits.cols();
    if let Some(&bad) = labels.iter().find(|&&y| y >= k) {
        return Err(Error::Argument(format!("label {bad} out of range for {k} classes")));
    }
    Ok(())
}

fn log_sum_exp<T: Scalar>(row: &[T]) -> f64 {
    let max = row.iter().map(|x| x.as_f64()).fold(f64::NEG_INFINITY, f64::max);
    max + row.iter().map(|x| (x.as_f64() - max).exp()).sum::<f64>().ln()
}

/// Mean negative log-likelihood of the labelled classes.
pub fn cross_entropy_loss<T: Scalar>(logits: &Tensor<T>, labels: &[usize]) -> Result<T> {
    check_labels(logits, labels)?;
    let total: f64 = labels
        .iter()
        .enumerate()
        .map(|(i, &y)| {
            let row = logits.row(i);
            log_sum_exp(row) - row[y].as_f64()
        })
        .sum();
    Ok(T::of(total / labels.len() as f64))
}

/// Loss together with its gradient with respect to the logits.
pub fn cross_entropy_with_grad<T: Scalar>(logits: &Tensor<T>, labels: &[usize]) -> Result<(T, Tensor<T>)> {
    let loss = cross_entropy_loss(logits, labels)?;
    let scale = T::one() / T::of(labels.len() as f64);
    let mut grad = Tensor::zeros(logits.shape());
    for (i, &y) in labels.iter().enumerate() {
        let g = grad.row_mut(i);
        softmax_into(logits.row(i), g);
        g[y] -= T::one();
        g.iter_mut().for_each(|x| *x *= scale);
    }
    Ok((loss, grad))
}
