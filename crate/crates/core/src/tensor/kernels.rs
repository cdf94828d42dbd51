//! Forward kernels shared by the eval path and the gradient tape.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::real::{sigmoid, Real};
use crate::tensor::matrix::{matmul_acc, Matrix};

/// Probabilities of a logit vector, computed after subtracting the max.
pub fn softmax<T: Real>(logits: &[T]) -> Result<Vec<T>> {
    if logits.is_empty() {
        return Err(Error::Empty("softmax input"));
    }
    let mut out = logits.to_vec();
    softmax_in_place(&mut out);
    Ok(out)
}

pub(crate) fn softmax_in_place<T: Real>(v: &mut [T]) {
    let max = v.iter().copied().fold(T::neg_infinity(), T::max);
    let mut total = T::zero();
    for x in v.iter_mut() {
        *x = (*x - max).exp();
        total += *x;
    }
    for x in v.iter_mut() {
        *x /= total;
    }
}

/// `log softmax(logits)`, stable for large logits.
pub fn log_softmax<T: Real>(logits: &[T]) -> Result<Vec<T>> {
    if logits.is_empty() {
        return Err(Error::Empty("log_softmax input"));
    }
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let lse = logits.iter().map(|&x| (x - max).exp()).sum::<T>().ln() + max;
    Ok(logits.iter().map(|&x| x - lse).collect())
}

/// Weights of one LSTM cell: `[x | h] · w + b` yields the pre-activations of
/// the input, forget and output gates and the cell candidate, in that order.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams<T> {
    /// `(input + hidden) x 4·hidden`
    pub w: Matrix<T>,
    /// `1 x 4·hidden`
    pub b: Matrix<T>,
}

impl<T: Real> LstmParams<T> {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        LstmParams {
            w: Matrix::zeros(input + hidden, 4 * hidden),
            b: Matrix::zeros(1, 4 * hidden),
        }
    }

    pub fn hidden(&self) -> usize {
        self.b.cols() / 4
    }

    pub fn input(&self) -> usize {
        self.w.rows() - self.hidden()
    }
}

/// One LSTM step on a batch of rows. Returns `(h, c)`.
pub fn lstm_cell<T: Real>(
    x: &Matrix<T>,
    h_prev: &Matrix<T>,
    c_prev: &Matrix<T>,
    p: &LstmParams<T>,
) -> Result<(Matrix<T>, Matrix<T>)> {
    let d = p.hidden();
    let batch = x.rows();
    p.w.check_shape("lstm_cell", "w", (p.input() + d, 4 * d))?;
    x.check_shape("lstm_cell", "x", (batch, p.input()))?;
    h_prev.check_shape("lstm_cell", "h_prev", (batch, d))?;
    c_prev.check_shape("lstm_cell", "c_prev", (batch, d))?;

    let xh = Matrix::concat_cols(x, h_prev);
    // same summation order as the tape: product first, then bias
    let mut z = Matrix::zeros(batch, 4 * d);
    matmul_acc(&xh, &p.w, &mut z);
    for r in 0..batch {
        for (x, &b) in z.row_mut(r).iter_mut().zip(p.b.row(0)) {
            *x += b;
        }
    }

    let mut h = Matrix::zeros(batch, d);
    let mut c = Matrix::zeros(batch, d);
    for r in 0..batch {
        let zr = z.row(r);
        for k in 0..d {
            let i = sigmoid(zr[k]);
            let f = sigmoid(zr[d + k]);
            let o = sigmoid(zr[2 * d + k]);
            let g = zr[3 * d + k].tanh();
            let cv = f * c_prev.get(r, k) + i * g;
            c.set(r, k, cv);
            h.set(r, k, o * cv.tanh());
        }
    }
    Ok((h, c))
}
