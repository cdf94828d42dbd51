//! Local attention with a predicted alignment position.
//!
//! For a decoder state `h` and source length `S`, the aligned position is
//! `p = (S - 1) · sigmoid(v · tanh(h · W))`. Source positions `j` with
//! `|j - p| <= D` form the window, where `D = min(window, S)`. Scores are
//! dot products `h · h̄_j`, normalised by a softmax over the window and
//! multiplied by the Gaussian `exp(-(j - p)² / (2σ²))`, `σ = D / 2`.
//! The resulting weights are nonnegative and sum to at most one.

use alloc::vec::Vec;

use crate::real::{sigmoid, Real};
use crate::tensor::kernels::softmax_in_place;
use crate::tensor::matrix::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttentionKind {
    /// Windowed, Gaussian-weighted attention around a predicted position.
    Local,
    /// Softmax over every source position; debugging aid.
    Global,
}

/// Everything the backward pass needs about one row's attention.
#[derive(Debug, Clone)]
pub struct RowAttention<T> {
    /// Source positions inside the window, ascending.
    pub positions: Vec<usize>,
    /// Final attention weight per window position.
    pub weights: Vec<T>,
    pub(crate) align: Vec<T>,
    pub(crate) gauss: Vec<T>,
    /// Predicted alignment position `p`.
    pub center: T,
    pub(crate) gate: T,
    pub(crate) hidden_act: Vec<T>,
    pub(crate) sigma: T,
    pub(crate) len: usize,
}

impl<T: Real> RowAttention<T> {
    /// Source position receiving the largest weight.
    pub fn argmax_position(&self) -> usize {
        let mut best = 0;
        for (k, w) in self.weights.iter().enumerate() {
            if *w > self.weights[best] {
                best = k;
            }
        }
        self.positions[best]
    }

    /// Dense weight vector over all `len` source positions.
    pub fn dense_weights(&self) -> Vec<T> {
        let mut out = alloc::vec![T::zero(); self.len];
        for (&j, &w) in self.positions.iter().zip(&self.weights) {
            out[j] = w;
        }
        out
    }
}

/// Computes attention weights for one query row.
///
/// `state(j)` returns the top-layer encoder state of source position `j`.
pub fn attend_row<'a, T: Real>(
    query: &[T],
    state: impl Fn(usize) -> &'a [T],
    len: usize,
    position_w: &Matrix<T>,
    position_v: &Matrix<T>,
    kind: AttentionKind,
    window: usize,
) -> RowAttention<T> {
    debug_assert!(len >= 1);
    let d = query.len();

    // position network
    let mut hidden_act = alloc::vec![T::zero(); d];
    for (k, &q) in query.iter().enumerate() {
        if q == T::zero() {
            continue;
        }
        for (a, &w) in hidden_act.iter_mut().zip(position_w.row(k)) {
            *a += q * w;
        }
    }
    hidden_act.iter_mut().for_each(|a| *a = a.tanh());
    let s: T = hidden_act
        .iter()
        .zip(position_v.as_slice())
        .map(|(&a, &v)| a * v)
        .sum();
    let gate = sigmoid(s);
    let center = T::of((len - 1) as f64) * gate;
    let half_width = window.min(len).max(1);
    let sigma = T::of(half_width as f64) / T::of(2.0);

    let positions: Vec<usize> = match kind {
        AttentionKind::Global => (0..len).collect(),
        AttentionKind::Local => {
            let hw = T::of(half_width as f64);
            (0..len)
                .filter(|&j| (T::of(j as f64) - center).abs() <= hw)
                .collect()
        }
    };

    let mut align: Vec<T> = positions
        .iter()
        .map(|&j| query.iter().zip(state(j)).map(|(&a, &b)| a * b).sum())
        .collect();
    softmax_in_place(&mut align);

    let gauss: Vec<T> = match kind {
        AttentionKind::Global => alloc::vec![T::one(); positions.len()],
        AttentionKind::Local => positions
            .iter()
            .map(|&j| {
                let diff = T::of(j as f64) - center;
                (-(diff * diff) / (T::of(2.0) * sigma * sigma)).exp()
            })
            .collect(),
    };
    let weights = align.iter().zip(&gauss).map(|(&a, &g)| a * g).collect();

    RowAttention {
        positions,
        weights,
        align,
        gauss,
        center,
        gate,
        hidden_act,
        sigma,
        len,
    }
}

/// Context vector `Σ_j w_j h̄_j` for an attention row.
pub fn context<'a, T: Real>(att: &RowAttention<T>, state: impl Fn(usize) -> &'a [T], out: &mut [T]) {
    out.iter_mut().for_each(|x| *x = T::zero());
    for (&j, &w) in att.positions.iter().zip(&att.weights) {
        for (o, &s) in out.iter_mut().zip(state(j)) {
            *o += w * s;
        }
    }
}

/// Gradients of one attention row given the gradient `dctx` of its context.
pub(crate) struct RowGrads<'g, T> {
    pub dquery: &'g mut [T],
    pub dposition_w: Option<&'g mut Matrix<T>>,
    pub dposition_v: Option<&'g mut Matrix<T>>,
}

pub(crate) fn attend_row_backward<'a, T: Real>(
    att: &RowAttention<T>,
    query: &[T],
    state: impl Fn(usize) -> &'a [T],
    position_w: &Matrix<T>,
    position_v: &Matrix<T>,
    kind: AttentionKind,
    dctx: &[T],
    grads: RowGrads<'_, T>,
    mut dstate: impl FnMut(usize, &[T], T),
) {
    let n = att.positions.len();
    // d w_j and the direct path into each encoder state
    let mut dweight = alloc::vec![T::zero(); n];
    for k in 0..n {
        let j = att.positions[k];
        let hj = state(j);
        dweight[k] = dctx.iter().zip(hj).map(|(&a, &b)| a * b).sum();
    }

    let mut dalign = alloc::vec![T::zero(); n];
    let mut dcenter = T::zero();
    for k in 0..n {
        dalign[k] = dweight[k] * att.gauss[k];
        if kind == AttentionKind::Local {
            let dg = dweight[k] * att.align[k];
            let diff = T::of(att.positions[k] as f64) - att.center;
            dcenter += dg * att.gauss[k] * diff / (att.sigma * att.sigma);
        }
    }
    let dot: T = att.align.iter().zip(&dalign).map(|(&a, &b)| a * b).sum();

    for k in 0..n {
        let j = att.positions[k];
        let dscore = att.align[k] * (dalign[k] - dot);
        let hj = state(j);
        for (dq, &s) in grads.dquery.iter_mut().zip(hj) {
            *dq += dscore * s;
        }
        // state j receives w_j·dctx + dscore·query
        dstate(j, query, dscore);
        dstate(j, dctx, att.weights[k]);
    }

    if kind == AttentionKind::Global || att.len == 1 {
        return;
    }
    let ds = dcenter * T::of((att.len - 1) as f64) * att.gate * (T::one() - att.gate);
    let d = query.len();
    let mut dz = alloc::vec![T::zero(); d];
    for k in 0..d {
        let a = att.hidden_act[k];
        let v = position_v.as_slice()[k];
        dz[k] = ds * v * (T::one() - a * a);
    }
    if let Some(dv) = grads.dposition_v {
        for (g, &a) in dv.as_mut_slice().iter_mut().zip(&att.hidden_act) {
            *g += ds * a;
        }
    }
    if let Some(dw) = grads.dposition_w {
        for (r, &q) in query.iter().enumerate() {
            if q == T::zero() {
                continue;
            }
            for (g, &z) in dw.row_mut(r).iter_mut().zip(&dz) {
                *g += q * z;
            }
        }
    }
    for (r, dq) in grads.dquery.iter_mut().enumerate() {
        let wr = position_w.row(r);
        *dq += wr.iter().zip(&dz).map(|(&w, &z)| w * z).sum::<T>();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn rand_matrix(rows: usize, cols: usize, seed: u64) -> Matrix<f64> {
        use rand::Rng;
        let mut rng = crate::seeded_rng(seed);
        let data = (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect();
        Matrix::from_vec(rows, cols, data).unwrap()
    }

    #[test]
    fn single_position_gets_full_weight() {
        let d = 4;
        let q = rand_matrix(1, d, 1);
        let enc = rand_matrix(1, d, 2);
        let att = attend_row(
            q.row(0),
            |j| enc.row(j),
            1,
            &rand_matrix(d, d, 3),
            &rand_matrix(d, 1, 4),
            AttentionKind::Local,
            10,
        );
        assert_eq!(att.positions, vec![0]);
        assert_eq!(att.weights, vec![1.0]);
        assert_eq!(att.center, 0.0);
    }

    #[test]
    fn weights_nonnegative_and_sum_at_most_one() {
        let d = 5;
        for seed in 0..50u64 {
            let len = 1 + (seed as usize % 17);
            let q = rand_matrix(1, d, seed);
            let enc = rand_matrix(len, d, seed + 100);
            for window in [1, 3, 10] {
                let att = attend_row(
                    q.row(0),
                    |j| enc.row(j),
                    len,
                    &rand_matrix(d, d, seed + 200),
                    &rand_matrix(d, 1, seed + 300),
                    AttentionKind::Local,
                    window,
                );
                assert!(!att.positions.is_empty());
                assert!(att.weights.iter().all(|&w| w >= 0.0));
                let total: f64 = att.weights.iter().sum();
                assert!(total <= 1.0 + 1e-6, "sum {total}");
            }
        }
    }

    #[test]
    fn global_weights_sum_to_one() {
        let d = 3;
        let q = rand_matrix(1, d, 9);
        let enc = rand_matrix(6, d, 10);
        let att = attend_row(
            q.row(0),
            |j| enc.row(j),
            6,
            &rand_matrix(d, d, 11),
            &rand_matrix(d, 1, 12),
            AttentionKind::Global,
            2,
        );
        assert_eq!(att.positions.len(), 6);
        let total: f64 = att.weights.iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
    }
}
