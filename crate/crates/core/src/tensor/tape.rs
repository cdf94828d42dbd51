//! Reverse-mode gradient tape.
//!
//! Nodes are appended in evaluation order, so every operand has a smaller
//! id than its result and walking the node list backwards is a reverse
//! topological order. Gradients are summed into operands, which handles
//! fan-out (one state feeding several later steps).

use alloc::boxed::Box;
use alloc::vec::Vec;

use crate::real::{sigmoid, Real};
use crate::tensor::attention::{attend_row, attend_row_backward, context, AttentionKind, RowAttention, RowGrads};
use crate::tensor::kernels::LstmParams;
use crate::tensor::matrix::{matmul_a_bt_acc, matmul_at_b_acc, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(usize);

#[derive(Debug)]
enum Op<T> {
    Leaf,
    MatMul(NodeId, NodeId),
    AddBias(NodeId, NodeId),
    Add(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Sigmoid(NodeId),
    Tanh(NodeId),
    Concat(NodeId, NodeId),
    SliceCols(NodeId, usize),
    Gather(NodeId, Vec<usize>),
    Select {
        new: NodeId,
        old: NodeId,
        take_new: Vec<bool>,
    },
    Scale(NodeId, Vec<T>),
    Attention(Box<AttentionOp<T>>),
    SoftmaxXent {
        logits: NodeId,
        targets: Vec<Option<usize>>,
        probs: Matrix<T>,
    },
    Sum(Vec<NodeId>),
}

#[derive(Debug)]
struct AttentionOp<T> {
    query: NodeId,
    /// Encoder state node per source position (rows are batch entries).
    states: Vec<NodeId>,
    position_w: NodeId,
    position_v: NodeId,
    kind: AttentionKind,
    rows: Vec<Option<RowAttention<T>>>,
}

#[derive(Debug)]
struct Node<T> {
    value: Matrix<T>,
    op: Op<T>,
    needs_grad: bool,
}

/// Records a forward computation for one backward pass.
#[derive(Debug, Default)]
pub struct GradientTape<T> {
    nodes: Vec<Node<T>>,
}

/// Gradients produced by [`GradientTape::backward`], indexed by node.
#[derive(Debug)]
pub struct Gradients<T> {
    grads: Vec<Option<Matrix<T>>>,
}

impl<T: Real> Gradients<T> {
    /// Gradient of the loss with respect to `id`, if any flowed there.
    pub fn get(&self, id: NodeId) -> Option<&Matrix<T>> {
        self.grads[id.0].as_ref()
    }

    pub fn take(&mut self, id: NodeId) -> Option<Matrix<T>> {
        self.grads[id.0].take()
    }
}

impl<T: Real> GradientTape<T> {
    pub fn new() -> Self {
        GradientTape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Matrix<T> {
        &self.nodes[id.0].value
    }

    fn push(&mut self, value: Matrix<T>, op: Op<T>, needs_grad: bool) -> NodeId {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        NodeId(self.nodes.len() - 1)
    }

    fn needs(&self, id: NodeId) -> bool {
        self.nodes[id.0].needs_grad
    }

    /// A trainable leaf: gradients are accumulated for it.
    pub fn param(&mut self, value: Matrix<T>) -> NodeId {
        self.push(value, Op::Leaf, true)
    }

    /// A leaf that receives no gradient (inputs, frozen weights).
    pub fn constant(&mut self, value: Matrix<T>) -> NodeId {
        self.push(value, Op::Leaf, false)
    }

    pub fn leaf(&mut self, value: Matrix<T>, trainable: bool) -> NodeId {
        self.push(value, Op::Leaf, trainable)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = Matrix::matmul(self.value(a), self.value(b));
        let g = self.needs(a) || self.needs(b);
        self.push(v, Op::MatMul(a, b), g)
    }

    /// `a + bias` with a `1 x n` bias broadcast over rows.
    pub fn add_bias(&mut self, a: NodeId, bias: NodeId) -> NodeId {
        let mut v = self.value(a).clone();
        let b = self.value(bias);
        for r in 0..v.rows() {
            for (x, &y) in v.row_mut(r).iter_mut().zip(b.row(0)) {
                *x += y;
            }
        }
        let g = self.needs(a) || self.needs(bias);
        self.push(v, Op::AddBias(a, bias), g)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let mut v = self.value(a).clone();
        v.add_assign(self.value(b));
        let g = self.needs(a) || self.needs(b);
        self.push(v, Op::Add(a, b), g)
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let mut v = self.value(a).clone();
        for (x, &y) in v.as_mut_slice().iter_mut().zip(self.value(b).as_slice()) {
            *x *= y;
        }
        let g = self.needs(a) || self.needs(b);
        self.push(v, Op::Mul(a, b), g)
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(sigmoid);
        let g = self.needs(a);
        self.push(v, Op::Sigmoid(a), g)
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(|x| x.tanh());
        let g = self.needs(a);
        self.push(v, Op::Tanh(a), g)
    }

    pub fn concat(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = Matrix::concat_cols(self.value(a), self.value(b));
        let g = self.needs(a) || self.needs(b);
        self.push(v, Op::Concat(a, b), g)
    }

    pub fn slice_cols(&mut self, a: NodeId, start: usize, width: usize) -> NodeId {
        let v = self.value(a).slice_cols(start, width);
        let g = self.needs(a);
        self.push(v, Op::SliceCols(a, start), g)
    }

    /// Rows `ids[r]` of `table`, one per output row.
    pub fn gather(&mut self, table: NodeId, ids: Vec<usize>) -> NodeId {
        let t = self.value(table);
        let mut v = Matrix::zeros(ids.len(), t.cols());
        for (r, &id) in ids.iter().enumerate() {
            v.row_mut(r).copy_from_slice(t.row(id));
        }
        let g = self.needs(table);
        self.push(v, Op::Gather(table, ids), g)
    }

    /// Row-wise choice between `new` and `old`.
    pub fn select(&mut self, new: NodeId, old: NodeId, take_new: Vec<bool>) -> NodeId {
        let mut v = self.value(old).clone();
        let n = self.value(new);
        for (r, &t) in take_new.iter().enumerate() {
            if t {
                v.row_mut(r).copy_from_slice(n.row(r));
            }
        }
        let g = self.needs(new) || self.needs(old);
        self.push(v, Op::Select { new, old, take_new }, g)
    }

    /// Elementwise product with a constant (dropout masks).
    pub fn scale(&mut self, a: NodeId, factors: Vec<T>) -> NodeId {
        let mut v = self.value(a).clone();
        for (x, &f) in v.as_mut_slice().iter_mut().zip(&factors) {
            *x *= f;
        }
        let g = self.needs(a);
        self.push(v, Op::Scale(a, factors), g)
    }

    /// One LSTM step. Returns `(h, c)`.
    pub fn lstm(&mut self, x: NodeId, h: NodeId, c: NodeId, w: NodeId, b: NodeId) -> (NodeId, NodeId) {
        let d = self.value(h).cols();
        let xh = self.concat(x, h);
        let z = self.matmul(xh, w);
        let z = self.add_bias(z, b);
        let gates = self.slice_cols(z, 0, 3 * d);
        let gates = self.sigmoid(gates);
        let i = self.slice_cols(gates, 0, d);
        let f = self.slice_cols(gates, d, d);
        let o = self.slice_cols(gates, 2 * d, d);
        let g = self.slice_cols(z, 3 * d, d);
        let g = self.tanh(g);
        let keep = self.mul(f, c);
        let write = self.mul(i, g);
        let c_new = self.add(keep, write);
        let squashed = self.tanh(c_new);
        let h_new = self.mul(o, squashed);
        (h_new, c_new)
    }

    /// Convenience wrapper registering LSTM weights as leaves.
    pub fn lstm_params(&mut self, p: &LstmParams<T>, trainable: bool) -> (NodeId, NodeId) {
        (self.leaf(p.w.clone(), trainable), self.leaf(p.b.clone(), trainable))
    }

    /// Attention context for each row of `query`.
    ///
    /// `states[j]` holds the encoder state of source position `j` for every
    /// batch row; `lengths[r]` is the source length of row `r`, and rows with
    /// `lengths[r] == 0` produce a zero context. Returns the context node and
    /// the per-row attention records.
    #[allow(clippy::too_many_arguments)]
    pub fn attention(
        &mut self,
        query: NodeId,
        states: &[NodeId],
        lengths: &[usize],
        position_w: NodeId,
        position_v: NodeId,
        kind: AttentionKind,
        window: usize,
    ) -> NodeId {
        let q = self.value(query);
        let (batch, d) = q.shape();
        let mut out = Matrix::zeros(batch, d);
        let mut rows = Vec::with_capacity(batch);
        for (r, &len) in lengths.iter().enumerate() {
            if len == 0 {
                rows.push(None);
                continue;
            }
            let nodes = &self.nodes;
            let state = |j: usize| nodes[states[j].0].value.row(r);
            let att = attend_row(
                q.row(r),
                state,
                len,
                self.value(position_w),
                self.value(position_v),
                kind,
                window,
            );
            context(&att, state, out.row_mut(r));
            rows.push(Some(att));
        }
        let g = self.needs(query)
            || self.needs(position_w)
            || self.needs(position_v)
            || states.iter().any(|&s| self.needs(s));
        let op = AttentionOp {
            query,
            states: states.to_vec(),
            position_w,
            position_v,
            kind,
            rows,
        };
        self.push(out, Op::Attention(Box::new(op)), g)
    }

    /// Attention record of row `r` of an attention node.
    pub fn attention_row(&self, id: NodeId, r: usize) -> Option<&RowAttention<T>> {
        match &self.nodes[id.0].op {
            Op::Attention(op) => op.rows[r].as_ref(),
            _ => None,
        }
    }

    /// Summed negative log-likelihood of `targets` under `softmax(logits)`.
    /// Rows with no target (padding) contribute nothing.
    pub fn softmax_xent(&mut self, logits: NodeId, targets: Vec<Option<usize>>) -> NodeId {
        let l = self.value(logits);
        let mut probs = l.clone();
        let mut loss = T::zero();
        for r in 0..probs.rows() {
            let row = probs.row_mut(r);
            crate::tensor::kernels::softmax_in_place(row);
            if let Some(t) = targets[r] {
                // log p via log-sum-exp on the raw logits keeps tiny probabilities exact
                let lr = l.row(r);
                let max = lr.iter().copied().fold(T::neg_infinity(), T::max);
                let lse = lr.iter().map(|&x| (x - max).exp()).sum::<T>().ln() + max;
                loss += lse - lr[t];
            }
        }
        let g = self.needs(logits);
        self.push(
            Matrix::row_vector(alloc::vec![loss]),
            Op::SoftmaxXent {
                logits,
                targets,
                probs,
            },
            g,
        )
    }

    /// Sum of `1 x 1` nodes.
    pub fn sum(&mut self, items: Vec<NodeId>) -> NodeId {
        let total = items.iter().map(|&i| self.value(i).get(0, 0)).sum();
        let g = items.iter().any(|&i| self.needs(i));
        self.push(Matrix::row_vector(alloc::vec![total]), Op::Sum(items), g)
    }

    /// Back-propagates from the `1 x 1` node `root` with seed gradient `seed`.
    pub fn backward(&self, root: NodeId, seed: T) -> Gradients<T> {
        let mut grads: Vec<Option<Matrix<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[root.0] = Some(Matrix::filled(1, 1, seed));

        for idx in (0..=root.0).rev() {
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            let Some(gout) = grads[idx].take() else {
                continue;
            };
            self.propagate(&node.op, &node.value, &gout, &mut grads);
            grads[idx] = Some(gout);
        }
        Gradients { grads }
    }

    fn acc<'g>(&self, grads: &'g mut [Option<Matrix<T>>], id: NodeId) -> Option<&'g mut Matrix<T>> {
        if !self.needs(id) {
            return None;
        }
        let slot = &mut grads[id.0];
        if slot.is_none() {
            let (r, c) = self.value(id).shape();
            *slot = Some(Matrix::zeros(r, c));
        }
        slot.as_mut()
    }

    fn propagate(&self, op: &Op<T>, out: &Matrix<T>, gout: &Matrix<T>, grads: &mut [Option<Matrix<T>>]) {
        match op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                if let Some(ga) = self.acc(grads, *a) {
                    matmul_a_bt_acc(gout, self.value(*b), ga);
                }
                if let Some(gb) = self.acc(grads, *b) {
                    matmul_at_b_acc(self.value(*a), gout, gb);
                }
            }
            Op::AddBias(a, bias) => {
                if let Some(ga) = self.acc(grads, *a) {
                    ga.add_assign(gout);
                }
                if let Some(gb) = self.acc(grads, *bias) {
                    for r in 0..gout.rows() {
                        for (x, &y) in gb.row_mut(0).iter_mut().zip(gout.row(r)) {
                            *x += y;
                        }
                    }
                }
            }
            Op::Add(a, b) => {
                if let Some(ga) = self.acc(grads, *a) {
                    ga.add_assign(gout);
                }
                if let Some(gb) = self.acc(grads, *b) {
                    gb.add_assign(gout);
                }
            }
            Op::Mul(a, b) => {
                if let Some(ga) = self.acc(grads, *a) {
                    let bv = self.value(*b).as_slice();
                    for ((x, &g), &y) in ga.as_mut_slice().iter_mut().zip(gout.as_slice()).zip(bv) {
                        *x += g * y;
                    }
                }
                if let Some(gb) = self.acc(grads, *b) {
                    let av = self.value(*a).as_slice();
                    for ((x, &g), &y) in gb.as_mut_slice().iter_mut().zip(gout.as_slice()).zip(av) {
                        *x += g * y;
                    }
                }
            }
            Op::Sigmoid(a) => {
                if let Some(ga) = self.acc(grads, *a) {
                    for ((x, &g), &s) in ga.as_mut_slice().iter_mut().zip(gout.as_slice()).zip(out.as_slice()) {
                        *x += g * s * (T::one() - s);
                    }
                }
            }
            Op::Tanh(a) => {
                if let Some(ga) = self.acc(grads, *a) {
                    for ((x, &g), &t) in ga.as_mut_slice().iter_mut().zip(gout.as_slice()).zip(out.as_slice()) {
                        *x += g * (T::one() - t * t);
                    }
                }
            }
            Op::Concat(a, b) => {
                let wa = self.value(*a).cols();
                if let Some(ga) = self.acc(grads, *a) {
                    for r in 0..gout.rows() {
                        for (x, &g) in ga.row_mut(r).iter_mut().zip(&gout.row(r)[..wa]) {
                            *x += g;
                        }
                    }
                }
                if let Some(gb) = self.acc(grads, *b) {
                    for r in 0..gout.rows() {
                        for (x, &g) in gb.row_mut(r).iter_mut().zip(&gout.row(r)[wa..]) {
                            *x += g;
                        }
                    }
                }
            }
            Op::SliceCols(a, start) => {
                if let Some(ga) = self.acc(grads, *a) {
                    let w = gout.cols();
                    for r in 0..gout.rows() {
                        for (x, &g) in ga.row_mut(r)[*start..*start + w].iter_mut().zip(gout.row(r)) {
                            *x += g;
                        }
                    }
                }
            }
            Op::Gather(table, ids) => {
                if let Some(gt) = self.acc(grads, *table) {
                    for (r, &id) in ids.iter().enumerate() {
                        for (x, &g) in gt.row_mut(id).iter_mut().zip(gout.row(r)) {
                            *x += g;
                        }
                    }
                }
            }
            Op::Select { new, old, take_new } => {
                if let Some(gn) = self.acc(grads, *new) {
                    for (r, &t) in take_new.iter().enumerate() {
                        if t {
                            for (x, &g) in gn.row_mut(r).iter_mut().zip(gout.row(r)) {
                                *x += g;
                            }
                        }
                    }
                }
                if let Some(go) = self.acc(grads, *old) {
                    for (r, &t) in take_new.iter().enumerate() {
                        if !t {
                            for (x, &g) in go.row_mut(r).iter_mut().zip(gout.row(r)) {
                                *x += g;
                            }
                        }
                    }
                }
            }
            Op::Scale(a, factors) => {
                if let Some(ga) = self.acc(grads, *a) {
                    for ((x, &g), &f) in ga.as_mut_slice().iter_mut().zip(gout.as_slice()).zip(factors) {
                        *x += g * f;
                    }
                }
            }
            Op::Attention(op) => self.attention_backward(op, gout, grads),
            Op::SoftmaxXent {
                logits,
                targets,
                probs,
            } => {
                let seed = gout.get(0, 0);
                if let Some(gl) = self.acc(grads, *logits) {
                    for (r, t) in targets.iter().enumerate() {
                        let Some(t) = *t else { continue };
                        let row = gl.row_mut(r);
                        for (x, &p) in row.iter_mut().zip(probs.row(r)) {
                            *x += seed * p;
                        }
                        row[t] -= seed;
                    }
                }
            }
            Op::Sum(items) => {
                let seed = gout.get(0, 0);
                for &i in items {
                    if let Some(g) = self.acc(grads, i) {
                        let v = g.get(0, 0);
                        g.set(0, 0, v + seed);
                    }
                }
            }
        }
    }

    fn attention_backward(&self, op: &AttentionOp<T>, gout: &Matrix<T>, grads: &mut [Option<Matrix<T>>]) {
        let d = self.value(op.query).cols();
        let batch = gout.rows();
        let mut dquery = Matrix::zeros(batch, d);
        let mut dw = self.needs(op.position_w).then(|| Matrix::zeros(d, d));
        let mut dv = self.needs(op.position_v).then(|| Matrix::zeros(d, 1));
        let mut dstates: Vec<Option<Matrix<T>>> = op
            .states
            .iter()
            .map(|&s| self.needs(s).then(|| Matrix::zeros(batch, d)))
            .collect();

        let q = self.value(op.query);
        let pw = self.value(op.position_w);
        let pv = self.value(op.position_v);
        for r in 0..batch {
            let Some(att) = &op.rows[r] else { continue };
            let state = |j: usize| self.nodes[op.states[j].0].value.row(r);
            attend_row_backward(
                att,
                q.row(r),
                state,
                pw,
                pv,
                op.kind,
                gout.row(r),
                RowGrads {
                    dquery: dquery.row_mut(r),
                    dposition_w: dw.as_mut(),
                    dposition_v: dv.as_mut(),
                },
                |j, vec, k| {
                    if let Some(ds) = dstates[j].as_mut() {
                        for (x, &y) in ds.row_mut(r).iter_mut().zip(vec) {
                            *x += k * y;
                        }
                    }
                },
            );
        }

        if let Some(g) = self.acc(grads, op.query) {
            g.add_assign(&dquery);
        }
        if let (Some(src), Some(g)) = (dw, self.acc(grads, op.position_w)) {
            g.add_assign(&src);
        }
        if let (Some(src), Some(g)) = (dv, self.acc(grads, op.position_v)) {
            g.add_assign(&src);
        }
        for (j, ds) in dstates.into_iter().enumerate() {
            if let (Some(src), Some(g)) = (ds, self.acc(grads, op.states[j])) {
                g.add_assign(&src);
            }
        }
    }
}

