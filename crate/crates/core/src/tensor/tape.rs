//! Reverse-mode differentiation over a linear tape of tensor operations.
//!
//! Every operation appends a node holding its forward value. Nodes only ever
//! reference earlier nodes, so the tape order is a topological order and
//! [`Tape::backward`] can walk it in reverse, visiting each node once.

use super::dense::{gemm_nn, gemm_nt, gemm_tn};
use super::{Tensor, TensorError};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Scale(NodeId, f64),
    AddRow(NodeId, NodeId),
    ScaleRows(NodeId, NodeId),
    MatMul(NodeId, NodeId),
    MatMulNt(NodeId, NodeId),
    BatchMatMul(NodeId, NodeId),
    BatchMatMulNt(NodeId, NodeId),
    Transpose(NodeId),
    Reshape(NodeId),
    Softmax(NodeId, f64),
    LogSoftmax(NodeId),
    LogSumExp(NodeId, f64),
    Sum(NodeId),
    SumLast(NodeId),
    GatherRows(NodeId, Vec<usize>),
    GatherEntries(NodeId, Vec<usize>),
    ReplaceEntries(NodeId, Vec<usize>, NodeId),
    ConcatCols(Vec<NodeId>),
    SliceCols(NodeId, usize),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Records tensor operations for a single forward/backward pass.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients of a scalar root with respect to every node that requires them.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, id: NodeId) -> Option<&Tensor> {
        self.grads.get(id.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, id: NodeId) -> Option<Tensor> {
        self.grads.get_mut(id.0).and_then(Option::take)
    }
}

fn shape_err(op: &'static str, a: &Tensor, b: &Tensor) -> TensorError {
    TensorError::Shape {
        op,
        lhs: a.shape().to_vec(),
        rhs: b.shape().to_vec(),
    }
}

fn check_finite(op: &'static str, t: &Tensor) -> Result<(), TensorError> {
    if t.is_finite() {
        Ok(())
    } else {
        Err(TensorError::NumericDomain(format!(
            "{op}: non-finite input"
        )))
    }
}

fn check_beta(op: &'static str, beta: f64) -> Result<(), TensorError> {
    if beta > 0.0 && beta.is_finite() {
        Ok(())
    } else {
        Err(TensorError::NumericDomain(format!(
            "{op}: beta must be positive, got {beta}"
        )))
    }
}

/// Row-wise stable softmax of `beta * row`.
pub(crate) fn softmax_rows(x: &[f64], cols: usize, beta: f64) -> Vec<f64> {
    let mut out = vec![0.0; x.len()];
    for (row, orow) in x.chunks(cols).zip(out.chunks_mut(cols)) {
        let max = row.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(beta * v));
        let mut total = 0.0;
        for (o, &v) in orow.iter_mut().zip(row) {
            *o = (beta * v - max).exp();
            total += *o;
        }
        for o in orow.iter_mut() {
            *o /= total;
        }
    }
    out
}

/// Row-wise `beta^-1 log sum exp(beta * row)`.
pub(crate) fn logsumexp_rows(x: &[f64], cols: usize, beta: f64) -> Vec<f64> {
    x.chunks(cols)
        .map(|row| {
            let max = row.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(beta * v));
            let total: f64 = row.iter().map(|&v| (beta * v - max).exp()).sum();
            (max + total.ln()) / beta
        })
        .collect()
}

fn batch_dims(t: &Tensor, op: &'static str) -> Result<(usize, usize, usize), TensorError> {
    match t.shape() {
        [b, m, n] => Ok((*b, *m, *n)),
        _ => Err(TensorError::Shape {
            op,
            lhs: t.shape().to_vec(),
            rhs: vec![],
        }),
    }
}

fn matrix_dims(t: &Tensor, op: &'static str) -> Result<(usize, usize), TensorError> {
    match t.shape() {
        [m, n] => Ok((*m, *n)),
        _ => Err(TensorError::Shape {
            op,
            lhs: t.shape().to_vec(),
            rhs: vec![],
        }),
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    fn push(&mut self, value: Tensor, op: Op, parents: &[NodeId]) -> NodeId {
        let requires_grad = parents.iter().any(|p| self.nodes[p.0].requires_grad);
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        NodeId(self.nodes.len() - 1)
    }

    /// Registers a leaf; it receives a gradient iff `t.requires_grad`.
    pub fn leaf(&mut self, t: Tensor) -> NodeId {
        let requires_grad = t.requires_grad;
        self.nodes.push(Node {
            value: t,
            op: Op::Leaf,
            requires_grad,
        });
        NodeId(self.nodes.len() - 1)
    }

    pub fn param(&mut self, t: Tensor) -> NodeId {
        self.leaf(t.with_grad(true))
    }

    pub fn constant(&mut self, t: Tensor) -> NodeId {
        self.leaf(t.with_grad(false))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, TensorError> {
        let v = self.value(a).add(self.value(b))?;
        Ok(self.push(v, Op::Add(a, b), &[a, b]))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, TensorError> {
        let v = self.value(a).sub(self.value(b))?;
        Ok(self.push(v, Op::Sub(a, b), &[a, b]))
    }

    /// Elementwise product of equally shaped tensors.
    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, TensorError> {
        let v = self.value(a).zip_with(self.value(b), |x, y| x * y)?;
        Ok(self.push(v, Op::Mul(a, b), &[a, b]))
    }

    pub fn square(&mut self, a: NodeId) -> Result<NodeId, TensorError> {
        self.mul(a, a)
    }

    pub fn scale(&mut self, a: NodeId, c: f64) -> NodeId {
        let v = self.value(a).scale(c);
        self.push(v, Op::Scale(a, c), &[a])
    }

    /// Adds a row vector (`[c]` or `[1, c]`) to every row of `a`.
    pub fn add_row(&mut self, a: NodeId, row: NodeId) -> Result<NodeId, TensorError> {
        let (av, rv) = (self.value(a), self.value(row));
        let c = av.last_dim();
        if rv.len() != c || av.rank() < 1 {
            return Err(shape_err("add_row", av, rv));
        }
        let mut v = av.clone().with_grad(false);
        for chunk in v.data_mut().chunks_mut(c) {
            for (x, r) in chunk.iter_mut().zip(rv.data()) {
                *x += r;
            }
        }
        Ok(self.push(v, Op::AddRow(a, row), &[a, row]))
    }

    /// Multiplies row `i` of `a` by `v[i]`.
    pub fn scale_rows(&mut self, a: NodeId, v: NodeId) -> Result<NodeId, TensorError> {
        let (av, vv) = (self.value(a), self.value(v));
        if vv.len() != av.rows() {
            return Err(shape_err("scale_rows", av, vv));
        }
        let c = av.last_dim();
        let mut out = av.clone().with_grad(false);
        for (chunk, s) in out.data_mut().chunks_mut(c).zip(vv.data()) {
            for x in chunk {
                *x *= s;
            }
        }
        Ok(self.push(out, Op::ScaleRows(a, v), &[a, v]))
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, TensorError> {
        let v = self.value(a).matmul(self.value(b))?;
        Ok(self.push(v, Op::MatMul(a, b), &[a, b]))
    }

    /// `a · bᵀ`.
    pub fn matmul_nt(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, TensorError> {
        let v = self.value(a).matmul_nt(self.value(b))?;
        Ok(self.push(v, Op::MatMulNt(a, b), &[a, b]))
    }

    /// Batched product of `[B, m, k]` and `[B, k, n]`.
    pub fn batch_matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, TensorError> {
        let (av, bv) = (self.value(a), self.value(b));
        let (nb, m, k) = batch_dims(av, "batch_matmul")?;
        let (nb2, k2, n) = batch_dims(bv, "batch_matmul")?;
        if nb != nb2 || k != k2 {
            return Err(shape_err("batch_matmul", av, bv));
        }
        let mut out = vec![0.0; nb * m * n];
        for i in 0..nb {
            gemm_nn(
                &av.data()[i * m * k..(i + 1) * m * k],
                &bv.data()[i * k * n..(i + 1) * k * n],
                &mut out[i * m * n..(i + 1) * m * n],
                m,
                k,
                n,
            );
        }
        let v = Tensor::new(&[nb, m, n], out)?;
        Ok(self.push(v, Op::BatchMatMul(a, b), &[a, b]))
    }

    /// Batched product of `[B, m, k]` and the transpose of `[B, n, k]`.
    pub fn batch_matmul_nt(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, TensorError> {
        let (av, bv) = (self.value(a), self.value(b));
        let (nb, m, k) = batch_dims(av, "batch_matmul_nt")?;
        let (nb2, n, k2) = batch_dims(bv, "batch_matmul_nt")?;
        if nb != nb2 || k != k2 {
            return Err(shape_err("batch_matmul_nt", av, bv));
        }
        let mut out = vec![0.0; nb * m * n];
        for i in 0..nb {
            gemm_nt(
                &av.data()[i * m * k..(i + 1) * m * k],
                &bv.data()[i * n * k..(i + 1) * n * k],
                &mut out[i * m * n..(i + 1) * m * n],
                m,
                k,
                n,
            );
        }
        let v = Tensor::new(&[nb, m, n], out)?;
        Ok(self.push(v, Op::BatchMatMulNt(a, b), &[a, b]))
    }

    pub fn transpose(&mut self, a: NodeId) -> Result<NodeId, TensorError> {
        let v = self.value(a).transpose()?;
        Ok(self.push(v, Op::Transpose(a), &[a]))
    }

    pub fn reshape(&mut self, a: NodeId, shape: &[usize]) -> Result<NodeId, TensorError> {
        let v = self.value(a).reshape(shape)?;
        Ok(self.push(v, Op::Reshape(a), &[a]))
    }

    /// Softmax of `beta * x` along the last axis.
    pub fn softmax(&mut self, a: NodeId, beta: f64) -> Result<NodeId, TensorError> {
        check_beta("softmax", beta)?;
        let av = self.value(a);
        check_finite("softmax", av)?;
        if av.is_empty() {
            return Err(TensorError::NumericDomain("softmax: empty input".into()));
        }
        let v = Tensor::new(av.shape(), softmax_rows(av.data(), av.last_dim(), beta))?;
        Ok(self.push(v, Op::Softmax(a, beta), &[a]))
    }

    pub fn log_softmax(&mut self, a: NodeId) -> Result<NodeId, TensorError> {
        let av = self.value(a);
        check_finite("log_softmax", av)?;
        if av.is_empty() {
            return Err(TensorError::NumericDomain(
                "log_softmax: empty input".into(),
            ));
        }
        let c = av.last_dim();
        let lse = logsumexp_rows(av.data(), c, 1.0);
        let mut v = av.clone().with_grad(false);
        for (chunk, l) in v.data_mut().chunks_mut(c).zip(&lse) {
            for x in chunk {
                *x -= l;
            }
        }
        Ok(self.push(v, Op::LogSoftmax(a), &[a]))
    }

    /// `beta^-1 log sum exp(beta * x)` along the last axis.
    pub fn logsumexp(&mut self, a: NodeId, beta: f64) -> Result<NodeId, TensorError> {
        check_beta("logsumexp", beta)?;
        let av = self.value(a);
        if av.is_empty() || av.last_dim() == 0 {
            return Err(TensorError::NumericDomain("logsumexp: empty input".into()));
        }
        check_finite("logsumexp", av)?;
        let shape = &av.shape()[..av.rank().saturating_sub(1)];
        let v = Tensor::new(shape, logsumexp_rows(av.data(), av.last_dim(), beta))?;
        Ok(self.push(v, Op::LogSumExp(a, beta), &[a]))
    }

    pub fn sum(&mut self, a: NodeId) -> NodeId {
        let v = Tensor::scalar(self.value(a).sum());
        self.push(v, Op::Sum(a), &[a])
    }

    /// Sums along the last axis.
    pub fn sum_last(&mut self, a: NodeId) -> Result<NodeId, TensorError> {
        let av = self.value(a);
        let c = av.last_dim();
        let shape = &av.shape()[..av.rank().saturating_sub(1)];
        let data = av.data().chunks(c).map(|r| r.iter().sum()).collect();
        let v = Tensor::new(shape, data)?;
        Ok(self.push(v, Op::SumLast(a), &[a]))
    }

    /// Selects rows of a rank-2 table.
    pub fn gather_rows(&mut self, table: NodeId, idx: &[usize]) -> Result<NodeId, TensorError> {
        let tv = self.value(table);
        let (r, c) = matrix_dims(tv, "gather_rows")?;
        if let Some(&bad) = idx.iter().find(|&&i| i >= r) {
            return Err(TensorError::Contract(format!(
                "gather_rows: row {bad} out of range for {r} rows"
            )));
        }
        let mut data = Vec::with_capacity(idx.len() * c);
        for &i in idx {
            data.extend_from_slice(tv.row(i));
        }
        let v = Tensor::new(&[idx.len(), c], data)?;
        Ok(self.push(v, Op::GatherRows(table, idx.to_vec()), &[table]))
    }

    /// Selects entries by flat (row-major) index into a rank-1 result.
    pub fn gather_entries(&mut self, a: NodeId, idx: &[usize]) -> Result<NodeId, TensorError> {
        let av = self.value(a);
        if let Some(&bad) = idx.iter().find(|&&i| i >= av.len()) {
            return Err(TensorError::Contract(format!(
                "gather_entries: index {bad} out of range for {} entries",
                av.len()
            )));
        }
        let v = Tensor::vector(idx.iter().map(|&i| av.data()[i]).collect());
        Ok(self.push(v, Op::GatherEntries(a, idx.to_vec()), &[a]))
    }

    /// Copy of `a` with the entries at flat indices `idx` overwritten by `values`.
    /// Indices must be distinct.
    pub fn replace_entries(
        &mut self,
        a: NodeId,
        idx: &[usize],
        values: NodeId,
    ) -> Result<NodeId, TensorError> {
        let (av, vv) = (self.value(a), self.value(values));
        if vv.len() != idx.len() {
            return Err(shape_err("replace_entries", av, vv));
        }
        if let Some(&bad) = idx.iter().find(|&&i| i >= av.len()) {
            return Err(TensorError::Contract(format!(
                "replace_entries: index {bad} out of range for {} entries",
                av.len()
            )));
        }
        let mut v = av.clone().with_grad(false);
        for (&i, &x) in idx.iter().zip(vv.data()) {
            v.data_mut()[i] = x;
        }
        Ok(self.push(v, Op::ReplaceEntries(a, idx.to_vec(), values), &[a, values]))
    }

    /// Concatenates rank-2 tensors with equal row counts along columns.
    pub fn concat_cols(&mut self, parts: &[NodeId]) -> Result<NodeId, TensorError> {
        let first = parts
            .first()
            .ok_or_else(|| TensorError::Contract("concat_cols: no inputs".into()))?;
        let (rows, _) = matrix_dims(self.value(*first), "concat_cols")?;
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let (r, c) = matrix_dims(self.value(p), "concat_cols")?;
            if r != rows {
                return Err(shape_err("concat_cols", self.value(*first), self.value(p)));
            }
            widths.push(c);
        }
        let total: usize = widths.iter().sum();
        let mut data = Vec::with_capacity(rows * total);
        for i in 0..rows {
            for &p in parts {
                data.extend_from_slice(self.value(p).row(i));
            }
        }
        let v = Tensor::new(&[rows, total], data)?;
        Ok(self.push(v, Op::ConcatCols(parts.to_vec()), parts))
    }

    /// Columns `start..start + len` of a rank-2 tensor.
    pub fn slice_cols(
        &mut self,
        a: NodeId,
        start: usize,
        len: usize,
    ) -> Result<NodeId, TensorError> {
        let av = self.value(a);
        let (rows, cols) = matrix_dims(av, "slice_cols")?;
        if start + len > cols {
            return Err(TensorError::Contract(format!(
                "slice_cols: {start}..{} exceeds {cols} columns",
                start + len
            )));
        }
        let mut data = Vec::with_capacity(rows * len);
        for i in 0..rows {
            data.extend_from_slice(&av.row(i)[start..start + len]);
        }
        let v = Tensor::new(&[rows, len], data)?;
        Ok(self.push(v, Op::SliceCols(a, start), &[a]))
    }

    /// Reverse pass from a single-element root.
    pub fn backward(&self, root: NodeId) -> Result<Gradients, TensorError> {
        let rv = self.value(root);
        if rv.len() != 1 {
            return Err(TensorError::Contract(format!(
                "backward requires a scalar root, got shape {:?}",
                rv.shape()
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[root.0] = Some(vec![1.0]);

        for id in (0..=root.0).rev() {
            let node = &self.nodes[id];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[id].take() else { continue };
            self.propagate(&node.op, &node.value, &g, &mut grads);
            grads[id] = Some(g);
        }

        let grads = grads
            .into_iter()
            .zip(&self.nodes)
            .map(|(g, n)| match (g, n.requires_grad) {
                (Some(g), true) => Some(Tensor::new(n.value.shape(), g).expect("gradient shape")),
                (None, true) => Some(Tensor::zeros(n.value.shape())),
                _ => None,
            })
            .collect();
        Ok(Gradients { grads })
    }

    fn accumulate(
        &self,
        grads: &mut [Option<Vec<f64>>],
        id: NodeId,
        contrib: impl FnOnce(&mut [f64]),
    ) {
        let node = &self.nodes[id.0];
        if !node.requires_grad {
            return;
        }
        let buf = grads[id.0].get_or_insert_with(|| vec![0.0; node.value.len()]);
        contrib(buf);
    }

    fn propagate(&self, op: &Op, out: &Tensor, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        match op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                self.accumulate(grads, *a, |buf| add_into(buf, g));
                self.accumulate(grads, *b, |buf| add_into(buf, g));
            }
            Op::Sub(a, b) => {
                self.accumulate(grads, *a, |buf| add_into(buf, g));
                self.accumulate(grads, *b, |buf| {
                    for (x, y) in buf.iter_mut().zip(g) {
                        *x -= y;
                    }
                });
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a).data(), self.value(*b).data());
                self.accumulate(grads, *a, |buf| {
                    for ((x, gi), bi) in buf.iter_mut().zip(g).zip(bv) {
                        *x += gi * bi;
                    }
                });
                self.accumulate(grads, *b, |buf| {
                    for ((x, gi), ai) in buf.iter_mut().zip(g).zip(av) {
                        *x += gi * ai;
                    }
                });
            }
            Op::Scale(a, c) => {
                self.accumulate(grads, *a, |buf| {
                    for (x, gi) in buf.iter_mut().zip(g) {
                        *x += c * gi;
                    }
                });
            }
            Op::AddRow(a, row) => {
                self.accumulate(grads, *a, |buf| add_into(buf, g));
                let c = out.last_dim();
                self.accumulate(grads, *row, |buf| {
                    for chunk in g.chunks(c) {
                        add_into(buf, chunk);
                    }
                });
            }
            Op::ScaleRows(a, v) => {
                let c = out.last_dim();
                let (av, vv) = (self.value(*a).data(), self.value(*v).data());
                self.accumulate(grads, *a, |buf| {
                    for ((bchunk, gchunk), s) in buf.chunks_mut(c).zip(g.chunks(c)).zip(vv) {
                        for (x, gi) in bchunk.iter_mut().zip(gchunk) {
                            *x += gi * s;
                        }
                    }
                });
                self.accumulate(grads, *v, |buf| {
                    for ((x, gchunk), achunk) in buf.iter_mut().zip(g.chunks(c)).zip(av.chunks(c)) {
                        *x += gchunk.iter().zip(achunk).map(|(p, q)| p * q).sum::<f64>();
                    }
                });
            }
            Op::MatMul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let (m, k) = (av.shape()[0], av.shape()[1]);
                let n = bv.shape()[1];
                self.accumulate(grads, *a, |buf| gemm_nt(g, bv.data(), buf, m, n, k));
                self.accumulate(grads, *b, |buf| gemm_tn(av.data(), g, buf, k, m, n));
            }
            Op::MatMulNt(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let (m, k) = (av.shape()[0], av.shape()[1]);
                let n = bv.shape()[0];
                self.accumulate(grads, *a, |buf| gemm_nn(g, bv.data(), buf, m, n, k));
                self.accumulate(grads, *b, |buf| gemm_tn(g, av.data(), buf, n, m, k));
            }
            Op::BatchMatMul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let (nb, m, k) = (av.shape()[0], av.shape()[1], av.shape()[2]);
                let n = bv.shape()[2];
                self.accumulate(grads, *a, |buf| {
                    for i in 0..nb {
                        gemm_nt(
                            &g[i * m * n..(i + 1) * m * n],
                            &bv.data()[i * k * n..(i + 1) * k * n],
                            &mut buf[i * m * k..(i + 1) * m * k],
                            m,
                            n,
                            k,
                        );
                    }
                });
                self.accumulate(grads, *b, |buf| {
                    for i in 0..nb {
                        gemm_tn(
                            &av.data()[i * m * k..(i + 1) * m * k],
                            &g[i * m * n..(i + 1) * m * n],
                            &mut buf[i * k * n..(i + 1) * k * n],
                            k,
                            m,
                            n,
                        );
                    }
                });
            }
            Op::BatchMatMulNt(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let (nb, m, k) = (av.shape()[0], av.shape()[1], av.shape()[2]);
                let n = bv.shape()[1];
                self.accumulate(grads, *a, |buf| {
                    for i in 0..nb {
                        gemm_nn(
                            &g[i * m * n..(i + 1) * m * n],
                            &bv.data()[i * n * k..(i + 1) * n * k],
                            &mut buf[i * m * k..(i + 1) * m * k],
                            m,
                            n,
                            k,
                        );
                    }
                });
                self.accumulate(grads, *b, |buf| {
                    for i in 0..nb {
                        gemm_tn(
                            &g[i * m * n..(i + 1) * m * n],
                            &av.data()[i * m * k..(i + 1) * m * k],
                            &mut buf[i * n * k..(i + 1) * n * k],
                            n,
                            m,
                            k,
                        );
                    }
                });
            }
            Op::Transpose(a) => {
                let (m, n) = (out.shape()[1], out.shape()[0]);
                self.accumulate(grads, *a, |buf| {
                    for i in 0..m {
                        for j in 0..n {
                            buf[i * n + j] += g[j * m + i];
                        }
                    }
                });
            }
            Op::Reshape(a) => {
                self.accumulate(grads, *a, |buf| add_into(buf, g));
            }
            Op::Softmax(a, beta) => {
                let c = out.last_dim();
                self.accumulate(grads, *a, |buf| {
                    for ((bchunk, gchunk), ychunk) in
                        buf.chunks_mut(c).zip(g.chunks(c)).zip(out.data().chunks(c))
                    {
                        let dot: f64 = gchunk.iter().zip(ychunk).map(|(p, q)| p * q).sum();
                        for ((x, gi), yi) in bchunk.iter_mut().zip(gchunk).zip(ychunk) {
                            *x += beta * yi * (gi - dot);
                        }
                    }
                });
            }
            Op::LogSoftmax(a) => {
                let c = out.last_dim();
                self.accumulate(grads, *a, |buf| {
                    for ((bchunk, gchunk), ychunk) in
                        buf.chunks_mut(c).zip(g.chunks(c)).zip(out.data().chunks(c))
                    {
                        let total: f64 = gchunk.iter().sum();
                        for ((x, gi), yi) in bchunk.iter_mut().zip(gchunk).zip(ychunk) {
                            *x += gi - yi.exp() * total;
                        }
                    }
                });
            }
            Op::LogSumExp(a, beta) => {
                let av = self.value(*a);
                let c = av.last_dim();
                let p = softmax_rows(av.data(), c, *beta);
                self.accumulate(grads, *a, |buf| {
                    for ((bchunk, pchunk), gi) in buf.chunks_mut(c).zip(p.chunks(c)).zip(g) {
                        for (x, pi) in bchunk.iter_mut().zip(pchunk) {
                            *x += gi * pi;
                        }
                    }
                });
            }
            Op::Sum(a) => {
                self.accumulate(grads, *a, |buf| {
                    for x in buf.iter_mut() {
                        *x += g[0];
                    }
                });
            }
            Op::SumLast(a) => {
                let c = self.value(*a).last_dim();
                self.accumulate(grads, *a, |buf| {
                    for (chunk, gi) in buf.chunks_mut(c).zip(g) {
                        for x in chunk {
                            *x += gi;
                        }
                    }
                });
            }
            Op::GatherRows(table, idx) => {
                let c = out.last_dim();
                self.accumulate(grads, *table, |buf| {
                    for (k, &i) in idx.iter().enumerate() {
                        add_into(&mut buf[i * c..(i + 1) * c], &g[k * c..(k + 1) * c]);
                    }
                });
            }
            Op::GatherEntries(a, idx) => {
                self.accumulate(grads, *a, |buf| {
                    for (k, &i) in idx.iter().enumerate() {
                        buf[i] += g[k];
                    }
                });
            }
            Op::ReplaceEntries(a, idx, values) => {
                self.accumulate(grads, *a, |buf| {
                    add_into(buf, g);
                    for &i in idx {
                        buf[i] -= g[i];
                    }
                });
                self.accumulate(grads, *values, |buf| {
                    for (k, &i) in idx.iter().enumerate() {
                        buf[k] += g[i];
                    }
                });
            }
            Op::ConcatCols(parts) => {
                let total = out.last_dim();
                let mut offset = 0;
                for &p in parts {
                    let w = self.value(p).last_dim();
                    self.accumulate(grads, p, |buf| {
                        for (brow, grow) in buf.chunks_mut(w).zip(g.chunks(total)) {
                            add_into(brow, &grow[offset..offset + w]);
                        }
                    });
                    offset += w;
                }
            }
            Op::SliceCols(a, start) => {
                let cols = self.value(*a).last_dim();
                let w = out.last_dim();
                self.accumulate(grads, *a, |buf| {
                    for (brow, grow) in buf.chunks_mut(cols).zip(g.chunks(w)) {
                        add_into(&mut brow[*start..*start + w], grow);
                    }
                });
            }
        }
    }
}

fn add_into(buf: &mut [f64], g: &[f64]) {
    for (x, y) in buf.iter_mut().zip(g) {
        *x += y;
    }
}
