//! Define-by-run computation graph with reverse-mode differentiation.
//!
//! Every operation appends a node holding its forward value; node order is a
//! topological order, so [`Graph::backward`] sweeps the node list in reverse.
//! All shapes are rank 2. Binary elementwise ops broadcast any operand
//! dimension of size 1.

use crate::error::{Result, TensorError};
use crate::params::{Gradients, ParamId, ParamStore};
use crate::tensor::{matmul_acc_at, matmul_acc_bt, Tensor};

/// Handle to a node in a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    Rows = 0,
    Cols = 1,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pool {
    Sum,
    Mean,
}

#[derive(Debug)]
enum Op {
    Leaf,
    Param(ParamId),
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Affine {
        x: Var,
        scale: f64,
    },
    Concat {
        inputs: Vec<Var>,
        axis: Axis,
    },
    Slice {
        x: Var,
        axis: Axis,
        start: usize,
    },
    Sum {
        x: Var,
        axis: Axis,
    },
    Mean {
        x: Var,
        axis: Axis,
    },
    SumAll(Var),
    Sigmoid(Var),
    Tanh(Var),
    Relu(Var),
    Softmax(Var),
    SqNorm(Var),
    Gather {
        table: Var,
        indices: Vec<usize>,
    },
    GatherPool {
        table: Var,
        groups: Vec<Vec<usize>>,
        pool: Pool,
    },
    BceWithLogits {
        logits: Var,
        labels: Vec<f64>,
    },
}

#[derive(Debug)]
struct Node {
    op: Op,
    value: Tensor,
}

/// A single-threaded computation graph.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    leaf_grads: Vec<Option<Vec<f64>>>,
}

fn mismatch(op: &'static str, a: &Tensor, b: &Tensor) -> TensorError {
    TensorError::ShapeMismatch {
        op,
        lhs: a.shape().to_vec(),
        rhs: b.shape().to_vec(),
    }
}

fn broadcast_dims(op: &'static str, a: &Tensor, b: &Tensor) -> Result<(usize, usize)> {
    let (ar, ac) = a.dims2(op)?;
    let (br, bc) = b.dims2(op)?;
    let join = |x: usize, y: usize| {
        if x == y || y == 1 {
            Some(x)
        } else if x == 1 {
            Some(y)
        } else {
            None
        }
    };
    match (join(ar, br), join(ac, bc)) {
        (Some(r), Some(c)) => Ok((r, c)),
        _ => Err(mismatch(op, a, b)),
    }
}

#[inline]
fn bidx(rows: usize, cols: usize, i: usize, j: usize) -> usize {
    let r = if rows == 1 { 0 } else { i };
    let c = if cols == 1 { 0 } else { j };
    r * cols + c
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, op: Op, value: Tensor) -> Var {
        self.nodes.push(Node { op, value });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// A leaf whose gradient is retained by [`Graph::backward`].
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(Op::Leaf, value)
    }

    /// Alias of [`Graph::leaf`] for inputs whose gradient is not needed.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(Op::Leaf, value)
    }

    pub fn scalar(&mut self, value: f64) -> Var {
        self.constant(Tensor::scalar(value))
    }

    /// A leaf bound to a stored parameter; its gradient is reported under `id`.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        self.push(Op::Param(id), store.get(id).clone())
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul(self.value(b))?;
        Ok(self.push(Op::MatMul(a, b), value))
    }

    fn binary(&mut self, a: Var, b: Var, op: &'static str, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        let (ta, tb) = (self.value(a), self.value(b));
        let (r, c) = broadcast_dims(op, ta, tb)?;
        let (ar, ac) = (ta.rows(), ta.cols());
        let (br, bc) = (tb.rows(), tb.cols());
        let (da, db) = (ta.data(), tb.data());
        let mut out = Vec::with_capacity(r * c);
        for i in 0..r {
            for j in 0..c {
                out.push(f(da[bidx(ar, ac, i, j)], db[bidx(br, bc, i, j)]));
            }
        }
        Tensor::matrix(r, c, out)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.binary(a, b, "add", |x, y| x + y)?;
        Ok(self.push(Op::Add(a, b), v))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.binary(a, b, "sub", |x, y| x - y)?;
        Ok(self.push(Op::Sub(a, b), v))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.binary(a, b, "mul", |x, y| x * y)?;
        Ok(self.push(Op::Mul(a, b), v))
    }

    /// `scale * x + shift`.
    pub fn affine(&mut self, x: Var, scale: f64, shift: f64) -> Var {
        let v = self.value(x).map(|e| scale * e + shift);
        self.push(Op::Affine { x, scale }, v)
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Var {
        self.affine(x, factor, 0.0)
    }

    pub fn add_scalar(&mut self, x: Var, shift: f64) -> Var {
        self.affine(x, 1.0, shift)
    }

    pub fn concat(&mut self, inputs: &[Var], axis: Axis) -> Result<Var> {
        let first = inputs.first().ok_or(TensorError::InvalidArgument {
            op: "concat",
            reason: "no inputs".into(),
        })?;
        let (r0, c0) = self.value(*first).dims2("concat")?;
        let mut total = 0;
        for &v in inputs {
            let t = self.value(v);
            let (r, c) = t.dims2("concat")?;
            let ok = match axis {
                Axis::Rows => c == c0,
                Axis::Cols => r == r0,
            };
            if !ok {
                return Err(mismatch("concat", self.value(*first), t));
            }
            total += if axis == Axis::Rows { r } else { c };
        }
        let value = match axis {
            Axis::Rows => {
                let mut data = Vec::with_capacity(total * c0);
                for &v in inputs {
                    data.extend_from_slice(self.value(v).data());
                }
                Tensor::matrix(total, c0, data)?
            }
            Axis::Cols => {
                let mut data = Vec::with_capacity(r0 * total);
                for i in 0..r0 {
                    for &v in inputs {
                        data.extend_from_slice(self.value(v).row_slice(i));
                    }
                }
                Tensor::matrix(r0, total, data)?
            }
        };
        Ok(self.push(
            Op::Concat {
                inputs: inputs.to_vec(),
                axis,
            },
            value,
        ))
    }

    /// Rows or columns `start..end`.
    pub fn slice(&mut self, x: Var, axis: Axis, start: usize, end: usize) -> Result<Var> {
        let t = self.value(x);
        let (r, c) = t.dims2("slice")?;
        let bound = if axis == Axis::Rows { r } else { c };
        if start > end || end > bound {
            return Err(TensorError::InvalidArgument {
                op: "slice",
                reason: format!("range {start}..{end} outside 0..{bound}"),
            });
        }
        let value = match axis {
            Axis::Rows => Tensor::matrix(end - start, c, t.data()[start * c..end * c].to_vec())?,
            Axis::Cols => {
                let mut data = Vec::with_capacity(r * (end - start));
                for i in 0..r {
                    data.extend_from_slice(&t.row_slice(i)[start..end]);
                }
                Tensor::matrix(r, end - start, data)?
            }
        };
        Ok(self.push(Op::Slice { x, axis, start }, value))
    }

    fn reduce(&self, x: Var, axis: Axis) -> Result<Tensor> {
        let t = self.value(x);
        let (r, c) = t.dims2("sum")?;
        Ok(match axis {
            Axis::Rows => {
                let mut out = vec![0.0; c];
                for i in 0..r {
                    for (o, v) in out.iter_mut().zip(t.row_slice(i)) {
                        *o += v;
                    }
                }
                Tensor::matrix(1, c, out)?
            }
            Axis::Cols => {
                let out = (0..r).map(|i| t.row_slice(i).iter().sum()).collect();
                Tensor::matrix(r, 1, out)?
            }
        })
    }

    /// Sum along `axis`, keeping it as a dimension of size 1.
    pub fn sum(&mut self, x: Var, axis: Axis) -> Result<Var> {
        let v = self.reduce(x, axis)?;
        Ok(self.push(Op::Sum { x, axis }, v))
    }

    /// Mean along `axis`, keeping it as a dimension of size 1.
    pub fn mean(&mut self, x: Var, axis: Axis) -> Result<Var> {
        let t = self.value(x);
        let n = if axis == Axis::Rows { t.rows() } else { t.cols() };
        if n == 0 {
            return Err(TensorError::InvalidArgument {
                op: "mean",
                reason: "empty axis".into(),
            });
        }
        let v = self.reduce(x, axis)?.map(|s| s / n as f64);
        Ok(self.push(Op::Mean { x, axis }, v))
    }

    pub fn sum_all(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().sum();
        self.push(Op::SumAll(x), Tensor::scalar(s))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let v = self.value(x).map(sigmoid);
        self.push(Op::Sigmoid(x), v)
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let v = self.value(x).map(f64::tanh);
        self.push(Op::Tanh(x), v)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let v = self.value(x).map(|e| e.max(0.0));
        self.push(Op::Relu(x), v)
    }

    /// `max(x, 0)`; the margin hinge.
    pub fn hinge(&mut self, x: Var) -> Var {
        self.relu(x)
    }

    /// Row-wise softmax over the last axis.
    pub fn softmax(&mut self, x: Var) -> Result<Var> {
        let t = self.value(x);
        let (r, c) = t.dims2("softmax")?;
        let mask = vec![true; r * c];
        let v = masked_softmax_rows(t, &mask);
        Ok(self.push(Op::Softmax(x), v))
    }

    /// Row-wise softmax restricted to entries where `mask` is true; masked
    /// entries are 0 and a fully masked row is all zeros.
    pub fn masked_softmax(&mut self, x: Var, mask: Vec<bool>) -> Result<Var> {
        let t = self.value(x);
        let (r, c) = t.dims2("masked_softmax")?;
        if mask.len() != r * c {
            return Err(TensorError::ShapeMismatch {
                op: "masked_softmax",
                lhs: vec![r, c],
                rhs: vec![mask.len()],
            });
        }
        let v = masked_softmax_rows(t, &mask);
        Ok(self.push(Op::Softmax(x), v))
    }

    /// Squared L2 norm of the whole tensor, as a `[1, 1]` scalar.
    pub fn sq_norm(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().map(|v| v * v).sum();
        self.push(Op::SqNorm(x), Tensor::scalar(s))
    }

    /// Row-wise squared L2 norm, `[n, d] -> [n, 1]`.
    pub fn row_sq_norm(&mut self, x: Var) -> Result<Var> {
        let sq = self.mul(x, x)?;
        self.sum(sq, Axis::Cols)
    }

    /// Row-wise dot product of equally shaped matrices, `[n, d] -> [n, 1]`.
    pub fn row_dot(&mut self, a: Var, b: Var) -> Result<Var> {
        let p = self.mul(a, b)?;
        self.sum(p, Axis::Cols)
    }

    /// Selects rows of `table`; the backward pass scatter-adds into a dense gradient.
    pub fn gather(&mut self, table: Var, indices: &[usize]) -> Result<Var> {
        let t = self.value(table);
        let (rows, d) = t.dims2("gather")?;
        let mut data = Vec::with_capacity(indices.len() * d);
        for &i in indices {
            if i >= rows {
                return Err(TensorError::IndexOutOfRange {
                    op: "gather",
                    index: i,
                    bound: rows,
                });
            }
            data.extend_from_slice(t.row_slice(i));
        }
        let v = Tensor::matrix(indices.len(), d, data)?;
        Ok(self.push(
            Op::Gather {
                table,
                indices: indices.to_vec(),
            },
            v,
        ))
    }

    /// One output row per group: the sum or mean of the group's table rows.
    /// Empty groups yield a zero row.
    pub fn gather_pool(&mut self, table: Var, groups: Vec<Vec<usize>>, pool: Pool) -> Result<Var> {
        let t = self.value(table);
        let (rows, d) = t.dims2("gather_pool")?;
        let mut data = vec![0.0; groups.len() * d];
        for (g, group) in groups.iter().enumerate() {
            let out = &mut data[g * d..(g + 1) * d];
            for &i in group {
                if i >= rows {
                    return Err(TensorError::IndexOutOfRange {
                        op: "gather_pool",
                        index: i,
                        bound: rows,
                    });
                }
                for (o, v) in out.iter_mut().zip(t.row_slice(i)) {
                    *o += v;
                }
            }
            if pool == Pool::Mean && !group.is_empty() {
                let n = group.len() as f64;
                out.iter_mut().for_each(|o| *o /= n);
            }
        }
        let v = Tensor::matrix(groups.len(), d, data)?;
        Ok(self.push(Op::GatherPool { table, groups, pool }, v))
    }

    /// Mean binary cross-entropy of `sigmoid(logits)` against `labels`, computed stably.
    pub fn bce_with_logits(&mut self, logits: Var, labels: &[f64]) -> Result<Var> {
        let t = self.value(logits);
        if t.len() != labels.len() || labels.is_empty() {
            return Err(TensorError::ShapeMismatch {
                op: "bce_with_logits",
                lhs: t.shape().to_vec(),
                rhs: vec![labels.len()],
            });
        }
        let n = labels.len() as f64;
        let total: f64 = t
            .data()
            .iter()
            .zip(labels)
            .map(|(&z, &y)| z.max(0.0) - z * y + (-z.abs()).exp().ln_1p())
            .sum();
        Ok(self.push(
            Op::BceWithLogits {
                logits,
                labels: labels.to_vec(),
            },
            Tensor::scalar(total / n),
        ))
    }

    /// Propagates d(root)/d(node) to every reachable leaf and adds it into the
    /// retained leaf gradients. Calling twice without [`Graph::zero_grad`] sums.
    pub fn backward(&mut self, root: Var) -> Result<()> {
        let rv = &self.nodes[root.0].value;
        if rv.len() != 1 {
            return Err(TensorError::NonScalarRoot(rv.shape().to_vec()));
        }
        let mut grads: Vec<Option<Vec<f64>>> = Vec::with_capacity(root.0 + 1);
        grads.resize_with(root.0 + 1, || None);
        grads[root.0] = Some(vec![1.0]);

        for idx in (0..=root.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Leaf | Op::Param(_) => {
                    if self.leaf_grads.len() <= idx {
                        self.leaf_grads.resize(idx + 1, None);
                    }
                    match &mut self.leaf_grads[idx] {
                        Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, b)| *a += b),
                        slot @ None => *slot = Some(g),
                    }
                    continue;
                }
                op => {
                    backprop(&self.nodes, node, op, &g, &mut grads);
                }
            }
        }
        Ok(())
    }

    /// Retained gradient of a leaf, if backward reached it.
    pub fn grad(&self, v: Var) -> Option<Tensor> {
        let g = self.leaf_grads.get(v.0)?.as_ref()?;
        Some(Tensor::new(self.nodes[v.0].value.shape().to_vec(), g.clone()).expect("grad shape"))
    }

    /// Accumulated gradients of all parameter leaves, summed per [`ParamId`].
    pub fn param_gradients(&self) -> Gradients {
        let mut out = Gradients::new();
        for (idx, node) in self.nodes.iter().enumerate() {
            if let Op::Param(id) = node.op {
                if let Some(Some(g)) = self.leaf_grads.get(idx) {
                    out.accumulate(id, node.value.shape(), g);
                }
            }
        }
        out
    }

    pub fn zero_grad(&mut self) {
        self.leaf_grads.clear();
    }
}

fn masked_softmax_rows(t: &Tensor, mask: &[bool]) -> Tensor {
    let (r, c) = (t.rows(), t.cols());
    let mut out = vec![0.0; r * c];
    for i in 0..r {
        let row = t.row_slice(i);
        let m = &mask[i * c..(i + 1) * c];
        let max = row
            .iter()
            .zip(m)
            .filter(|(_, &keep)| keep)
            .map(|(&v, _)| v)
            .fold(f64::NEG_INFINITY, f64::max);
        if max == f64::NEG_INFINITY {
            continue;
        }
        let o = &mut out[i * c..(i + 1) * c];
        let mut z = 0.0;
        for j in 0..c {
            if m[j] {
                o[j] = (row[j] - max).exp();
                z += o[j];
            }
        }
        o.iter_mut().for_each(|v| *v /= z);
    }
    Tensor::matrix(r, c, out).expect("softmax shape")
}

fn acc(grads: &mut [Option<Vec<f64>>], v: Var, len: usize) -> &mut Vec<f64> {
    grads[v.0].get_or_insert_with(|| vec![0.0; len])
}

/// Adds `g` (shaped `r×c`) into the gradient of `v`, summing over broadcast dims.
fn acc_broadcast(nodes: &[Node], grads: &mut [Option<Vec<f64>>], v: Var, g: &[f64], r: usize, c: usize, sign: f64) {
    let t = &nodes[v.0].value;
    let (vr, vc) = (t.rows(), t.cols());
    let buf = acc(grads, v, t.len());
    if vr == r && vc == c {
        buf.iter_mut().zip(g).for_each(|(b, x)| *b += sign * x);
        return;
    }
    for i in 0..r {
        for j in 0..c {
            buf[bidx(vr, vc, i, j)] += sign * g[i * c + j];
        }
    }
}

fn backprop(nodes: &[Node], node: &Node, op: &Op, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
    let out = &node.value;
    let (r, c) = (out.rows(), out.cols());
    match op {
        Op::Leaf | Op::Param(_) => unreachable!(),
        Op::MatMul(a, b) => {
            let (ta, tb) = (&nodes[a.0].value, &nodes[b.0].value);
            let (n, k, m) = (ta.rows(), ta.cols(), tb.cols());
            matmul_acc_bt(g, tb.data(), acc(grads, *a, ta.len()), n, k, m);
            matmul_acc_at(ta.data(), g, acc(grads, *b, tb.len()), n, k, m);
        }
        Op::Add(a, b) => {
            acc_broadcast(nodes, grads, *a, g, r, c, 1.0);
            acc_broadcast(nodes, grads, *b, g, r, c, 1.0);
        }
        Op::Sub(a, b) => {
            acc_broadcast(nodes, grads, *a, g, r, c, 1.0);
            acc_broadcast(nodes, grads, *b, g, r, c, -1.0);
        }
        Op::Mul(a, b) => {
            let (ta, tb) = (&nodes[a.0].value, &nodes[b.0].value);
            let (ar, ac, br, bc) = (ta.rows(), ta.cols(), tb.rows(), tb.cols());
            let mut ga = vec![0.0; r * c];
            let mut gb = vec![0.0; r * c];
            for i in 0..r {
                for j in 0..c {
                    let k = i * c + j;
                    ga[k] = g[k] * tb.data()[bidx(br, bc, i, j)];
                    gb[k] = g[k] * ta.data()[bidx(ar, ac, i, j)];
                }
            }
            acc_broadcast(nodes, grads, *a, &ga, r, c, 1.0);
            acc_broadcast(nodes, grads, *b, &gb, r, c, 1.0);
        }
        Op::Affine { x, scale } => {
            let buf = acc(grads, *x, g.len());
            buf.iter_mut().zip(g).for_each(|(b, v)| *b += scale * v);
        }
        Op::Concat { inputs, axis } => {
            let mut offset = 0;
            for v in inputs {
                let t = &nodes[v.0].value;
                let (vr, vc) = (t.rows(), t.cols());
                let buf = acc(grads, *v, t.len());
                match axis {
                    Axis::Rows => {
                        buf.iter_mut()
                            .zip(&g[offset * c..(offset + vr) * c])
                            .for_each(|(b, x)| *b += x);
                        offset += vr;
                    }
                    Axis::Cols => {
                        for i in 0..vr {
                            let src = &g[i * c + offset..i * c + offset + vc];
                            buf[i * vc..(i + 1) * vc].iter_mut().zip(src).for_each(|(b, x)| *b += x);
                        }
                        offset += vc;
                    }
                }
            }
        }
        Op::Slice { x, axis, start } => {
            let t = &nodes[x.0].value;
            let xc = t.cols();
            let buf = acc(grads, *x, t.len());
            match axis {
                Axis::Rows => buf[start * xc..(start + r) * xc]
                    .iter_mut()
                    .zip(g)
                    .for_each(|(b, v)| *b += v),
                Axis::Cols => {
                    for i in 0..r {
                        for j in 0..c {
                            buf[i * xc + start + j] += g[i * c + j];
                        }
                    }
                }
            }
        }
        Op::Sum { x, axis } | Op::Mean { x, axis } => {
            let t = &nodes[x.0].value;
            let (xr, xc) = (t.rows(), t.cols());
            let div = match op {
                Op::Mean { .. } => (if *axis == Axis::Rows { xr } else { xc }) as f64,
                _ => 1.0,
            };
            let buf = acc(grads, *x, t.len());
            for i in 0..xr {
                for j in 0..xc {
                    let gi = if *axis == Axis::Rows { j } else { i };
                    buf[i * xc + j] += g[gi] / div;
                }
            }
        }
        Op::SumAll(x) => {
            let buf = acc(grads, *x, nodes[x.0].value.len());
            buf.iter_mut().for_each(|b| *b += g[0]);
        }
        Op::Sigmoid(x) => {
            let buf = acc(grads, *x, g.len());
            for ((b, &y), &gv) in buf.iter_mut().zip(out.data()).zip(g) {
                *b += gv * y * (1.0 - y);
            }
        }
        Op::Tanh(x) => {
            let buf = acc(grads, *x, g.len());
            for ((b, &y), &gv) in buf.iter_mut().zip(out.data()).zip(g) {
                *b += gv * (1.0 - y * y);
            }
        }
        Op::Relu(x) => {
            let inp = nodes[x.0].value.data();
            let buf = acc(grads, *x, g.len());
            for ((b, &xv), &gv) in buf.iter_mut().zip(inp).zip(g) {
                if xv > 0.0 {
                    *b += gv;
                }
            }
        }
        // masked entries have y = 0, so they receive no gradient
        Op::Softmax(x) => {
            let buf = acc(grads, *x, g.len());
            for i in 0..r {
                let y = out.row_slice(i);
                let gr = &g[i * c..(i + 1) * c];
                let dot: f64 = y.iter().zip(gr).map(|(a, b)| a * b).sum();
                for j in 0..c {
                    buf[i * c + j] += y[j] * (gr[j] - dot);
                }
            }
        }
        Op::SqNorm(x) => {
            let inp = nodes[x.0].value.data();
            let buf = acc(grads, *x, inp.len());
            for (b, &xv) in buf.iter_mut().zip(inp) {
                *b += 2.0 * xv * g[0];
            }
        }
        Op::Gather { table, indices } => {
            let t = &nodes[table.0].value;
            let d = t.cols();
            let buf = acc(grads, *table, t.len());
            for (k, &i) in indices.iter().enumerate() {
                let src = &g[k * d..(k + 1) * d];
                buf[i * d..(i + 1) * d].iter_mut().zip(src).for_each(|(b, x)| *b += x);
            }
        }
        Op::GatherPool { table, groups, pool } => {
            let t = &nodes[table.0].value;
            let d = t.cols();
            let buf = acc(grads, *table, t.len());
            for (k, group) in groups.iter().enumerate() {
                if group.is_empty() {
                    continue;
                }
                let w = match pool {
                    Pool::Sum => 1.0,
                    Pool::Mean => 1.0 / group.len() as f64,
                };
                let src = &g[k * d..(k + 1) * d];
                for &i in group {
                    buf[i * d..(i + 1) * d]
                        .iter_mut()
                        .zip(src)
                        .for_each(|(b, x)| *b += w * x);
                }
            }
        }
        Op::BceWithLogits { logits, labels } => {
            let z = nodes[logits.0].value.data();
            let n = labels.len() as f64;
            let buf = acc(grads, *logits, z.len());
            for ((b, &zv), &y) in buf.iter_mut().zip(z).zip(labels) {
                *b += g[0] * (sigmoid(zv) - y) / n;
            }
        }
    }
}
