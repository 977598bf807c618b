use crate::error::{Error, Result};

use super::tensor::{gemm_acc, gemm_nt_acc, gemm_tn_acc, Tensor};

/// Handle to a node of a [`Graph`]. Only meaningful for the graph that
/// issued it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf { trainable: bool },
    MatMul(NodeId, NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Scale(NodeId, f64),
    Pow(NodeId, u32),
    Relu(NodeId),
    Transpose(NodeId),
    Reshape(NodeId),
    SelectRow(NodeId, usize),
    Concat(Vec<NodeId>),
    Sum(NodeId),
    Conv1d {
        input: NodeId,
        kernels: NodeId,
        stride: usize,
        pad: usize,
        cols: Tensor,
    },
    GlobalMaxPool {
        input: NodeId,
        argmax: Vec<usize>,
    },
    SoftmaxCrossEntropy {
        logits: NodeId,
        label: usize,
        probs: Vec<f64>,
    },
}

impl Op {
    fn kind(&self) -> &'static str {
        match self {
            Op::Leaf { .. } => "leaf",
            Op::MatMul(..) => "matmul",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Scale(..) => "scale",
            Op::Pow(..) => "elementwise_pow",
            Op::Relu(..) => "relu",
            Op::Transpose(..) => "transpose",
            Op::Reshape(..) => "reshape",
            Op::SelectRow(..) => "select_row",
            Op::Concat(..) => "concat",
            Op::Sum(..) => "sum",
            Op::Conv1d { .. } => "conv1d",
            Op::GlobalMaxPool { .. } => "global_max_pool_time",
            Op::SoftmaxCrossEntropy { .. } => "softmax_cross_entropy",
        }
    }
}

#[derive(Debug, Clone)]
struct Node {
    op: Op,
    value: Tensor,
}

/// Define-by-run computation graph with reverse-mode differentiation.
///
/// Nodes are appended in evaluation order, so node ids are always
/// topologically sorted. A graph is single-use: build it, call
/// [`Graph::backward`] once per scalar root, drop it.
#[derive(Debug, Default, Clone)]
pub struct Graph {
    nodes: Vec<Node>,
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

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    pub fn op_kind(&self, id: NodeId) -> &'static str {
        self.nodes[id.0].op.kind()
    }

    pub fn is_trainable(&self, id: NodeId) -> bool {
        matches!(self.nodes[id.0].op, Op::Leaf { trainable: true })
    }

    fn push(&mut self, op: Op, value: Tensor) -> NodeId {
        self.nodes.push(Node { op, value });
        NodeId(self.nodes.len() - 1)
    }

    /// Trainable leaf.
    pub fn param(&mut self, value: Tensor) -> NodeId {
        self.push(Op::Leaf { trainable: true }, value)
    }

    /// Constant leaf.
    pub fn input(&mut self, value: Tensor) -> NodeId {
        self.push(Op::Leaf { trainable: false }, value)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (va, vb) = (self.value(a), self.value(b));
        let (m, k) = va.dims2()?;
        let (k2, n) = vb.dims2()?;
        if k != k2 {
            return Err(Error::ShapeMismatch {
                op: "matmul",
                lhs: va.shape().to_vec(),
                rhs: vb.shape().to_vec(),
            });
        }
        let mut out = vec![0.0; m * n];
        gemm_acc(va.data(), vb.data(), &mut out, m, k, n);
        Ok(self.push(Op::MatMul(a, b), Tensor::from_parts(vec![m, n], out)))
    }

    fn broadcast_shape(&self, op: &'static str, a: NodeId, b: NodeId) -> Result<Vec<usize>> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() == vb.shape() {
            return Ok(va.shape().to_vec());
        }
        let err = || Error::ShapeMismatch {
            op,
            lhs: va.shape().to_vec(),
            rhs: vb.shape().to_vec(),
        };
        let (ra, ca) = va.dims2().map_err(|_| err())?;
        let (rb, cb) = vb.dims2().map_err(|_| err())?;
        let dim = |x: usize, y: usize| match (x, y) {
            _ if x == y => Some(x),
            (1, y) => Some(y),
            (x, 1) => Some(x),
            _ => None,
        };
        match (dim(ra, rb), dim(ca, cb)) {
            (Some(r), Some(c)) => Ok(vec![r, c]),
            _ => Err(err()),
        }
    }

    fn broadcast_binary(
        &mut self,
        op: &'static str,
        a: NodeId,
        b: NodeId,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<(Vec<usize>, Vec<f64>)> {
        let shape = self.broadcast_shape(op, a, b)?;
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() == vb.shape() {
            let data = va.data().iter().zip(vb.data()).map(|(&x, &y)| f(x, y)).collect();
            return Ok((shape, data));
        }
        let (r, c) = (shape[0], shape[1]);
        let (ra, ca) = va.dims2()?;
        let (rb, cb) = vb.dims2()?;
        let mut data = Vec::with_capacity(r * c);
        for i in 0..r {
            for j in 0..c {
                let x = va.data()[(i % ra) * ca + (j % ca)];
                let y = vb.data()[(i % rb) * cb + (j % cb)];
                data.push(f(x, y));
            }
        }
        Ok((shape, data))
    }

    /// Elementwise sum with row/column broadcasting of size-1 extents.
    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (shape, data) = self.broadcast_binary("add", a, b, |x, y| x + y)?;
        Ok(self.push(Op::Add(a, b), Tensor::from_parts(shape, data)))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (shape, data) = self.broadcast_binary("sub", a, b, |x, y| x - y)?;
        Ok(self.push(Op::Sub(a, b), Tensor::from_parts(shape, data)))
    }

    /// Elementwise (Hadamard) product with broadcasting.
    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (shape, data) = self.broadcast_binary("mul", a, b, |x, y| x * y)?;
        Ok(self.push(Op::Mul(a, b), Tensor::from_parts(shape, data)))
    }

    pub fn scale(&mut self, a: NodeId, factor: f64) -> NodeId {
        let value = self.value(a).map(|v| v * factor);
        self.push(Op::Scale(a, factor), value)
    }

    /// Raises every element to a non-negative integer power. `0^0 = 1`.
    pub fn pow(&mut self, a: NodeId, k: u32) -> NodeId {
        let value = if k == 1 {
            self.value(a).clone()
        } else {
            self.value(a).map(|v| powi(v, k))
        };
        self.push(Op::Pow(a, k), value)
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        let value = self.value(a).map(|v| v.max(0.0));
        self.push(Op::Relu(a), value)
    }

    pub fn transpose(&mut self, a: NodeId) -> Result<NodeId> {
        let va = self.value(a);
        let (r, c) = va.dims2()?;
        let mut data = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                data[j * r + i] = va.data()[i * c + j];
            }
        }
        Ok(self.push(Op::Transpose(a), Tensor::from_parts(vec![c, r], data)))
    }

    pub fn reshape(&mut self, a: NodeId, shape: Vec<usize>) -> Result<NodeId> {
        let value = self.value(a).reshape(shape)?;
        Ok(self.push(Op::Reshape(a), value))
    }

    /// Row `r` of a matrix as a `[1×C]` matrix.
    pub fn select_row(&mut self, a: NodeId, r: usize) -> Result<NodeId> {
        let va = self.value(a);
        let (rows, cols) = va.dims2()?;
        if r >= rows {
            return Err(Error::InvalidShape {
                shape: va.shape().to_vec(),
                reason: format!("row {r} out of range"),
            });
        }
        let data = va.data()[r * cols..(r + 1) * cols].to_vec();
        Ok(self.push(Op::SelectRow(a, r), Tensor::from_parts(vec![1, cols], data)))
    }

    /// Concatenates the flattened inputs into one vector.
    pub fn concat(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        if parts.is_empty() {
            return Err(Error::InvalidShape {
                shape: vec![],
                reason: "concat of nothing".into(),
            });
        }
        let data: Vec<f64> = parts
            .iter()
            .flat_map(|&p| self.value(p).data().iter().copied())
            .collect();
        let n = data.len();
        Ok(self.push(Op::Concat(parts.to_vec()), Tensor::from_parts(vec![n], data)))
    }

    pub fn sum(&mut self, a: NodeId) -> NodeId {
        let s = self.value(a).sum();
        self.push(Op::Sum(a), Tensor::scalar(s))
    }

    pub fn mean(&mut self, a: NodeId) -> NodeId {
        let n = self.value(a).len() as f64;
        let s = self.sum(a);
        self.scale(s, 1.0 / n)
    }

    /// 1-D cross-correlation of `input[C_in×T]` with `kernels[C_out×C_in×k]`,
    /// computed as the kernel matrix times the Toeplitz-unrolled input.
    pub fn conv1d(
        &mut self,
        input: NodeId,
        kernels: NodeId,
        stride: usize,
        pad: usize,
    ) -> Result<NodeId> {
        let (vx, vk) = (self.value(input), self.value(kernels));
        let (c_in, _) = vx.dims2()?;
        let (c_out, kc, k) = match vk.shape() {
            [o, c, k] => (*o, *c, *k),
            _ => {
                return Err(Error::InvalidShape {
                    shape: vk.shape().to_vec(),
                    reason: "kernels must be [C_out x C_in x k]".into(),
                })
            }
        };
        if kc != c_in {
            return Err(Error::ShapeMismatch {
                op: "conv1d",
                lhs: vx.shape().to_vec(),
                rhs: vk.shape().to_vec(),
            });
        }
        let cols = toeplitz_unroll(vx, k, stride, pad)?;
        let t_out = cols.shape()[1];
        let mut out = vec![0.0; c_out * t_out];
        gemm_acc(vk.data(), cols.data(), &mut out, c_out, c_in * k, t_out);
        let value = Tensor::from_parts(vec![c_out, t_out], out);
        Ok(self.push(
            Op::Conv1d {
                input,
                kernels,
                stride,
                pad,
                cols,
            },
            value,
        ))
    }

    /// Per-channel maximum over time of `x[C×T]`, yielding `[C]`.
    pub fn global_max_pool_time(&mut self, x: NodeId) -> Result<NodeId> {
        let vx = self.value(x);
        let (c, t) = match vx.shape() {
            [c, t] => (*c, *t),
            s => {
                return Err(Error::InvalidShape {
                    shape: s.to_vec(),
                    reason: "expected [C x T]".into(),
                })
            }
        };
        let mut out = Vec::with_capacity(c);
        let mut argmax = Vec::with_capacity(c);
        for row in vx.data().chunks_exact(t) {
            let mut best = 0;
            for (i, &v) in row.iter().enumerate() {
                // strict comparison keeps the first maximal index
                if v > row[best] {
                    best = i;
                }
            }
            out.push(row[best]);
            argmax.push(best);
        }
        Ok(self.push(
            Op::GlobalMaxPool { input: x, argmax },
            Tensor::from_parts(vec![c], out),
        ))
    }

    /// `−log softmax(logits)[label]`, computed with the max shift.
    pub fn softmax_cross_entropy(&mut self, logits: NodeId, label: usize) -> Result<NodeId> {
        let v = self.value(logits);
        let classes = v.len();
        if label >= classes {
            return Err(Error::LabelOutOfRange { label, classes });
        }
        let probs = softmax(v.data());
        let max = v.data().iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + v.data().iter().map(|&x| (x - max).exp()).sum::<f64>().ln();
        let loss = lse - v.data()[label];
        Ok(self.push(
            Op::SoftmaxCrossEntropy {
                logits,
                label,
                probs,
            },
            Tensor::scalar(loss),
        ))
    }

    /// Reverse-mode accumulation from a scalar root.
    pub fn backward(&self, root: NodeId) -> Result<Gradients> {
        let root_value = self.value(root);
        if !root_value.is_scalar() {
            return Err(Error::NonScalarRoot(root_value.shape().to_vec()));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[root.0] = Some(vec![1.0]);

        for idx in (0..=root.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Leaf { .. } => {}
                Op::MatMul(a, b) => {
                    let (va, vb) = (self.value(*a), self.value(*b));
                    let (m, k) = va.dims2()?;
                    let n = vb.dims2()?.1;
                    let ga = acc(&mut grads, *a, va.len());
                    gemm_nt_acc(&g, vb.data(), ga, m, n, k);
                    let gb = acc(&mut grads, *b, vb.len());
                    gemm_tn_acc(va.data(), &g, gb, k, m, n);
                }
                Op::Add(a, b) => {
                    self.reduce_broadcast(&mut grads, *a, &node.value, &g, |_| 1.0);
                    self.reduce_broadcast(&mut grads, *b, &node.value, &g, |_| 1.0);
                }
                Op::Sub(a, b) => {
                    self.reduce_broadcast(&mut grads, *a, &node.value, &g, |_| 1.0);
                    self.reduce_broadcast(&mut grads, *b, &node.value, &g, |_| -1.0);
                }
                Op::Mul(a, b) => {
                    let other_b = self.broadcast_to(*b, node.value.shape());
                    let other_a = self.broadcast_to(*a, node.value.shape());
                    self.reduce_broadcast(&mut grads, *a, &node.value, &g, |i| other_b[i]);
                    self.reduce_broadcast(&mut grads, *b, &node.value, &g, |i| other_a[i]);
                }
                Op::Scale(a, f) => {
                    let ga = acc(&mut grads, *a, g.len());
                    for (o, &gv) in ga.iter_mut().zip(&g) {
                        *o += f * gv;
                    }
                }
                Op::Pow(a, k) => {
                    if *k > 0 {
                        let k = *k;
                        let x = self.value(*a).data();
                        let ga = acc(&mut grads, *a, g.len());
                        for ((o, &gv), &xv) in ga.iter_mut().zip(&g).zip(x) {
                            *o += gv * f64::from(k) * powi(xv, k - 1);
                        }
                    }
                }
                Op::Relu(a) => {
                    let x = self.value(*a).data();
                    let ga = acc(&mut grads, *a, g.len());
                    for ((o, &gv), &xv) in ga.iter_mut().zip(&g).zip(x) {
                        if xv > 0.0 {
                            *o += gv;
                        }
                    }
                }
                Op::Transpose(a) => {
                    let (r, c) = self.value(*a).dims2()?;
                    let ga = acc(&mut grads, *a, g.len());
                    for i in 0..r {
                        for j in 0..c {
                            ga[i * c + j] += g[j * r + i];
                        }
                    }
                }
                Op::Reshape(a) => {
                    let ga = acc(&mut grads, *a, g.len());
                    for (o, &gv) in ga.iter_mut().zip(&g) {
                        *o += gv;
                    }
                }
                Op::SelectRow(a, r) => {
                    let va = self.value(*a);
                    let cols = va.dims2()?.1;
                    let ga = acc(&mut grads, *a, va.len());
                    for (o, &gv) in ga[r * cols..(r + 1) * cols].iter_mut().zip(&g) {
                        *o += gv;
                    }
                }
                Op::Concat(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let n = self.value(p).len();
                        let gp = acc(&mut grads, p, n);
                        for (o, &gv) in gp.iter_mut().zip(&g[offset..offset + n]) {
                            *o += gv;
                        }
                        offset += n;
                    }
                }
                Op::Sum(a) => {
                    let n = self.value(*a).len();
                    let ga = acc(&mut grads, *a, n);
                    for o in ga.iter_mut() {
                        *o += g[0];
                    }
                }
                Op::Conv1d {
                    input,
                    kernels,
                    stride,
                    pad,
                    cols,
                } => {
                    let vk = self.value(*kernels);
                    let vx = self.value(*input);
                    let (c_out, c_in, k) = (vk.shape()[0], vk.shape()[1], vk.shape()[2]);
                    let t_out = cols.shape()[1];
                    let gk = acc(&mut grads, *kernels, vk.len());
                    gemm_nt_acc(&g, cols.data(), gk, c_out, t_out, c_in * k);
                    if !self.is_constant_leaf(*input) {
                        let mut gcols = vec![0.0; c_in * k * t_out];
                        gemm_tn_acc(vk.data(), &g, &mut gcols, c_in * k, c_out, t_out);
                        let t_in = vx.dims2()?.1;
                        let gx = acc(&mut grads, *input, vx.len());
                        toeplitz_fold(&gcols, gx, c_in, t_in, k, *stride, *pad, t_out);
                    }
                }
                Op::GlobalMaxPool { input, argmax } => {
                    let vx = self.value(*input);
                    let t = vx.shape()[1];
                    let gx = acc(&mut grads, *input, vx.len());
                    for (c, (&am, &gv)) in argmax.iter().zip(&g).enumerate() {
                        gx[c * t + am] += gv;
                    }
                }
                Op::SoftmaxCrossEntropy {
                    logits,
                    label,
                    probs,
                } => {
                    let gl = acc(&mut grads, *logits, probs.len());
                    for (i, (o, &p)) in gl.iter_mut().zip(probs).enumerate() {
                        let onehot = if i == *label { 1.0 } else { 0.0 };
                        *o += g[0] * (p - onehot);
                    }
                }
            }
            grads[idx] = Some(g);
        }

        let leaves = self
            .nodes
            .iter()
            .enumerate()
            .filter(|(_, n)| matches!(n.op, Op::Leaf { .. }))
            .map(|(i, n)| {
                let data = grads[i].take().unwrap_or_else(|| vec![0.0; n.value.len()]);
                (NodeId(i), Tensor::from_parts(n.value.shape().to_vec(), data))
            })
            .collect();
        Ok(Gradients { leaves })
    }

    fn is_constant_leaf(&self, id: NodeId) -> bool {
        matches!(self.nodes[id.0].op, Op::Leaf { trainable: false })
    }

    /// Values of `id` expanded to the broadcast output shape.
    fn broadcast_to(&self, id: NodeId, shape: &[usize]) -> Vec<f64> {
        let v = self.value(id);
        if v.shape() == shape {
            return v.to_vec();
        }
        let (r, c) = (shape[0], shape[1]);
        let (rv, cv) = v.dims2().expect("broadcast operand is 2-D");
        let mut out = Vec::with_capacity(r * c);
        for i in 0..r {
            for j in 0..c {
                out.push(v.data()[(i % rv) * cv + (j % cv)]);
            }
        }
        out
    }

    /// Accumulates `g[i] * factor(i)` into `target`, summing over broadcast
    /// extents.
    fn reduce_broadcast(
        &self,
        grads: &mut [Option<Vec<f64>>],
        target: NodeId,
        out: &Tensor,
        g: &[f64],
        factor: impl Fn(usize) -> f64,
    ) {
        let vt = self.value(target);
        let gt = acc(grads, target, vt.len());
        if vt.shape() == out.shape() {
            for (i, (o, &gv)) in gt.iter_mut().zip(g).enumerate() {
                *o += gv * factor(i);
            }
            return;
        }
        let (r, c) = (out.shape()[0], out.shape()[1]);
        let (rt, ct) = vt.dims2().expect("broadcast operand is 2-D");
        for i in 0..r {
            for j in 0..c {
                let idx = i * c + j;
                gt[(i % rt) * ct + (j % ct)] += g[idx] * factor(idx);
            }
        }
    }
}

fn acc(grads: &mut [Option<Vec<f64>>], id: NodeId, len: usize) -> &mut Vec<f64> {
    grads[id.0].get_or_insert_with(|| vec![0.0; len])
}

/// `x^k` with `0^0 = 1`.
pub(crate) fn powi(x: f64, k: u32) -> f64 {
    let mut acc = 1.0;
    for _ in 0..k {
        acc *= x;
    }
    acc
}

pub(crate) fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&x| (x - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / z).collect()
}

/// Output length of a 1-D convolution, or an error when no column fits.
pub fn conv_output_len(t: usize, k: usize, stride: usize, pad: usize) -> Result<usize> {
    if stride == 0 {
        return Err(Error::config("stride must be at least 1"));
    }
    if k == 0 || k > t + 2 * pad {
        return Err(Error::SequenceTooShort {
            length: t,
            kernel: k,
            pad,
        });
    }
    Ok((t + 2 * pad - k) / stride + 1)
}

/// Unrolls `input[C×T]` into its Toeplitz (im2col) form `[(C·k)×T']`.
///
/// Row `c·k + j`, column `t` holds `input[c, t·stride + j − pad]`, or zero
/// inside the padding.
pub fn toeplitz_unroll(input: &Tensor, k: usize, stride: usize, pad: usize) -> Result<Tensor> {
    let (c_in, t_in) = input.dims2()?;
    let t_out = conv_output_len(t_in, k, stride, pad)?;
    let x = input.data();
    let mut cols = vec![0.0; c_in * k * t_out];
    for c in 0..c_in {
        for j in 0..k {
            let row = &mut cols[(c * k + j) * t_out..(c * k + j + 1) * t_out];
            for (t, slot) in row.iter_mut().enumerate() {
                let pos = t * stride + j;
                if pos >= pad && pos - pad < t_in {
                    *slot = x[c * t_in + pos - pad];
                }
            }
        }
    }
    Ok(Tensor::from_parts(vec![c_in * k, t_out], cols))
}

#[allow(clippy::too_many_arguments)]
fn toeplitz_fold(
    gcols: &[f64],
    gx: &mut [f64],
    c_in: usize,
    t_in: usize,
    k: usize,
    stride: usize,
    pad: usize,
    t_out: usize,
) {
    for c in 0..c_in {
        for j in 0..k {
            let row = &gcols[(c * k + j) * t_out..(c * k + j + 1) * t_out];
            for (t, &gv) in row.iter().enumerate() {
                let pos = t * stride + j;
                if pos >= pad && pos - pad < t_in {
                    gx[c * t_in + pos - pad] += gv;
                }
            }
        }
    }
}

/// Leaf gradients produced by [`Graph::backward`].
#[derive(Debug, Clone)]
pub struct Gradients {
    leaves: Vec<(NodeId, Tensor)>,
}

impl Gradients {
    /// Gradient for a leaf. Leaves not reached from the root get zeros.
    pub fn get(&self, id: NodeId) -> Option<&Tensor> {
        self.leaves
            .binary_search_by_key(&id, |(n, _)| *n)
            .ok()
            .map(|i| &self.leaves[i].1)
    }

    pub fn iter(&self) -> impl Iterator<Item = (NodeId, &Tensor)> {
        self.leaves.iter().map(|(n, t)| (*n, t))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[Vec<f64>]) -> Tensor {
        Tensor::from_rows(rows).unwrap()
    }

    #[test]
    fn matmul_examples() {
        let mut g = Graph::new();
        let a = g.input(m(&[vec![1.0, 2.0], vec![3.0, 4.0]]));
        let i = g.input(Tensor::identity(2).unwrap());
        let y = g.matmul(a, i).unwrap();
        assert_eq!(g.value(y).data(), &[1.0, 2.0, 3.0, 4.0]);

        let b = g.input(m(&[vec![5.0], vec![6.0]]));
        let y = g.matmul(a, b).unwrap();
        assert_eq!(g.value(y).data(), &[17.0, 39.0]);

        let z = g.input(Tensor::zeros(&[2, 3]).unwrap());
        let y = g.matmul(a, z).unwrap();
        assert!(g.value(y).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn matmul_rejects_mismatch_with_both_shapes() {
        let mut g = Graph::new();
        let a = g.input(Tensor::zeros(&[2, 3]).unwrap());
        let b = g.input(Tensor::zeros(&[2, 3]).unwrap());
        let err = g.matmul(a, b).unwrap_err().to_string();
        assert!(err.contains("[2, 3] vs [2, 3]"), "{err}");
    }

    #[test]
    fn conv1d_examples() {
        let mut g = Graph::new();
        let x = g.input(m(&[vec![1.0, 2.0, 3.0, 4.0]]));
        let k = g.input(Tensor::new(vec![1, 1, 3], vec![1.0, 0.0, -1.0]).unwrap());
        let y = g.conv1d(x, k, 1, 0).unwrap();
        assert_eq!(g.value(y).data(), &[-2.0, -2.0]);

        let id = g.input(Tensor::new(vec![1, 1, 1], vec![1.0]).unwrap());
        let y = g.conv1d(x, id, 1, 0).unwrap();
        assert_eq!(g.value(y).data(), g.value(x).data());

        let c = g.input(m(&[vec![7.0; 6]]));
        let d = g.input(Tensor::new(vec![1, 1, 2], vec![1.0, -1.0]).unwrap());
        let y = g.conv1d(c, d, 1, 0).unwrap();
        assert!(g.value(y).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn conv1d_too_short() {
        let mut g = Graph::new();
        let x = g.input(m(&[vec![1.0, 2.0]]));
        let k = g.input(Tensor::new(vec![1, 1, 3], vec![1.0; 3]).unwrap());
        let err = g.conv1d(x, k, 1, 0).unwrap_err();
        assert!(err.to_string().contains("sequence too short for kernel"));
        // padding rescues it
        assert_eq!(g.conv1d(x, k, 1, 1).map(|y| g.value(y).len()).unwrap(), 2);
    }

    #[test]
    fn pow_examples() {
        let mut g = Graph::new();
        let x = g.input(Tensor::vector(vec![2.0, -3.0]).unwrap());
        let p0 = g.pow(x, 0);
        let p1 = g.pow(x, 1);
        let p3 = g.pow(x, 3);
        assert_eq!(g.value(p0).data(), &[1.0, 1.0]);
        assert_eq!(g.value(p1).data(), &[2.0, -3.0]);
        assert_eq!(g.value(p3).data(), &[8.0, -27.0]);
        let z = g.input(Tensor::vector(vec![0.0]).unwrap());
        let z0 = g.pow(z, 0);
        assert_eq!(g.value(z0).data(), &[1.0]);
    }

    #[test]
    fn pow_zero_has_zero_gradient() {
        let mut g = Graph::new();
        let x = g.param(Tensor::vector(vec![2.0, -3.0]).unwrap());
        let p = g.pow(x, 0);
        let s = g.sum(p);
        let grads = g.backward(s).unwrap();
        assert_eq!(grads.get(x).unwrap().data(), &[0.0, 0.0]);
    }

    #[test]
    fn max_pool_examples() {
        let mut g = Graph::new();
        let x = g.input(m(&[vec![1.0, 5.0, 3.0], vec![2.0, 2.0, 2.0]]));
        let y = g.global_max_pool_time(x).unwrap();
        assert_eq!(g.value(y).data(), &[5.0, 2.0]);

        let single = g.input(m(&[vec![4.0], vec![-1.0]]));
        let y = g.global_max_pool_time(single).unwrap();
        assert_eq!(g.value(y).data(), &[4.0, -1.0]);
    }

    #[test]
    fn max_pool_gradient_goes_to_first_maximum() {
        let mut g = Graph::new();
        let x = g.param(m(&[vec![1.0, 5.0, 5.0], vec![2.0, 2.0, 2.0]]));
        let y = g.global_max_pool_time(x).unwrap();
        let s = g.sum(y);
        let grads = g.backward(s).unwrap();
        assert_eq!(grads.get(x).unwrap().data(), &[0.0, 1.0, 0.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn cross_entropy_examples() {
        let mut g = Graph::new();
        let l = g.input(Tensor::vector(vec![0.3; 4]).unwrap());
        let ce = g.softmax_cross_entropy(l, 2).unwrap();
        assert!((g.value(ce).data()[0] - 4f64.ln()).abs() < 1e-12);

        let l = g.input(Tensor::vector(vec![30.0, -30.0]).unwrap());
        let ce = g.softmax_cross_entropy(l, 0).unwrap();
        assert!(g.value(ce).data()[0] < 1e-20);

        let l = g.input(Tensor::vector(vec![1.0, 0.0]).unwrap());
        let ce = g.softmax_cross_entropy(l, 0).unwrap();
        let expected = (1.0 + (-1f64).exp()).ln();
        assert!((g.value(ce).data()[0] - expected).abs() < 1e-15);
        assert!((g.value(ce).data()[0] - 0.31326).abs() < 1e-5);

        assert!(matches!(
            g.softmax_cross_entropy(l, 2),
            Err(Error::LabelOutOfRange { label: 2, classes: 2 })
        ));
    }

    #[test]
    fn backward_examples() {
        let mut g = Graph::new();
        let x = g.param(Tensor::ones(&[2, 3]).unwrap());
        let s = g.sum(x);
        let grads = g.backward(s).unwrap();
        assert_eq!(grads.get(x).unwrap().data(), &[1.0; 6]);
        assert_eq!(grads.get(x).unwrap().shape(), &[2, 3]);

        let mut g = Graph::new();
        let x = g.param(Tensor::vector(vec![3.0]).unwrap());
        let p = g.pow(x, 2);
        let s = g.sum(p);
        let grads = g.backward(s).unwrap();
        assert_eq!(grads.get(x).unwrap().data(), &[6.0]);
    }

    #[test]
    fn backward_rejects_non_scalar_and_zero_fills_unreached() {
        let mut g = Graph::new();
        let x = g.param(Tensor::ones(&[2]).unwrap());
        let unused = g.param(Tensor::ones(&[3, 2]).unwrap());
        assert!(matches!(g.backward(x), Err(Error::NonScalarRoot(_))));
        let s = g.sum(x);
        let grads = g.backward(s).unwrap();
        let gu = grads.get(unused).unwrap();
        assert_eq!(gu.shape(), &[3, 2]);
        assert!(gu.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn broadcast_add_and_gradient_reduction() {
        let mut g = Graph::new();
        let row = g.param(m(&[vec![1.0, 2.0, 3.0]]));
        let col = g.param(m(&[vec![10.0], vec![20.0]]));
        let y = g.add(row, col).unwrap();
        assert_eq!(g.value(y).shape(), &[2, 3]);
        assert_eq!(g.value(y).data(), &[11.0, 12.0, 13.0, 21.0, 22.0, 23.0]);
        let s = g.sum(y);
        let grads = g.backward(s).unwrap();
        assert_eq!(grads.get(row).unwrap().data(), &[2.0, 2.0, 2.0]);
        assert_eq!(grads.get(col).unwrap().data(), &[3.0, 3.0]);
    }

    #[test]
    fn broadcast_rejects_incompatible() {
        let mut g = Graph::new();
        let a = g.input(Tensor::zeros(&[2, 3]).unwrap());
        let b = g.input(Tensor::zeros(&[3, 2]).unwrap());
        assert!(g.add(a, b).is_err());
        assert!(g.mul(a, b).is_err());
    }
}
