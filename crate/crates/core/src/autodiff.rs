//! Reverse-mode automatic differentiation over dense `f64` tensors.
//!
//! A [`Tape`] records every forward op in execution order. Nodes are
//! addressed by [`NodeId`]; inputs always precede outputs, so a single
//! reverse sweep over the recorded list visits each node exactly once.
//! `backward` never mutates the tape: calling it repeatedly with the same
//! root yields bitwise-identical gradients, and several roots (one per task)
//! can share one forward pass.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::error::TensorError;
use crate::math;
use crate::tensor::Tensor;

/// Handle to a node recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul { a: NodeId, b: NodeId },
    /// Broadcast binary op; index maps from output position to operand position.
    Binary {
        kind: BinaryKind,
        a: NodeId,
        b: NodeId,
        a_idx: Vec<usize>,
        b_idx: Vec<usize>,
    },
    Scale { x: NodeId, factor: f64 },
    Transpose { x: NodeId },
    Reshape { x: NodeId },
    Concat { inputs: Vec<NodeId>, axis: usize },
    Softmax { x: NodeId },
    LogSumExp { x: NodeId },
    Log { x: NodeId },
    Exp { x: NodeId },
    Relu { x: NodeId },
    LayerNorm {
        x: NodeId,
        gain: NodeId,
        bias: NodeId,
        normalized: Vec<f64>,
        inv_std: Vec<f64>,
    },
    Dropout { x: NodeId, scale: Vec<f64> },
    MaskedFill { x: NodeId, mask: Vec<bool> },
    ReduceSum { x: NodeId, axis: Option<usize> },
    ReduceMean { x: NodeId, axis: Option<usize> },
    GatherRows { x: NodeId, indices: Vec<usize> },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum BinaryKind {
    Add,
    Sub,
    Mul,
}

struct Node {
    value: Tensor,
    op: Op,
}

/// Computation tape. One tape per training step; drop it after backward.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients of a scalar root with respect to every recorded node.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
    shapes: Vec<Vec<usize>>,
}

impl Gradients {
    /// Gradient of the root with respect to `id`; zeros when `id` does not
    /// influence the root.
    pub fn wrt(&self, id: NodeId) -> Tensor {
        let shape = self.shapes[id.0].clone();
        match &self.grads[id.0] {
            Some(g) => Tensor::from_parts(shape, g.clone()),
            None => Tensor::zeros(&shape),
        }
    }

    /// Appends the gradient for `id` onto `out` (zeros when absent).
    pub fn extend_into(&self, id: NodeId, out: &mut Vec<f64>) {
        match &self.grads[id.0] {
            Some(g) => out.extend_from_slice(g),
            None => out.extend(core::iter::repeat_n(0.0, self.shapes[id.0].iter().product())),
        }
    }
}

fn mismatch(op: &'static str, a: &[usize], b: &[usize]) -> TensorError {
    TensorError::ShapeMismatch { op, lhs: a.to_vec(), rhs: b.to_vec() }
}

fn broadcast_shape(a: &[usize], b: &[usize]) -> Option<Vec<usize>> {
    let n = a.len().max(b.len());
    let mut out = vec![0; n];
    for i in 0..n {
        let da = if i < n - a.len() { 1 } else { a[i - (n - a.len())] };
        let db = if i < n - b.len() { 1 } else { b[i - (n - b.len())] };
        out[i] = match (da, db) {
            (x, y) if x == y => x,
            (1, y) => y,
            (x, 1) => x,
            _ => return None,
        };
    }
    Some(out)
}

/// For every flat output index, the flat index into an operand broadcast to `out`.
fn broadcast_index(shape: &[usize], out: &[usize]) -> Vec<usize> {
    let n = out.len();
    let offset = n - shape.len();
    let mut strides = vec![0usize; n];
    let mut s = 1;
    for i in (0..n).rev() {
        if i >= offset {
            let d = shape[i - offset];
            strides[i] = if d == 1 { 0 } else { s };
            s *= d;
        }
    }
    let numel: usize = out.iter().product();
    let mut idx = Vec::with_capacity(numel);
    let mut coord = vec![0usize; n];
    for _ in 0..numel {
        idx.push(coord.iter().zip(&strides).map(|(c, s)| c * s).sum());
        for d in (0..n).rev() {
            coord[d] += 1;
            if coord[d] < out[d] {
                break;
            }
            coord[d] = 0;
        }
    }
    idx
}

fn check_output(op: &'static str, data: &[f64], allow_inf: bool) -> Result<(), TensorError> {
    let ok = if allow_inf {
        data.iter().all(|v| !v.is_nan())
    } else {
        data.iter().all(|v| v.is_finite())
    };
    if ok {
        Ok(())
    } else {
        Err(TensorError::NonFinite { op })
    }
}

/// (outer, axis, inner) extents for reducing or concatenating along `axis`.
fn split_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
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

    fn push(&mut self, value: Tensor, op: Op) -> NodeId {
        self.nodes.push(Node { value, op });
        NodeId(self.nodes.len() - 1)
    }

    fn checked(&self, id: NodeId) -> Result<&Tensor, TensorError> {
        self.nodes.get(id.0).map(|n| &n.value).ok_or(TensorError::UnknownNode(id.0))
    }

    /// Records a leaf (parameter or constant).
    pub fn leaf(&mut self, value: Tensor) -> NodeId {
        self.push(value, Op::Leaf)
    }

    /// Matrix product of two rank-2 tensors.
    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, TensorError> {
        let (av, bv) = (self.checked(a)?, self.checked(b)?);
        if av.rank() != 2 || bv.rank() != 2 || av.shape()[1] != bv.shape()[0] {
            return Err(mismatch("matmul", av.shape(), bv.shape()));
        }
        let (m, k, n) = (av.shape()[0], av.shape()[1], bv.shape()[1]);
        let out = matmul_raw(av.data(), bv.data(), m, k, n);
        check_output("matmul", &out, false)?;
        Ok(self.push(Tensor::from_parts(vec![m, n], out), Op::MatMul { a, b }))
    }

    fn binary(&mut self, kind: BinaryKind, a: NodeId, b: NodeId) -> Result<NodeId, TensorError> {
        let name = match kind {
            BinaryKind::Add => "add",
            BinaryKind::Sub => "sub",
            BinaryKind::Mul => "mul",
        };
        let (av, bv) = (self.checked(a)?, self.checked(b)?);
        let shape = broadcast_shape(av.shape(), bv.shape())
            .ok_or_else(|| mismatch(name, av.shape(), bv.shape()))?;
        let a_idx = broadcast_index(av.shape(), &shape);
        let b_idx = broadcast_index(bv.shape(), &shape);
        let (ad, bd) = (av.data(), bv.data());
        let out: Vec<f64> = a_idx
            .iter()
            .zip(&b_idx)
            .map(|(&i, &j)| match kind {
                BinaryKind::Add => ad[i] + bd[j],
                BinaryKind::Sub => ad[i] - bd[j],
                BinaryKind::Mul => ad[i] * bd[j],
            })
            .collect();
        check_output(name, &out, false)?;
        Ok(self.push(Tensor::from_parts(shape, out), Op::Binary { kind, a, b, a_idx, b_idx }))
    }

    /// Elementwise sum with numpy-style broadcasting.
    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, TensorError> {
        self.binary(BinaryKind::Add, a, b)
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, TensorError> {
        self.binary(BinaryKind::Sub, a, b)
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, TensorError> {
        self.binary(BinaryKind::Mul, a, b)
    }

    pub fn scale(&mut self, x: NodeId, factor: f64) -> Result<NodeId, TensorError> {
        let xv = self.checked(x)?;
        let out: Vec<f64> = xv.data().iter().map(|v| v * factor).collect();
        check_output("scale", &out, false)?;
        let shape = xv.shape().to_vec();
        Ok(self.push(Tensor::from_parts(shape, out), Op::Scale { x, factor }))
    }

    /// Transpose of a rank-2 tensor.
    pub fn transpose(&mut self, x: NodeId) -> Result<NodeId, TensorError> {
        let xv = self.checked(x)?;
        if xv.rank() != 2 {
            return Err(mismatch("transpose", xv.shape(), &[0, 0]));
        }
        let (r, c) = (xv.shape()[0], xv.shape()[1]);
        let d = xv.data();
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = d[i * c + j];
            }
        }
        Ok(self.push(Tensor::from_parts(vec![c, r], out), Op::Transpose { x }))
    }

    pub fn reshape(&mut self, x: NodeId, shape: &[usize]) -> Result<NodeId, TensorError> {
        let xv = self.checked(x)?;
        if shape.iter().product::<usize>() != xv.numel() {
            return Err(mismatch("reshape", xv.shape(), shape));
        }
        let out = xv.data().to_vec();
        Ok(self.push(Tensor::from_parts(shape.to_vec(), out), Op::Reshape { x }))
    }

    /// Concatenates tensors that agree on every dimension except `axis`.
    pub fn concat(&mut self, inputs: &[NodeId], axis: usize) -> Result<NodeId, TensorError> {
        let first = self.checked(*inputs.first().ok_or_else(|| {
            TensorError::InvalidArgument("concat of zero tensors".into())
        })?)?;
        let base = first.shape().to_vec();
        if axis >= base.len() {
            return Err(mismatch("concat", &base, &[axis]));
        }
        let mut total = 0;
        for &id in inputs {
            let s = self.checked(id)?.shape();
            if s.len() != base.len()
                || s.iter().zip(&base).enumerate().any(|(d, (x, y))| d != axis && x != y)
            {
                return Err(mismatch("concat", &base, s));
            }
            total += s[axis];
        }
        let mut shape = base.clone();
        shape[axis] = total;
        let (outer, _, inner) = split_axis(&base, axis);
        let mut out = Vec::with_capacity(shape.iter().product());
        for o in 0..outer {
            for &id in inputs {
                let v = &self.nodes[id.0].value;
                let block = v.shape()[axis] * inner;
                out.extend_from_slice(&v.data()[o * block..(o + 1) * block]);
            }
        }
        Ok(self.push(Tensor::from_parts(shape, out), Op::Concat { inputs: inputs.to_vec(), axis }))
    }

    /// Softmax over the last dimension. `-inf` entries receive zero weight;
    /// a row of only `-inf` is an error.
    pub fn softmax(&mut self, x: NodeId) -> Result<NodeId, TensorError> {
        let xv = self.checked(x)?;
        let d = *xv.shape().last().ok_or_else(|| mismatch("softmax", xv.shape(), &[1]))?;
        let mut out = Vec::with_capacity(xv.numel());
        for row in xv.data().chunks(d.max(1)) {
            let lse = math::logsumexp(row);
            if lse == f64::NEG_INFINITY {
                return Err(TensorError::FullyMasked);
            }
            out.extend(row.iter().map(|v| math::exp(v - lse)));
        }
        check_output("softmax", &out, false)?;
        let shape = xv.shape().to_vec();
        Ok(self.push(Tensor::from_parts(shape, out), Op::Softmax { x }))
    }

    /// `log(sum(exp(x)))` over the last dimension, dropping that dimension.
    pub fn logsumexp(&mut self, x: NodeId) -> Result<NodeId, TensorError> {
        let xv = self.checked(x)?;
        let d = *xv.shape().last().ok_or_else(|| mismatch("logsumexp", xv.shape(), &[1]))?;
        let out: Vec<f64> = xv.data().chunks(d.max(1)).map(math::logsumexp).collect();
        if out.contains(&f64::NEG_INFINITY) {
            return Err(TensorError::FullyMasked);
        }
        check_output("logsumexp", &out, false)?;
        let shape = xv.shape()[..xv.rank() - 1].to_vec();
        Ok(self.push(Tensor::from_parts(shape, out), Op::LogSumExp { x }))
    }

    pub fn log(&mut self, x: NodeId) -> Result<NodeId, TensorError> {
        self.unary(x, "log", math::ln, |x| Op::Log { x })
    }

    pub fn exp(&mut self, x: NodeId) -> Result<NodeId, TensorError> {
        self.unary(x, "exp", math::exp, |x| Op::Exp { x })
    }

    pub fn relu(&mut self, x: NodeId) -> Result<NodeId, TensorError> {
        self.unary(x, "relu", |v| v.max(0.0), |x| Op::Relu { x })
    }

    fn unary(
        &mut self,
        x: NodeId,
        name: &'static str,
        f: impl Fn(f64) -> f64,
        op: impl FnOnce(NodeId) -> Op,
    ) -> Result<NodeId, TensorError> {
        let xv = self.checked(x)?;
        let out: Vec<f64> = xv.data().iter().map(|&v| f(v)).collect();
        check_output(name, &out, false)?;
        let shape = xv.shape().to_vec();
        Ok(self.push(Tensor::from_parts(shape, out), op(x)))
    }

    /// Layer normalization over the last dimension with affine `gain` and
    /// `bias` (both of length equal to the last dimension).
    pub fn layernorm(
        &mut self,
        x: NodeId,
        gain: NodeId,
        bias: NodeId,
        eps: f64,
    ) -> Result<NodeId, TensorError> {
        let (xv, gv, bv) = (self.checked(x)?, self.checked(gain)?, self.checked(bias)?);
        let d = *xv.shape().last().ok_or_else(|| mismatch("layernorm", xv.shape(), &[1]))?;
        if gv.shape() != [d] || bv.shape() != [d] {
            return Err(mismatch("layernorm", xv.shape(), gv.shape()));
        }
        let mut out = Vec::with_capacity(xv.numel());
        let mut normalized = Vec::with_capacity(xv.numel());
        let mut inv_std = Vec::with_capacity(xv.numel() / d.max(1));
        for row in xv.data().chunks(d) {
            let mean = row.iter().sum::<f64>() / d as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
            let is = 1.0 / math::sqrt(var + eps);
            inv_std.push(is);
            for (j, v) in row.iter().enumerate() {
                let h = (v - mean) * is;
                normalized.push(h);
                out.push(h * gv.data()[j] + bv.data()[j]);
            }
        }
        check_output("layernorm", &out, false)?;
        let shape = xv.shape().to_vec();
        Ok(self.push(
            Tensor::from_parts(shape, out),
            Op::LayerNorm { x, gain, bias, normalized, inv_std },
        ))
    }

    /// Inverted dropout: in train mode each entry is kept with probability
    /// `keep` and scaled by `1/keep`. Eval mode (or `keep == 1`) returns `x`
    /// unchanged without recording a node.
    pub fn dropout<R: Rng + ?Sized>(
        &mut self,
        x: NodeId,
        keep: f64,
        mode: Mode,
        rng: &mut R,
    ) -> Result<NodeId, TensorError> {
        if !(keep > 0.0 && keep <= 1.0) {
            return Err(TensorError::InvalidArgument(format!("keep probability {keep} not in (0, 1]")));
        }
        let xv = self.checked(x)?;
        if mode == Mode::Eval || keep == 1.0 {
            return Ok(x);
        }
        let scale: Vec<f64> = (0..xv.numel())
            .map(|_| if rng.random::<f64>() < keep { 1.0 / keep } else { 0.0 })
            .collect();
        let out: Vec<f64> = xv.data().iter().zip(&scale).map(|(v, s)| v * s).collect();
        let shape = xv.shape().to_vec();
        Ok(self.push(Tensor::from_parts(shape, out), Op::Dropout { x, scale }))
    }

    /// Replaces entries where `mask` is true with `value` (which may be
    /// `-inf`). `mask` has one flag per element of `x`.
    pub fn masked_fill(&mut self, x: NodeId, mask: &[bool], value: f64) -> Result<NodeId, TensorError> {
        let xv = self.checked(x)?;
        if mask.len() != xv.numel() {
            return Err(mismatch("masked_fill", xv.shape(), &[mask.len()]));
        }
        let out: Vec<f64> =
            xv.data().iter().zip(mask).map(|(&v, &m)| if m { value } else { v }).collect();
        check_output("masked_fill", &out, true)?;
        let shape = xv.shape().to_vec();
        Ok(self.push(Tensor::from_parts(shape, out), Op::MaskedFill { x, mask: mask.to_vec() }))
    }

    /// Sum over `axis` (removing it), or over everything to a scalar.
    pub fn sum(&mut self, x: NodeId, axis: Option<usize>) -> Result<NodeId, TensorError> {
        let (shape, out) = self.reduce(x, axis, "sum")?;
        Ok(self.push(Tensor::from_parts(shape, out), Op::ReduceSum { x, axis }))
    }

    pub fn mean(&mut self, x: NodeId, axis: Option<usize>) -> Result<NodeId, TensorError> {
        let (shape, mut out) = self.reduce(x, axis, "mean")?;
        let xv = self.value(x);
        let n = match axis {
            Some(a) => xv.shape()[a],
            None => xv.numel(),
        };
        if n == 0 {
            return Err(TensorError::InvalidArgument("mean over an empty axis".into()));
        }
        out.iter_mut().for_each(|v| *v /= n as f64);
        Ok(self.push(Tensor::from_parts(shape, out), Op::ReduceMean { x, axis }))
    }

    fn reduce(
        &self,
        x: NodeId,
        axis: Option<usize>,
        name: &'static str,
    ) -> Result<(Vec<usize>, Vec<f64>), TensorError> {
        let xv = self.checked(x)?;
        match axis {
            None => {
                let s = xv.data().iter().sum::<f64>();
                check_output(name, &[s], false)?;
                Ok((Vec::new(), vec![s]))
            }
            Some(a) => {
                if a >= xv.rank() {
                    return Err(mismatch(name, xv.shape(), &[a]));
                }
                let (outer, n, inner) = split_axis(xv.shape(), a);
                let mut out = vec![0.0; outer * inner];
                let d = xv.data();
                for o in 0..outer {
                    for i in 0..n {
                        for j in 0..inner {
                            out[o * inner + j] += d[(o * n + i) * inner + j];
                        }
                    }
                }
                check_output(name, &out, false)?;
                let mut shape = xv.shape().to_vec();
                shape.remove(a);
                Ok((shape, out))
            }
        }
    }

    /// Selects rows (entries along axis 0) by index; indices may repeat.
    pub fn gather_rows(&mut self, x: NodeId, indices: &[usize]) -> Result<NodeId, TensorError> {
        let xv = self.checked(x)?;
        if xv.rank() == 0 {
            return Err(mismatch("gather_rows", xv.shape(), &[]));
        }
        let rows = xv.shape()[0];
        let width: usize = xv.shape()[1..].iter().product();
        let mut out = Vec::with_capacity(indices.len() * width);
        for &i in indices {
            if i >= rows {
                return Err(TensorError::InvalidArgument(format!("row {i} out of range {rows}")));
            }
            out.extend_from_slice(&xv.data()[i * width..(i + 1) * width]);
        }
        let mut shape = xv.shape().to_vec();
        shape[0] = indices.len();
        Ok(self.push(Tensor::from_parts(shape, out), Op::GatherRows { x, indices: indices.to_vec() }))
    }

    /// Gradients of the scalar `root` with respect to every node on the tape.
    pub fn backward(&self, root: NodeId) -> Result<Gradients, TensorError> {
        let rv = self.checked(root)?;
        if rv.numel() != 1 {
            return Err(TensorError::NonScalarRoot(rv.shape().to_vec()));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; root.0 + 1];
        grads[root.0] = Some(vec![1.0]);
        for idx in (0..=root.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            self.propagate(idx, &g, &mut grads);
            grads[idx] = Some(g);
        }
        grads.resize(self.nodes.len(), None);
        let shapes = self.nodes.iter().map(|n| n.value.shape().to_vec()).collect();
        Ok(Gradients { grads, shapes })
    }

    fn propagate(&self, idx: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[idx];
        let val = &node.value;
        match &node.op {
            Op::Leaf => {}
            Op::MatMul { a, b } => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let (m, k, n) = (av.shape()[0], av.shape()[1], bv.shape()[1]);
                let mut da = vec![0.0; m * k];
                let mut db = vec![0.0; k * n];
                for i in 0..m {
                    for j in 0..n {
                        let gij = g[i * n + j];
                        if gij == 0.0 {
                            continue;
                        }
                        for p in 0..k {
                            da[i * k + p] += gij * bv.data()[p * n + j];
                            db[p * n + j] += gij * av.data()[i * k + p];
                        }
                    }
                }
                accumulate(grads, *a, da);
                accumulate(grads, *b, db);
            }
            Op::Binary { kind, a, b, a_idx, b_idx } => {
                let mut da = vec![0.0; self.value(*a).numel()];
                let mut db = vec![0.0; self.value(*b).numel()];
                let (ad, bd) = (self.value(*a).data(), self.value(*b).data());
                for (o, (&i, &j)) in a_idx.iter().zip(b_idx).enumerate() {
                    match kind {
                        BinaryKind::Add => {
                            da[i] += g[o];
                            db[j] += g[o];
                        }
                        BinaryKind::Sub => {
                            da[i] += g[o];
                            db[j] -= g[o];
                        }
                        BinaryKind::Mul => {
                            da[i] += g[o] * bd[j];
                            db[j] += g[o] * ad[i];
                        }
                    }
                }
                accumulate(grads, *a, da);
                accumulate(grads, *b, db);
            }
            Op::Scale { x, factor } => {
                accumulate(grads, *x, g.iter().map(|v| v * factor).collect());
            }
            Op::Transpose { x } => {
                let (r, c) = (val.shape()[0], val.shape()[1]);
                let mut dx = vec![0.0; r * c];
                for i in 0..r {
                    for j in 0..c {
                        dx[j * r + i] = g[i * c + j];
                    }
                }
                accumulate(grads, *x, dx);
            }
            Op::Reshape { x } => accumulate(grads, *x, g.to_vec()),
            Op::Concat { inputs, axis } => {
                let (outer, _, inner) = split_axis(val.shape(), *axis);
                let mut offset = 0;
                let total = val.shape()[*axis] * inner;
                for &id in inputs {
                    let block = self.value(id).shape()[*axis] * inner;
                    let mut dx = Vec::with_capacity(outer * block);
                    for o in 0..outer {
                        dx.extend_from_slice(&g[o * total + offset..o * total + offset + block]);
                    }
                    offset += block;
                    accumulate(grads, id, dx);
                }
            }
            Op::Softmax { x } => {
                let d = *val.shape().last().unwrap();
                let mut dx = Vec::with_capacity(val.numel());
                for (y, gy) in val.data().chunks(d).zip(g.chunks(d)) {
                    let s = math::dot(y, gy);
                    dx.extend(y.iter().zip(gy).map(|(yi, gi)| yi * (gi - s)));
                }
                accumulate(grads, *x, dx);
            }
            Op::LogSumExp { x } => {
                let xv = self.value(*x);
                let d = *xv.shape().last().unwrap();
                let mut dx = Vec::with_capacity(xv.numel());
                for ((row, lse), gi) in xv.data().chunks(d).zip(val.data()).zip(g) {
                    dx.extend(row.iter().map(|v| gi * math::exp(v - lse)));
                }
                accumulate(grads, *x, dx);
            }
            Op::Log { x } => {
                let xv = self.value(*x);
                accumulate(grads, *x, g.iter().zip(xv.data()).map(|(gi, v)| gi / v).collect());
            }
            Op::Exp { x } => {
                accumulate(grads, *x, g.iter().zip(val.data()).map(|(gi, y)| gi * y).collect());
            }
            Op::Relu { x } => {
                let xv = self.value(*x);
                let dx = g
                    .iter()
                    .zip(xv.data())
                    .map(|(gi, v)| if *v > 0.0 { *gi } else { 0.0 })
                    .collect();
                accumulate(grads, *x, dx);
            }
            Op::LayerNorm { x, gain, bias, normalized, inv_std } => {
                let gv = self.value(*gain).data();
                let d = gv.len();
                let mut dx = Vec::with_capacity(val.numel());
                let mut dgain = vec![0.0; d];
                let mut dbias = vec![0.0; d];
                for ((gy, h), is) in g.chunks(d).zip(normalized.chunks(d)).zip(inv_std) {
                    let mut mean_dh = 0.0;
                    let mut mean_dh_h = 0.0;
                    for j in 0..d {
                        let dh = gy[j] * gv[j];
                        mean_dh += dh;
                        mean_dh_h += dh * h[j];
                        dgain[j] += gy[j] * h[j];
                        dbias[j] += gy[j];
                    }
                    mean_dh /= d as f64;
                    mean_dh_h /= d as f64;
                    for j in 0..d {
                        dx.push(is * (gy[j] * gv[j] - mean_dh - h[j] * mean_dh_h));
                    }
                }
                accumulate(grads, *x, dx);
                accumulate(grads, *gain, dgain);
                accumulate(grads, *bias, dbias);
            }
            Op::Dropout { x, scale } => {
                accumulate(grads, *x, g.iter().zip(scale).map(|(gi, s)| gi * s).collect());
            }
            Op::MaskedFill { x, mask } => {
                let dx = g.iter().zip(mask).map(|(gi, m)| if *m { 0.0 } else { *gi }).collect();
                accumulate(grads, *x, dx);
            }
            Op::ReduceSum { x, axis } | Op::ReduceMean { x, axis } => {
                let xv = self.value(*x);
                let denom = match (&node.op, axis) {
                    (Op::ReduceMean { .. }, Some(a)) => xv.shape()[*a] as f64,
                    (Op::ReduceMean { .. }, None) => xv.numel() as f64,
                    _ => 1.0,
                };
                let dx = match axis {
                    None => vec![g[0] / denom; xv.numel()],
                    Some(a) => {
                        let (outer, n, inner) = split_axis(xv.shape(), *a);
                        let mut dx = Vec::with_capacity(xv.numel());
                        for o in 0..outer {
                            for _ in 0..n {
                                dx.extend(g[o * inner..(o + 1) * inner].iter().map(|v| v / denom));
                            }
                        }
                        dx
                    }
                };
                accumulate(grads, *x, dx);
            }
            Op::GatherRows { x, indices } => {
                let xv = self.value(*x);
                let width: usize = xv.shape()[1..].iter().product();
                let mut dx = vec![0.0; xv.numel()];
                for (r, &i) in indices.iter().enumerate() {
                    for j in 0..width {
                        dx[i * width + j] += g[r * width + j];
                    }
                }
                accumulate(grads, *x, dx);
            }
        }
    }
}

fn accumulate(grads: &mut [Option<Vec<f64>>], id: NodeId, delta: Vec<f64>) {
    match &mut grads[id.0] {
        Some(existing) => existing.iter_mut().zip(&delta).for_each(|(e, d)| *e += d),
        slot @ None => *slot = Some(delta),
    }
}

pub(crate) fn matmul_raw(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut c = vec![0.0; m * n];
    for i in 0..m {
        let row = &mut c[i * n..(i + 1) * n];
        for p in 0..k {
            let aip = a[i * k + p];
            if aip == 0.0 {
                continue;
            }
            for (cj, bj) in row.iter_mut().zip(&b[p * n..(p + 1) * n]) {
                *cj += aip * bj;
            }
        }
    }
    c
}

/// Compares an analytic gradient against central differences.
///
/// `f` returns the value and analytic gradient at a point; only the value is
/// used at the probe points `point ± h·e_i`. Returns
/// `max_i |g_i − ĝ_i| / max(1, |g_i|, |ĝ_i|)`.
pub fn finite_diff_check<F>(mut f: F, point: &[f64], h: f64) -> Result<f64, TensorError>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>), TensorError>,
{
    let (value, analytic) = f(point)?;
    if !value.is_finite() {
        return Err(TensorError::NonFinite { op: "finite_diff_check" });
    }
    if analytic.len() != point.len() {
        return Err(mismatch("finite_diff_check", &[analytic.len()], &[point.len()]));
    }
    let mut probe = point.to_vec();
    let mut worst = 0.0_f64;
    for i in 0..point.len() {
        probe[i] = point[i] + h;
        let plus = f(&probe)?.0;
        probe[i] = point[i] - h;
        let minus = f(&probe)?.0;
        probe[i] = point[i];
        if !plus.is_finite() || !minus.is_finite() {
            return Err(TensorError::NonFinite { op: "finite_diff_check" });
        }
        let numeric = (plus - minus) / (2.0 * h);
        let denom = 1.0_f64.max(analytic[i].abs()).max(numeric.abs());
        worst = worst.max((analytic[i] - numeric).abs() / denom);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn softmax_of_uniform_logits() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor::vector(vec![0.0; 3]));
        let y = t.softmax(x).unwrap();
        assert!(close(t.value(y).data(), &[1.0 / 3.0; 3], 1e-15));
    }

    #[test]
    fn layernorm_matches_hand_arithmetic() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor::vector(vec![1.0, 2.0, 3.0]));
        let g = t.leaf(Tensor::vector(vec![1.0; 3]));
        let b = t.leaf(Tensor::vector(vec![0.0; 3]));
        let y = t.layernorm(x, g, b, 1e-5).unwrap();
        // mean 2, variance 2/3
        let s = libm::sqrt(2.0 / 3.0 + 1e-5);
        assert!(close(t.value(y).data(), &[-1.0 / s, 0.0, 1.0 / s], 1e-12));
        assert!((t.value(y).data()[2] - 1.2247).abs() < 1e-4);
    }

    #[test]
    fn dropout_keep_one_and_eval_are_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut t = Tape::new();
        let x = t.leaf(Tensor::vector(vec![1.0, -2.0, 3.0]));
        assert_eq!(t.dropout(x, 1.0, Mode::Train, &mut rng).unwrap(), x);
        assert_eq!(t.dropout(x, 0.5, Mode::Eval, &mut rng).unwrap(), x);
        let y = t.dropout(x, 0.5, Mode::Train, &mut rng).unwrap();
        for (v, orig) in t.value(y).data().iter().zip([1.0, -2.0, 3.0]) {
            assert!(*v == 0.0 || *v == 2.0 * orig);
        }
        assert!(t.dropout(x, 0.0, Mode::Train, &mut rng).is_err());
    }

    #[test]
    fn backward_of_sum_is_ones() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor::matrix(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]));
        let s = t.sum(x, None).unwrap();
        let g = t.backward(s).unwrap();
        assert_eq!(g.wrt(x), Tensor::full(&[2, 3], 1.0));
    }

    #[test]
    fn backward_of_square_is_twice_x() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor::vector(vec![1.0, 2.0, 3.0]));
        let sq = t.mul(x, x).unwrap();
        let s = t.sum(sq, None).unwrap();
        assert_eq!(t.backward(s).unwrap().wrt(x).data(), &[2.0, 4.0, 6.0]);
    }

    #[test]
    fn logsumexp_gradient_is_softmax() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor::vector(vec![1.0, 2.0, 3.0]));
        let l = t.logsumexp(x).unwrap();
        let g = t.backward(l).unwrap().wrt(x);
        assert!(close(g.data(), &[0.0900, 0.2447, 0.6652], 1e-4));
        assert!(close(g.data(), &math::softmax(&[1.0, 2.0, 3.0]), 1e-15));
    }

    #[test]
    fn backward_is_repeatable() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut t = Tape::new();
        let x = t.leaf(Tensor::matrix(2, 2, vec![0.3, -0.2, 0.5, 0.9]));
        let y = t.matmul(x, x).unwrap();
        let y = t.dropout(y, 0.7, Mode::Train, &mut rng).unwrap();
        let y = t.softmax(y).unwrap();
        let l = t.log(y).unwrap();
        let s = t.sum(l, None).unwrap();
        let g1 = t.backward(s).unwrap();
        let g2 = t.backward(s).unwrap();
        assert_eq!(g1, g2);
    }

    #[test]
    fn masked_softmax_zeroes_masked_entries() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor::vector(vec![1.0, 5.0, 2.0]));
        let m = t.masked_fill(x, &[false, true, false], f64::NEG_INFINITY).unwrap();
        let y = t.softmax(m).unwrap();
        let expect = math::softmax(&[1.0, 2.0]);
        assert_eq!(t.value(y).data()[1], 0.0);
        assert!(close(&[t.value(y).data()[0], t.value(y).data()[2]], &expect, 1e-15));
        let all = t.masked_fill(x, &[true; 3], f64::NEG_INFINITY).unwrap();
        assert_eq!(t.softmax(all), Err(TensorError::FullyMasked));
    }

    #[test]
    fn errors_on_bad_shapes_and_roots() {
        let mut t = Tape::new();
        let a = t.leaf(Tensor::zeros(&[2, 3]));
        let b = t.leaf(Tensor::zeros(&[2, 3]));
        assert!(matches!(t.matmul(a, b), Err(TensorError::ShapeMismatch { .. })));
        assert!(matches!(t.backward(a), Err(TensorError::NonScalarRoot(_))));
        assert!(matches!(t.backward(NodeId(99)), Err(TensorError::UnknownNode(99))));
        let c = t.leaf(Tensor::zeros(&[4]));
        assert!(t.add(a, c).is_err());
        let z = t.leaf(Tensor::vector(vec![0.0]));
        assert!(matches!(t.log(z), Err(TensorError::NonFinite { .. })));
    }

    #[test]
    fn reshape_round_trip_is_identity() {
        let mut t = Tape::new();
        let data: Vec<f64> = (0..12).map(f64::from).collect();
        let x = t.leaf(Tensor::new(vec![3, 4], data.clone()).unwrap());
        let y = t.reshape(x, &[2, 6]).unwrap();
        let z = t.reshape(y, &[3, 4]).unwrap();
        assert_eq!(t.value(z), t.value(x));
    }

    #[test]
    fn finite_diff_on_quadratic_and_constant() {
        let quad = |p: &[f64]| Ok((math::dot(p, p), p.iter().map(|v| 2.0 * v).collect()));
        assert!(finite_diff_check(quad, &[1.0, -1.0], 1e-6).unwrap() <= 1e-7);
        let constant = |p: &[f64]| Ok((4.0, vec![0.0; p.len()]));
        assert!(finite_diff_check(constant, &[0.3, 0.1], 1e-6).unwrap() <= 1e-12);
        let bad = |p: &[f64]| Ok((if p[0] > 0.5 { f64::NAN } else { 0.0 }, vec![0.0]));
        assert!(finite_diff_check(bad, &[0.5], 1e-3).is_err());
    }

    #[test]
    fn concat_and_gather_shapes() {
        let mut t = Tape::new();
        let a = t.leaf(Tensor::matrix(2, 1, vec![1.0, 2.0]));
        let b = t.leaf(Tensor::matrix(2, 2, vec![3.0, 4.0, 5.0, 6.0]));
        let c = t.concat(&[a, b], 1).unwrap();
        assert_eq!(t.value(c).data(), &[1.0, 3.0, 4.0, 2.0, 5.0, 6.0]);
        let g = t.gather_rows(c, &[1, 1, 0]).unwrap();
        assert_eq!(t.value(g).shape(), &[3, 3]);
        assert_eq!(t.value(g).data()[..3], [2.0, 5.0, 6.0]);
    }
}
