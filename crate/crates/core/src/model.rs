//! Transformer cross-encoder that scores every item of a padded list.
//!
//! Items are tokens and their features are token embeddings. The network is
//! `FC → n_blocks × Encoder → FC`, where each encoder block applies
//! multi-head self-attention and a ReLU feed-forward layer, each wrapped as
//! `LayerNorm(x + Dropout(sublayer(x)))`. There is no positional encoding,
//! so scores are permutation-equivariant over the list, and padded items are
//! excluded as attention keys. A single output head is shared by all tasks.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Mode, NodeId, Tape};
use crate::balancers::GradientMatrix;
use crate::error::{ModelError, TensorError};
use crate::losses::{self, LossSpec};
use crate::math;
use crate::tensor::Tensor;

pub const LAYERNORM_EPS: f64 = 1e-5;

/// Denominator used to scale attention logits.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttentionScale {
    /// `sqrt(d_fc / n_heads)`, the per-head width.
    #[default]
    Head,
    /// `sqrt(d_fc)`, the full model width.
    Model,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RankerConfig {
    /// Input feature dimension.
    pub d_f: usize,
    /// Width of the shared projection and of every encoder block.
    pub d_fc: usize,
    pub n_blocks: usize,
    pub n_heads: usize,
    /// Hidden width of the feed-forward sublayer.
    pub d_h: usize,
    pub keep_prob: f64,
    pub max_list_len: usize,
    pub attention_scale: AttentionScale,
}

impl Default for RankerConfig {
    fn default() -> Self {
        Self {
            d_f: 132,
            d_fc: 64,
            n_blocks: 2,
            n_heads: 2,
            d_h: 128,
            keep_prob: 0.9,
            max_list_len: 128,
            attention_scale: AttentionScale::Head,
        }
    }
}

impl RankerConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let err = |m: &str| Err(ModelError::InvalidConfig(m.into()));
        if self.d_f == 0 || self.d_fc == 0 || self.n_heads == 0 || self.d_h == 0 || self.max_list_len == 0 {
            return err("all dimensions must be at least 1");
        }
        if !self.d_fc.is_multiple_of(self.n_heads) {
            return err("d_fc must be divisible by n_heads");
        }
        if !(self.keep_prob > 0.0 && self.keep_prob <= 1.0) {
            return err("keep_prob must lie in (0, 1]");
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.d_fc / self.n_heads
    }

    fn attention_denominator(&self) -> f64 {
        match self.attention_scale {
            AttentionScale::Head => self.head_dim() as f64,
            AttentionScale::Model => self.d_fc as f64,
        }
    }

    /// Number of scalars in [`RankerParams`].
    pub fn param_count(&self) -> usize {
        let (f, c, h) = (self.d_f, self.d_fc, self.d_h);
        let block = 3 * (c * c + c) // per-head q/k/v projections, all heads together
            + (c * c + c)           // output projection
            + (c * h + h) + (h * c + c)
            + 4 * c; // two layernorm gain/bias pairs
        (f * c + c) + self.n_blocks * block + (c + 1)
    }
}

/// Affine map `x W + b` with `W: in × out`.
#[derive(Clone, Debug, PartialEq)]
pub struct Linear {
    pub weight: Tensor,
    pub bias: Tensor,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerNormParams {
    pub gain: Tensor,
    pub bias: Tensor,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AttentionHead {
    pub query: Linear,
    pub key: Linear,
    pub value: Linear,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EncoderBlock {
    pub heads: Vec<AttentionHead>,
    pub output: Linear,
    pub ff_in: Linear,
    pub ff_out: Linear,
    pub norm_attention: LayerNormParams,
    pub norm_ff: LayerNormParams,
}

/// All ranker weights. The flat view orders tensors as: input projection,
/// then per block (heads in order with q, k, v each weight-then-bias),
/// output projection, feed-forward in/out, both layernorms, and finally the
/// scoring head.
#[derive(Clone, Debug, PartialEq)]
pub struct RankerParams {
    config: RankerConfig,
    pub input: Linear,
    pub blocks: Vec<EncoderBlock>,
    /// The one scoring head, `d_fc × 1`, shared by every task.
    pub head: Linear,
}

impl Linear {
    fn init<R: Rng>(rng: &mut R, fan_in: usize, fan_out: usize) -> Self {
        let bound = math::sqrt(6.0 / (fan_in + fan_out) as f64);
        let w = (0..fan_in * fan_out).map(|_| rng.random_range(-bound..bound)).collect();
        Self { weight: Tensor::matrix(fan_in, fan_out, w), bias: Tensor::zeros(&[fan_out]) }
    }

    fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Self { weight: Tensor::zeros(&[fan_in, fan_out]), bias: Tensor::zeros(&[fan_out]) }
    }
}

impl LayerNormParams {
    fn new(d: usize) -> Self {
        Self { gain: Tensor::full(&[d], 1.0), bias: Tensor::zeros(&[d]) }
    }
}

impl RankerParams {
    /// Scaled-uniform weights (bound `sqrt(6 / (fan_in + fan_out))`), zero
    /// biases and unit layernorm gains. Deterministic in `seed`.
    pub fn init(config: &RankerConfig, seed: u64) -> Result<Self, ModelError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok(Self::build(config, |fi, fo| Linear::init(&mut rng, fi, fo)))
    }

    fn build(config: &RankerConfig, mut linear: impl FnMut(usize, usize) -> Linear) -> Self {
        let (c, dh) = (config.d_fc, config.head_dim());
        let input = linear(config.d_f, c);
        let blocks = (0..config.n_blocks)
            .map(|_| EncoderBlock {
                heads: (0..config.n_heads)
                    .map(|_| AttentionHead { query: linear(c, dh), key: linear(c, dh), value: linear(c, dh) })
                    .collect(),
                output: linear(c, c),
                ff_in: linear(c, config.d_h),
                ff_out: linear(config.d_h, c),
                norm_attention: LayerNormParams::new(c),
                norm_ff: LayerNormParams::new(c),
            })
            .collect();
        let head = linear(c, 1);
        Self { config: config.clone(), input, blocks, head }
    }

    pub fn config(&self) -> &RankerConfig {
        &self.config
    }

    /// Tensors in flat-view order.
    pub fn tensors(&self) -> Vec<&Tensor> {
        let mut out = vec![&self.input.weight, &self.input.bias];
        for block in &self.blocks {
            for head in &block.heads {
                for lin in [&head.query, &head.key, &head.value] {
                    out.push(&lin.weight);
                    out.push(&lin.bias);
                }
            }
            for lin in [&block.output, &block.ff_in, &block.ff_out] {
                out.push(&lin.weight);
                out.push(&lin.bias);
            }
            for ln in [&block.norm_attention, &block.norm_ff] {
                out.push(&ln.gain);
                out.push(&ln.bias);
            }
        }
        out.push(&self.head.weight);
        out.push(&self.head.bias);
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = vec![&mut self.input.weight, &mut self.input.bias];
        for block in &mut self.blocks {
            for head in &mut block.heads {
                for lin in [&mut head.query, &mut head.key, &mut head.value] {
                    out.push(&mut lin.weight);
                    out.push(&mut lin.bias);
                }
            }
            for lin in [&mut block.output, &mut block.ff_in, &mut block.ff_out] {
                out.push(&mut lin.weight);
                out.push(&mut lin.bias);
            }
            for ln in [&mut block.norm_attention, &mut block.norm_ff] {
                out.push(&mut ln.gain);
                out.push(&mut ln.bias);
            }
        }
        out.push(&mut self.head.weight);
        out.push(&mut self.head.bias);
        out
    }

    pub fn n_params(&self) -> usize {
        self.tensors().iter().map(|t| t.numel()).sum()
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_params());
        for t in self.tensors() {
            out.extend_from_slice(t.data());
        }
        out
    }

    pub fn from_flat(config: &RankerConfig, flat: &[f64]) -> Result<Self, ModelError> {
        config.validate()?;
        let mut params = Self::build(config, Linear::zeros);
        params.set_flat(flat)?;
        Ok(params)
    }

    pub fn set_flat(&mut self, flat: &[f64]) -> Result<(), ModelError> {
        let expected = self.n_params();
        if flat.len() != expected {
            return Err(ModelError::FlatLength { got: flat.len(), expected });
        }
        let mut offset = 0;
        for t in self.tensors_mut() {
            let n = t.numel();
            t.data_mut().copy_from_slice(&flat[offset..offset + n]);
            offset += n;
        }
        Ok(())
    }

    /// Registers every tensor on `tape` as a leaf, in flat-view order.
    pub fn register(&self, tape: &mut Tape) -> ParamNodes {
        ParamNodes(self.tensors().into_iter().map(|t| tape.leaf(t.clone())).collect())
    }
}

/// Tape handles for the parameters, in flat-view order.
#[derive(Clone, Debug)]
pub struct ParamNodes(pub Vec<NodeId>);

impl ParamNodes {
    /// Concatenates the gradient of each parameter into one flat vector.
    pub fn flat_gradient(&self, grads: &crate::autodiff::Gradients) -> Vec<f64> {
        let mut out = Vec::new();
        for &id in &self.0 {
            grads.extend_into(id, &mut out);
        }
        out
    }
}

/// A batch of query lists padded to a common length.
#[derive(Clone, Debug, PartialEq)]
pub struct PaddedBatch {
    pub batch_size: usize,
    pub list_len: usize,
    pub d_f: usize,
    pub n_tasks: usize,
    /// `B × L × d_f`, row-major.
    pub features: Vec<f64>,
    /// `B × L`, true for real items.
    pub mask: Vec<bool>,
    /// `B × L × K`, row-major.
    pub labels: Vec<f64>,
}

/// One list before padding: `len × d_f` features and `len × K` labels.
#[derive(Clone, Debug, PartialEq)]
pub struct ListView<'a> {
    pub features: &'a [f64],
    pub labels: &'a [f64],
}

impl PaddedBatch {
    /// Pads `lists` to `list_len` (zero features and labels, mask false).
    pub fn from_lists(
        lists: &[ListView<'_>],
        d_f: usize,
        n_tasks: usize,
        list_len: usize,
    ) -> Result<Self, ModelError> {
        let b = lists.len();
        let mut features = vec![0.0; b * list_len * d_f];
        let mut labels = vec![0.0; b * list_len * n_tasks];
        let mut mask = vec![false; b * list_len];
        for (i, list) in lists.iter().enumerate() {
            let n = list.features.len() / d_f.max(1);
            if n == 0 || n > list_len || list.features.len() != n * d_f || list.labels.len() != n * n_tasks {
                return Err(ModelError::BatchMismatch(format!(
                    "list {i} has {} features / {} labels for list_len {list_len}",
                    list.features.len(),
                    list.labels.len()
                )));
            }
            features[i * list_len * d_f..][..n * d_f].copy_from_slice(list.features);
            labels[i * list_len * n_tasks..][..n * n_tasks].copy_from_slice(list.labels);
            mask[i * list_len..][..n].iter_mut().for_each(|m| *m = true);
        }
        Ok(Self { batch_size: b, list_len, d_f, n_tasks, features, mask, labels })
    }

    /// `B × L` labels of one task.
    pub fn task_labels(&self, task: usize) -> Vec<f64> {
        self.labels.iter().skip(task).step_by(self.n_tasks).copied().collect()
    }

    pub fn list_features(&self, b: usize) -> &[f64] {
        let w = self.list_len * self.d_f;
        &self.features[b * w..(b + 1) * w]
    }

    pub fn list_mask(&self, b: usize) -> &[bool] {
        &self.mask[b * self.list_len..(b + 1) * self.list_len]
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let (b, l) = (self.batch_size, self.list_len);
        if self.features.len() != b * l * self.d_f
            || self.mask.len() != b * l
            || self.labels.len() != b * l * self.n_tasks
        {
            return Err(ModelError::BatchMismatch("buffer lengths disagree with dimensions".into()));
        }
        for i in 0..b {
            let m = self.list_mask(i);
            if !m.iter().any(|x| *x) {
                return Err(ModelError::BatchMismatch(format!("list {i} has no real items")));
            }
            for (pos, real) in m.iter().enumerate() {
                if *real {
                    continue;
                }
                let f = &self.features[(i * l + pos) * self.d_f..][..self.d_f];
                let y = &self.labels[(i * l + pos) * self.n_tasks..][..self.n_tasks];
                if f.iter().chain(y).any(|v| *v != 0.0) {
                    return Err(ModelError::BatchMismatch(format!("padding of list {i} is not zero")));
                }
            }
        }
        Ok(())
    }
}

/// Scaled dot-product attention over one list.
///
/// `q`, `k`, `v` are `(L × d)` nodes; keys with `key_mask[j] == false` get
/// `-inf` logits. Logits are divided by `sqrt(scale_dim)`.
pub fn attention(
    tape: &mut Tape,
    q: NodeId,
    k: NodeId,
    v: NodeId,
    key_mask: &[bool],
    scale_dim: f64,
) -> Result<NodeId, TensorError> {
    let l = key_mask.len();
    if !key_mask.iter().any(|m| *m) {
        return Err(TensorError::FullyMasked);
    }
    let kt = tape.transpose(k)?;
    let logits = tape.matmul(q, kt)?;
    if tape.value(logits).shape() != [l, l] {
        return Err(TensorError::ShapeMismatch {
            op: "attention",
            lhs: tape.value(logits).shape().to_vec(),
            rhs: vec![l, l],
        });
    }
    let scaled = tape.scale(logits, 1.0 / math::sqrt(scale_dim))?;
    let weights = if key_mask.iter().all(|m| *m) {
        tape.softmax(scaled)?
    } else {
        let fill: Vec<bool> = (0..l * l).map(|idx| !key_mask[idx % l]).collect();
        let masked = tape.masked_fill(scaled, &fill, f64::NEG_INFINITY)?;
        tape.softmax(masked)?
    };
    tape.matmul(weights, v)
}

fn linear(tape: &mut Tape, x: NodeId, w: NodeId, b: NodeId) -> Result<NodeId, TensorError> {
    let xw = tape.matmul(x, w)?;
    tape.add(xw, b)
}

/// Output of a forward pass on a tape.
pub struct Forward {
    /// `(B × L)` scores.
    pub scores: NodeId,
    pub params: ParamNodes,
}

/// Records the ranker forward pass on `tape`.
pub fn forward<R: Rng + ?Sized>(
    tape: &mut Tape,
    params: &RankerParams,
    batch: &PaddedBatch,
    mode: Mode,
    rng: &mut R,
) -> Result<Forward, ModelError> {
    let cfg = params.config();
    if batch.d_f != cfg.d_f {
        return Err(ModelError::BatchMismatch(format!("batch d_f {} != model d_f {}", batch.d_f, cfg.d_f)));
    }
    batch.validate()?;
    let nodes = params.register(tape);
    let p = &nodes.0;
    let l = batch.list_len;
    let per_head = 6;
    let per_block = cfg.n_heads * per_head + 10;
    let scale_dim = cfg.attention_denominator();

    let mut list_scores = Vec::with_capacity(batch.batch_size);
    for b in 0..batch.batch_size {
        let x = tape.leaf(Tensor::matrix(l, cfg.d_f, batch.list_features(b).to_vec()));
        let mask = batch.list_mask(b);
        let mut h = linear(tape, x, p[0], p[1])?;
        for blk in 0..cfg.n_blocks {
            let base = 2 + blk * per_block;
            let mut heads = Vec::with_capacity(cfg.n_heads);
            for hd in 0..cfg.n_heads {
                let o = base + hd * per_head;
                let q = linear(tape, h, p[o], p[o + 1])?;
                let k = linear(tape, h, p[o + 2], p[o + 3])?;
                let v = linear(tape, h, p[o + 4], p[o + 5])?;
                heads.push(attention(tape, q, k, v, mask, scale_dim)?);
            }
            let o = base + cfg.n_heads * per_head;
            let joined = if heads.len() == 1 { heads[0] } else { tape.concat(&heads, 1)? };
            let multi = linear(tape, joined, p[o], p[o + 1])?;
            let multi = tape.dropout(multi, cfg.keep_prob, mode, rng)?;
            let res = tape.add(h, multi)?;
            let z = tape.layernorm(res, p[o + 6], p[o + 7], LAYERNORM_EPS)?;
            let ff = linear(tape, z, p[o + 2], p[o + 3])?;
            let ff = tape.relu(ff)?;
            let ff = linear(tape, ff, p[o + 4], p[o + 5])?;
            let ff = tape.dropout(ff, cfg.keep_prob, mode, rng)?;
            let res = tape.add(z, ff)?;
            h = tape.layernorm(res, p[o + 8], p[o + 9], LAYERNORM_EPS)?;
        }
        let n = p.len();
        list_scores.push(linear(tape, h, p[n - 2], p[n - 1])?);
    }
    let stacked = tape.concat(&list_scores, 0)?;
    let scores = tape.reshape(stacked, &[batch.batch_size, l])?;
    Ok(Forward { scores, params: nodes })
}

/// Scores every position of `batch`; padded positions are computed but
/// carry no meaning.
pub fn score<R: Rng + ?Sized>(
    params: &RankerParams,
    batch: &PaddedBatch,
    mode: Mode,
    rng: &mut R,
) -> Result<Tensor, ModelError> {
    let mut tape = Tape::new();
    let fwd = forward(&mut tape, params, batch, mode, rng)?;
    Ok(tape.value(fwd.scores).clone())
}

/// One forward pass and one backward pass per task.
///
/// Row `k` of the returned matrix is the flattened gradient of task `k`'s
/// loss with respect to every parameter; the second value holds the losses.
pub fn per_task_gradients<R: Rng + ?Sized>(
    params: &RankerParams,
    batch: &PaddedBatch,
    specs: &[LossSpec],
    mode: Mode,
    rng: &mut R,
) -> Result<(GradientMatrix, Vec<f64>), ModelError> {
    if specs.is_empty() || specs.len() != batch.n_tasks {
        return Err(ModelError::BatchMismatch(format!(
            "{} loss specs for {} tasks",
            specs.len(),
            batch.n_tasks
        )));
    }
    let mut tape = Tape::new();
    let fwd = forward(&mut tape, params, batch, mode, rng)?;
    let roots = task_losses(&mut tape, fwd.scores, batch, specs)?;
    let mut rows = Vec::with_capacity(specs.len());
    let mut values = Vec::with_capacity(specs.len());
    for (task, root) in roots.into_iter().enumerate() {
        let value = tape.value(root).data()[0];
        if !value.is_finite() {
            return Err(ModelError::NonFiniteLoss { task });
        }
        let grads = tape.backward(root)?;
        rows.push(fwd.params.flat_gradient(&grads));
        values.push(value);
    }
    Ok((GradientMatrix::from_rows(rows), values))
}

/// Records one loss node per task on `tape`.
pub fn task_losses(
    tape: &mut Tape,
    scores: NodeId,
    batch: &PaddedBatch,
    specs: &[LossSpec],
) -> Result<Vec<NodeId>, ModelError> {
    specs
        .iter()
        .enumerate()
        .map(|(task, spec)| {
            let labels = batch.task_labels(task);
            losses::loss(tape, spec, scores, &labels, &batch.mask).map_err(|e| match e {
                TensorError::NonFinite { .. } => ModelError::NonFiniteLoss { task },
                other => ModelError::Tensor(other),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> RankerConfig {
        RankerConfig { d_f: 2, d_fc: 4, n_blocks: 1, n_heads: 2, d_h: 8, keep_prob: 0.9, max_list_len: 8, ..Default::default() }
    }

    #[test]
    fn param_count_by_hand() {
        // input 2*4+4, q/k/v 3*(4*4+4), out 4*4+4, ff 4*8+8 + 8*4+4, ln 4*4, head 4+1
        let expected = 12 + 60 + 20 + 76 + 16 + 5;
        assert_eq!(tiny().param_count(), expected);
        let p = RankerParams::init(&tiny(), 1).unwrap();
        assert_eq!(p.n_params(), expected);
        assert_eq!(p.to_flat().len(), expected);
    }

    #[test]
    fn init_is_deterministic_and_flat_round_trips() {
        let a = RankerParams::init(&tiny(), 42).unwrap();
        let b = RankerParams::init(&tiny(), 42).unwrap();
        assert_eq!(a, b);
        let c = RankerParams::from_flat(&tiny(), &a.to_flat()).unwrap();
        assert_eq!(a, c);
        assert_ne!(a, RankerParams::init(&tiny(), 43).unwrap());
        assert!(RankerParams::from_flat(&tiny(), &[0.0; 3]).is_err());
    }

    #[test]
    fn zero_blocks_is_valid() {
        let cfg = RankerConfig { n_blocks: 0, ..tiny() };
        let p = RankerParams::init(&cfg, 0).unwrap();
        assert_eq!(p.n_params(), 12 + 5);
        let batch = PaddedBatch::from_lists(
            &[ListView { features: &[1.0, 2.0, 3.0, 4.0], labels: &[1.0, 0.0] }],
            2,
            1,
            3,
        )
        .unwrap();
        let s = score(&p, &batch, Mode::Eval, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(s.shape(), &[1, 3]);
    }

    #[test]
    fn single_head_output() {
        let p = RankerParams::init(&tiny(), 0).unwrap();
        assert_eq!(p.head.weight.shape(), &[4, 1]);
        assert_eq!(p.head.bias.shape(), &[1]);
    }

    #[test]
    fn invalid_configs() {
        assert!(RankerConfig { d_fc: 5, ..tiny() }.validate().is_err());
        assert!(RankerConfig { keep_prob: 0.0, ..tiny() }.validate().is_err());
        assert!(RankerConfig { d_h: 0, ..tiny() }.validate().is_err());
    }

    #[test]
    fn attention_single_item_returns_value_row() {
        let mut t = Tape::new();
        let q = t.leaf(Tensor::matrix(1, 2, vec![0.3, -1.0]));
        let k = t.leaf(Tensor::matrix(1, 2, vec![2.0, 0.5]));
        let v = t.leaf(Tensor::matrix(1, 2, vec![7.0, -3.0]));
        let out = attention(&mut t, q, k, v, &[true], 2.0).unwrap();
        assert_eq!(t.value(out).data(), &[7.0, -3.0]);
    }

    #[test]
    fn attention_zero_query_averages_unmasked_values() {
        let mut t = Tape::new();
        let q = t.leaf(Tensor::zeros(&[3, 2]));
        let k = t.leaf(Tensor::matrix(3, 2, vec![1.0, 2.0, -1.0, 0.0, 5.0, 5.0]));
        let v = t.leaf(Tensor::matrix(3, 2, vec![1.0, 2.0, 3.0, 4.0, 100.0, 100.0]));
        let out = attention(&mut t, q, k, v, &[true, true, false], 2.0).unwrap();
        for row in t.value(out).data().chunks(2) {
            assert!((row[0] - 2.0).abs() < 1e-15 && (row[1] - 3.0).abs() < 1e-15);
        }
        assert_eq!(attention(&mut t, q, k, v, &[false; 3], 2.0), Err(TensorError::FullyMasked));
    }

    #[test]
    fn attention_identity_inputs() {
        let mut t = Tape::new();
        let id = t.leaf(Tensor::matrix(2, 2, vec![1.0, 0.0, 0.0, 1.0]));
        let out = attention(&mut t, id, id, id, &[true, true], 2.0).unwrap();
        // softmax([1/sqrt2, 0]) computed directly
        let e = math::exp(1.0 / math::sqrt(2.0));
        let w0 = e / (e + 1.0);
        let row = &t.value(out).data()[..2];
        assert!((row[0] - w0).abs() < 1e-15 && (row[1] - (1.0 - w0)).abs() < 1e-15);
        assert!((row[0] - 0.6698).abs() < 1e-4);
    }

    #[test]
    fn per_task_gradients_duplicate_tasks_give_equal_rows() {
        let cfg = tiny();
        let p = RankerParams::init(&cfg, 5).unwrap();
        let feats = [0.1, 0.2, -0.3, 0.4, 0.5, -0.6];
        let labels = [2.0, 2.0, 0.0, 0.0, 1.0, 1.0];
        let batch = PaddedBatch::from_lists(&[ListView { features: &feats, labels: &labels }], 2, 2, 4).unwrap();
        let spec = LossSpec::ListNet;
        let (g, l) = per_task_gradients(&p, &batch, &[spec.clone(), spec], Mode::Eval, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(g.row(0), g.row(1));
        assert_eq!(l[0], l[1]);
        assert_eq!(g.cols(), cfg.param_count());
    }

    #[test]
    fn padding_must_be_zero() {
        let mut batch = PaddedBatch::from_lists(
            &[ListView { features: &[1.0, 2.0], labels: &[1.0] }],
            2,
            1,
            2,
        )
        .unwrap();
        assert!(batch.validate().is_ok());
        batch.features[3] = 1.0;
        assert!(batch.validate().is_err());
    }
}
