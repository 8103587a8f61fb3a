//! LETOR ranking data: parsing, multi-task label derivation, feature
//! normalization and padded batching.
//!
//! Lines look like `<grade> qid:<id> <fid>:<val> ... [# comment]`. Feature ids
//! are 1-based and missing ids read as zero.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt::Write as _;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::DataError;
use crate::math;
use crate::model::{ListView, PaddedBatch};

/// Feature count of WEB30K-format files.
pub const WEB30K_FEATURES: u32 = 136;

#[derive(Clone, Debug, PartialEq)]
pub struct RawItem {
    pub grade: u32,
    /// Sparse features sorted by id.
    pub features: Vec<(u32, f64)>,
}

impl RawItem {
    pub fn feature(&self, id: u32) -> f64 {
        self.features.binary_search_by_key(&id, |(f, _)| *f).map_or(0.0, |i| self.features[i].1)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RawQuery {
    pub qid: String,
    pub items: Vec<RawItem>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RawDataset {
    pub queries: Vec<RawQuery>,
}

impl RawDataset {
    pub fn n_items(&self) -> usize {
        self.queries.iter().map(|q| q.items.len()).sum()
    }

    pub fn max_feature_id(&self) -> u32 {
        self.queries
            .iter()
            .flat_map(|q| &q.items)
            .filter_map(|i| i.features.last().map(|(f, _)| *f))
            .max()
            .unwrap_or(0)
    }
}

/// Incremental line parser; items are grouped by qid in first-seen order.
#[derive(Debug, Default)]
pub struct LetorParser {
    queries: Vec<RawQuery>,
    index: BTreeMap<String, usize>,
}

impl LetorParser {
    pub fn new() -> Self {
        Self::default()
    }

    /// Parses one line (`line_no` is 1-based, for error messages). Blank and
    /// comment-only lines are skipped.
    pub fn push_line(&mut self, line_no: usize, line: &str) -> Result<(), DataError> {
        let body = line.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            return Ok(());
        }
        let err = |message: String| DataError::Parse { line: line_no, message };
        let mut tokens = body.split_whitespace();
        let grade_tok = tokens.next().expect("non-empty line");
        let grade: u32 = grade_tok.parse().map_err(|_| err(format!("invalid grade {grade_tok:?}")))?;
        let qid_tok = tokens.next().ok_or_else(|| err("missing qid".into()))?;
        let qid = qid_tok
            .strip_prefix("qid:")
            .filter(|q| !q.is_empty())
            .ok_or_else(|| err(format!("expected qid:<id>, got {qid_tok:?}")))?;
        let mut features = Vec::new();
        for tok in tokens {
            let (id, val) = tok.split_once(':').ok_or_else(|| err(format!("malformed feature {tok:?}")))?;
            let id: u32 = id.parse().map_err(|_| err(format!("invalid feature id in {tok:?}")))?;
            if id == 0 {
                return Err(err("feature ids are 1-based".into()));
            }
            let val: f64 = val.parse().map_err(|_| err(format!("invalid feature value in {tok:?}")))?;
            if !val.is_finite() {
                return Err(err(format!("non-finite feature value in {tok:?}")));
            }
            features.push((id, val));
        }
        features.sort_by_key(|(id, _)| *id);
        if let Some(w) = features.windows(2).find(|w| w[0].0 == w[1].0) {
            return Err(err(format!("duplicate feature id {}", w[0].0)));
        }
        let item = RawItem { grade, features };
        match self.index.get(qid) {
            Some(&i) => self.queries[i].items.push(item),
            None => {
                self.index.insert(qid.to_string(), self.queries.len());
                self.queries.push(RawQuery { qid: qid.to_string(), items: vec![item] });
            }
        }
        Ok(())
    }

    pub fn finish(self) -> Result<RawDataset, DataError> {
        if self.queries.is_empty() {
            return Err(DataError::Empty);
        }
        Ok(RawDataset { queries: self.queries })
    }
}

pub fn parse_letor(text: &str) -> Result<RawDataset, DataError> {
    let mut parser = LetorParser::new();
    for (i, line) in text.lines().enumerate() {
        parser.push_line(i + 1, line)?;
    }
    parser.finish()
}

/// Serializes in LETOR format; values use the shortest exact decimal form,
/// so parsing the output reproduces the dataset.
pub fn write_letor(raw: &RawDataset) -> String {
    let mut out = String::new();
    for q in &raw.queries {
        for item in &q.items {
            write_item(&mut out, &q.qid, item);
        }
    }
    out
}

pub fn write_item(out: &mut String, qid: &str, item: &RawItem) {
    let _ = write!(out, "{} qid:{}", item.grade, qid);
    for (id, v) in &item.features {
        let _ = write!(out, " {id}:{v}");
    }
    out.push('\n');
}

/// A relevance criterion: `0` is the graded label, any other value names the
/// feature column used as an auxiliary label.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TaskId(pub u32);

impl TaskId {
    pub const GRADE: TaskId = TaskId(0);
}

impl core::fmt::Display for TaskId {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(f, "task{}", self.0)
    }
}

/// How auxiliary feature values become labels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Grading {
    /// `bins` quantile grades with edges from the training split.
    QuantileBins { bins: usize },
    /// The feature value itself (must be nonnegative).
    Raw,
}

fn default_aux() -> Vec<u32> {
    vec![131, 132, 133, 135]
}
fn default_grading() -> Grading {
    Grading::QuantileBins { bins: 5 }
}
fn default_n_features() -> u32 {
    WEB30K_FEATURES
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskDerivationSpec {
    /// Feature ids used as labels and removed from the inputs.
    #[serde(default = "default_aux")]
    pub auxiliary: Vec<u32>,
    #[serde(default = "default_grading")]
    pub grading: Grading,
    /// Selected tasks; empty means all of them.
    #[serde(default)]
    pub tasks: Vec<TaskId>,
    #[serde(default = "default_n_features")]
    pub n_features: u32,
}

impl Default for TaskDerivationSpec {
    fn default() -> Self {
        Self { auxiliary: default_aux(), grading: default_grading(), tasks: Vec::new(), n_features: WEB30K_FEATURES }
    }
}

impl TaskDerivationSpec {
    pub fn validate(&self) -> Result<(), DataError> {
        for (i, a) in self.auxiliary.iter().enumerate() {
            if *a == 0 || *a > self.n_features {
                return Err(DataError::MissingAuxiliary(*a));
            }
            if self.auxiliary[..i].contains(a) {
                return Err(DataError::InvalidSpec(format!("auxiliary id {a} repeated")));
            }
        }
        if let Grading::QuantileBins { bins } = self.grading {
            if bins < 2 {
                return Err(DataError::InvalidSpec("quantile grading needs at least 2 bins".into()));
            }
        }
        for (i, t) in self.tasks.iter().enumerate() {
            if *t != TaskId::GRADE && !self.auxiliary.contains(&t.0) {
                return Err(DataError::InvalidSpec(format!("{t} is neither the grade nor an auxiliary id")));
            }
            if self.tasks[..i].contains(t) {
                return Err(DataError::InvalidSpec(format!("{t} selected twice")));
            }
        }
        Ok(())
    }

    /// The grade followed by every auxiliary label.
    pub fn all_tasks(&self) -> Vec<TaskId> {
        let mut t = vec![TaskId::GRADE];
        t.extend(self.auxiliary.iter().map(|a| TaskId(*a)));
        t
    }

    pub fn selected_tasks(&self) -> Vec<TaskId> {
        if self.tasks.is_empty() {
            self.all_tasks()
        } else {
            self.tasks.clone()
        }
    }

    /// Every unordered pair of tasks, for bi-objective runs.
    pub fn pairs(&self) -> Vec<[TaskId; 2]> {
        let all = self.all_tasks();
        let mut out = Vec::new();
        for i in 0..all.len() {
            for j in i + 1..all.len() {
                out.push([all[i], all[j]]);
            }
        }
        out
    }

    /// Feature ids kept as model inputs, ascending.
    pub fn input_columns(&self) -> Vec<u32> {
        (1..=self.n_features).filter(|f| !self.auxiliary.contains(f)).collect()
    }

    pub fn d_in(&self) -> usize {
        self.input_columns().len()
    }
}

/// A query with dense inputs and per-task labels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Query {
    pub qid: String,
    pub n_items: usize,
    /// `n_items × d_in`, row-major.
    pub features: Vec<f64>,
    /// `n_items × K`, row-major.
    pub labels: Vec<f64>,
}

impl Query {
    pub fn task_labels(&self, task: usize, n_tasks: usize) -> Vec<f64> {
        self.labels.iter().skip(task).step_by(n_tasks).copied().collect()
    }
}

/// Per-column statistics of the signed-log transformed features.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

const ZERO_VARIANCE: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MultiTaskDataset {
    pub tasks: Vec<TaskId>,
    /// Original feature id of every input column.
    pub input_columns: Vec<u32>,
    pub queries: Vec<Query>,
    /// Quantile edges per task (`None` for the grade and raw grading).
    pub bin_edges: Vec<Option<Vec<f64>>>,
    pub norm: Option<NormStats>,
}

impl MultiTaskDataset {
    pub fn d_in(&self) -> usize {
        self.input_columns.len()
    }

    pub fn n_tasks(&self) -> usize {
        self.tasks.len()
    }

    pub fn n_items(&self) -> usize {
        self.queries.iter().map(|q| q.n_items).sum()
    }

    pub fn validate(&self) -> Result<(), DataError> {
        let (d, k) = (self.d_in(), self.n_tasks());
        if self.bin_edges.len() != k {
            return Err(DataError::Dimension(format!("{} bin edge sets for {k} tasks", self.bin_edges.len())));
        }
        for q in &self.queries {
            if q.n_items == 0 || q.features.len() != q.n_items * d || q.labels.len() != q.n_items * k {
                return Err(DataError::Dimension(format!("query {} has inconsistent buffers", q.qid)));
            }
            if let Some(pos) = q.labels.iter().position(|v| !v.is_finite() || *v < 0.0) {
                return Err(DataError::InvalidLabel { task: pos % k, qid: q.qid.clone(), value: q.labels[pos] });
            }
        }
        Ok(())
    }

    /// Keeps only the listed task columns, in the given order.
    pub fn select_tasks(&self, tasks: &[TaskId]) -> Result<Self, DataError> {
        let cols: Vec<usize> = tasks
            .iter()
            .map(|t| {
                self.tasks.iter().position(|x| x == t).ok_or_else(|| DataError::InvalidSpec(format!("{t} not in dataset")))
            })
            .collect::<Result<_, _>>()?;
        let k = self.n_tasks();
        let queries = self
            .queries
            .iter()
            .map(|q| Query {
                qid: q.qid.clone(),
                n_items: q.n_items,
                features: q.features.clone(),
                labels: (0..q.n_items).flat_map(|i| cols.iter().map(move |c| q.labels[i * k + c])).collect(),
            })
            .collect();
        Ok(Self {
            tasks: tasks.to_vec(),
            input_columns: self.input_columns.clone(),
            queries,
            bin_edges: cols.iter().map(|c| self.bin_edges[*c].clone()).collect(),
            norm: self.norm.clone(),
        })
    }
}

/// Sorted, deduplicated `i/bins` quantiles (lower nearest rank) of `values`.
pub fn quantile_edges(values: &[f64], bins: usize) -> Vec<f64> {
    if values.is_empty() {
        return Vec::new();
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let mut edges: Vec<f64> = (1..bins).map(|i| sorted[(i * (n - 1)) / bins]).collect();
    edges.dedup();
    edges
}

/// Grade of `v`: the number of edges strictly below it.
pub fn bin_label(v: f64, edges: &[f64]) -> f64 {
    edges.iter().filter(|e| **e < v).count() as f64
}

/// Builds the multi-task dataset. `edges` carries the training split's
/// quantile edges when deriving validation or test data; `None` computes
/// them from `raw`.
pub fn derive_tasks(
    raw: &RawDataset,
    spec: &TaskDerivationSpec,
    edges: Option<&[Option<Vec<f64>>]>,
) -> Result<MultiTaskDataset, DataError> {
    spec.validate()?;
    let max = raw.max_feature_id();
    if max > spec.n_features {
        return Err(DataError::FeatureOutOfRange { id: max, max: spec.n_features });
    }
    let tasks = spec.selected_tasks();
    let input_columns = spec.input_columns();
    let bin_edges: Vec<Option<Vec<f64>>> = match edges {
        Some(e) if e.len() == tasks.len() => e.to_vec(),
        Some(e) => return Err(DataError::Dimension(format!("{} edge sets for {} tasks", e.len(), tasks.len()))),
        None => tasks
            .iter()
            .map(|t| match (&spec.grading, *t) {
                (_, TaskId::GRADE) | (Grading::Raw, _) => None,
                (Grading::QuantileBins { bins }, TaskId(f)) => {
                    let values: Vec<f64> = raw.queries.iter().flat_map(|q| &q.items).map(|i| i.feature(f)).collect();
                    Some(quantile_edges(&values, *bins))
                }
            })
            .collect(),
    };
    let k = tasks.len();
    let d = input_columns.len();
    let mut queries = Vec::with_capacity(raw.queries.len());
    for q in &raw.queries {
        let n = q.items.len();
        let mut features = Vec::with_capacity(n * d);
        let mut labels = Vec::with_capacity(n * k);
        for item in &q.items {
            features.extend(input_columns.iter().map(|c| item.feature(*c)));
            for (t, task) in tasks.iter().enumerate() {
                let value = if *task == TaskId::GRADE { item.grade as f64 } else { item.feature(task.0) };
                let label = match &bin_edges[t] {
                    Some(e) => bin_label(value, e),
                    None => value,
                };
                if !label.is_finite() || label < 0.0 {
                    return Err(DataError::InvalidLabel { task: t, qid: q.qid.clone(), value: label });
                }
                labels.push(label);
            }
        }
        queries.push(Query { qid: q.qid.clone(), n_items: n, features, labels });
    }
    Ok(MultiTaskDataset { tasks, input_columns, queries, bin_edges, norm: None })
}

/// `sign(v) · log(1 + |v|)`.
pub fn signed_log(v: f64) -> f64 {
    if v < 0.0 {
        -math::ln_1p(-v)
    } else {
        math::ln_1p(v)
    }
}

/// Applies the signed-log transform and a per-column z-score. Statistics
/// are computed from `ds` unless `stats` is given (validation and test
/// splits reuse the training statistics). Zero-variance columns become 0.
pub fn normalize_features(ds: &mut MultiTaskDataset, stats: Option<&NormStats>) -> Result<NormStats, DataError> {
    let d = ds.d_in();
    for q in &mut ds.queries {
        q.features.iter_mut().for_each(|v| *v = signed_log(*v));
    }
    let stats = match stats {
        Some(s) if s.mean.len() == d && s.std.len() == d => s.clone(),
        Some(s) => return Err(DataError::Dimension(format!("stats for {} columns, data has {d}", s.mean.len()))),
        None => {
            let n = ds.n_items().max(1) as f64;
            let mut mean = vec![0.0; d];
            for q in &ds.queries {
                for row in q.features.chunks(d) {
                    math::axpy(1.0, row, &mut mean);
                }
            }
            mean.iter_mut().for_each(|m| *m /= n);
            let mut var = vec![0.0; d];
            for q in &ds.queries {
                for row in q.features.chunks(d) {
                    for j in 0..d {
                        var[j] += (row[j] - mean[j]) * (row[j] - mean[j]);
                    }
                }
            }
            NormStats { mean, std: var.into_iter().map(|v| math::sqrt(v / n)).collect() }
        }
    };
    for q in &mut ds.queries {
        for row in q.features.chunks_mut(d) {
            for j in 0..d {
                row[j] = if stats.std[j] <= ZERO_VARIANCE { 0.0 } else { (row[j] - stats.mean[j]) / stats.std[j] };
            }
        }
    }
    ds.norm = Some(stats.clone());
    Ok(stats)
}

/// Chooses which items of an over-long list to keep: a random positive item
/// per task first (when one exists), then random fill up to `cap`. Returned
/// indices are ascending.
pub fn truncate_indices<R: Rng + ?Sized>(labels: &[f64], n_tasks: usize, cap: usize, rng: &mut R) -> Vec<usize> {
    let n = labels.len() / n_tasks.max(1);
    if n <= cap {
        return (0..n).collect();
    }
    let mut keep = vec![false; n];
    let mut kept = 0;
    for t in 0..n_tasks {
        if kept == cap {
            break;
        }
        let positives: Vec<usize> = (0..n).filter(|&i| labels[i * n_tasks + t] > 0.0).collect();
        if positives.iter().any(|&i| keep[i]) {
            continue;
        }
        if let Some(&i) = positives.choose(rng) {
            keep[i] = true;
            kept += 1;
        }
    }
    let mut rest: Vec<usize> = (0..n).filter(|&i| !keep[i]).collect();
    rest.shuffle(rng);
    for i in rest.into_iter().take(cap - kept) {
        keep[i] = true;
    }
    (0..n).filter(|&i| keep[i]).collect()
}

/// Pads the given lists to the longest one.
pub fn pad_queries(ds: &MultiTaskDataset, lists: &[(usize, Vec<usize>)]) -> Result<PaddedBatch, DataError> {
    let (d, k) = (ds.d_in(), ds.n_tasks());
    let owned: Vec<(Vec<f64>, Vec<f64>)> = lists
        .iter()
        .map(|(qi, items)| {
            let q = &ds.queries[*qi];
            let f = items.iter().flat_map(|&i| q.features[i * d..(i + 1) * d].iter().copied()).collect();
            let y = items.iter().flat_map(|&i| q.labels[i * k..(i + 1) * k].iter().copied()).collect();
            (f, y)
        })
        .collect();
    let list_len = lists.iter().map(|(_, items)| items.len()).max().unwrap_or(0);
    let views: Vec<ListView<'_>> = owned.iter().map(|(f, y)| ListView { features: f, labels: y }).collect();
    PaddedBatch::from_lists(&views, d, k, list_len).map_err(|e| DataError::Dimension(e.to_string()))
}

/// Deterministic, endless stream of shuffled training batches.
///
/// Epoch `e` uses an RNG seeded from `(seed, e)` to shuffle the queries and
/// truncate lists longer than `max_list_len`. The last batch of an epoch may
/// be smaller.
pub struct Batcher<'a> {
    ds: &'a MultiTaskDataset,
    batch_size: usize,
    max_list_len: usize,
    seed: u64,
    epoch: u64,
    order: Vec<usize>,
    pos: usize,
    rng: ChaCha8Rng,
}

impl<'a> Batcher<'a> {
    pub fn new(ds: &'a MultiTaskDataset, batch_size: usize, max_list_len: usize, seed: u64) -> Result<Self, DataError> {
        if batch_size == 0 || max_list_len == 0 {
            return Err(DataError::InvalidSpec("batch size and list cap must be positive".into()));
        }
        if ds.queries.is_empty() {
            return Err(DataError::Empty);
        }
        let mut b = Self {
            ds,
            batch_size,
            max_list_len,
            seed,
            epoch: 0,
            order: Vec::new(),
            pos: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
        };
        b.start_epoch();
        Ok(b)
    }

    fn start_epoch(&mut self) {
        self.rng = ChaCha8Rng::seed_from_u64(self.seed ^ self.epoch.wrapping_mul(0x9E37_79B9_7F4A_7C15));
        self.order = (0..self.ds.queries.len()).collect();
        self.order.shuffle(&mut self.rng);
        self.pos = 0;
    }

    pub fn epoch(&self) -> u64 {
        self.epoch
    }

    pub fn next_batch(&mut self) -> Result<PaddedBatch, DataError> {
        if self.pos >= self.order.len() {
            self.epoch += 1;
            self.start_epoch();
        }
        let end = (self.pos + self.batch_size).min(self.order.len());
        let k = self.ds.n_tasks();
        let mut lists = Vec::with_capacity(end - self.pos);
        for &qi in &self.order[self.pos..end] {
            let items = truncate_indices(&self.ds.queries[qi].labels, k, self.max_list_len, &mut self.rng);
            lists.push((qi, items));
        }
        self.pos = end;
        pad_queries(self.ds, &lists)
    }
}

/// Evaluation batches in dataset order with full lists.
pub fn eval_batches(ds: &MultiTaskDataset, batch_size: usize) -> Result<Vec<PaddedBatch>, DataError> {
    let idx: Vec<usize> = (0..ds.queries.len()).collect();
    idx.chunks(batch_size.max(1))
        .map(|chunk| {
            let lists: Vec<(usize, Vec<usize>)> =
                chunk.iter().map(|&qi| (qi, (0..ds.queries[qi].n_items).collect())).collect();
            pad_queries(ds, &lists)
        })
        .collect()
}
