//! Loading splits from LETOR files or the synthetic generator, plus the
//! binary dataset cache.
//!
//! Cache layout (all integers little-endian):
//!
//! ```text
//! magic        16 bytes  "MTLRANK-DATA-V1\0"
//! header_len   u64
//! header       header_len bytes of JSON: source key, tasks, input columns,
//!              bin edges, normalization stats, (qid, n_items) per query
//! body         per query: n_items·d_in feature f64s, then n_items·K label f64s
//! ```

use std::fs;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use mtlrank_core::data::{derive_tasks, normalize_features, parse_letor, Grading, NormStats, Query};
use mtlrank_core::synthetic::{self, SyntheticSpec};
use mtlrank_core::{MultiTaskDataset, TaskDerivationSpec, TaskId};
use serde::{Deserialize, Serialize};

use crate::config::DataConfig;

pub const DATA_MAGIC: &[u8; 16] = b"MTLRANK-DATA-V1\0";

/// Everything needed to turn another LETOR file into model inputs the way
/// the training split was prepared. Stored in checkpoints.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DataPrep {
    pub spec: TaskDerivationSpec,
    pub bin_edges: Vec<Option<Vec<f64>>>,
    pub norm: Option<NormStats>,
}

#[derive(Clone, Debug)]
pub struct Splits {
    pub train: MultiTaskDataset,
    pub vali: Option<MultiTaskDataset>,
    pub test: Option<MultiTaskDataset>,
    pub prep: DataPrep,
}

impl Splits {
    /// The split final metrics are reported on: test, else validation,
    /// else training.
    pub fn report_split(&self) -> (&'static str, &MultiTaskDataset) {
        match (&self.test, &self.vali) {
            (Some(t), _) => ("test", t),
            (None, Some(v)) => ("vali", v),
            _ => ("train", &self.train),
        }
    }
}

/// Derivation spec under which LETOR files written from synthetic data
/// reproduce its labels: task `k ≥ 1` is feature `d_f + k`, ungraded.
pub fn synthetic_task_spec(spec: &SyntheticSpec) -> TaskDerivationSpec {
    let d = spec.d_f as u32;
    TaskDerivationSpec {
        auxiliary: (1..spec.n_tasks as u32).map(|t| d + t).collect(),
        grading: Grading::Raw,
        tasks: Vec::new(),
        n_features: d + spec.n_tasks as u32 - 1,
    }
}

/// Task display names: `grade` for task 0, `f<id>` for feature labels.
pub fn task_names(tasks: &[TaskId]) -> Vec<String> {
    tasks.iter().map(|t| if *t == TaskId::GRADE { "grade".to_string() } else { format!("f{}", t.0) }).collect()
}

fn split_paths(cfg: &DataConfig) -> Result<(PathBuf, Option<PathBuf>, Option<PathBuf>)> {
    let pick = |explicit: &Option<PathBuf>, name: &str| -> Option<PathBuf> {
        explicit.clone().or_else(|| cfg.dir.as_ref().map(|d| d.join(name)).filter(|p| p.exists()))
    };
    let train = pick(&cfg.train, "train.txt").context("no training data: set data.dir, data.train or data.synthetic")?;
    Ok((train, pick(&cfg.vali, "vali.txt"), pick(&cfg.test, "test.txt")))
}

pub fn load(cfg: &DataConfig) -> Result<Splits> {
    if let Some(syn) = &cfg.synthetic {
        let full = synthetic::generate(&syn.spec).dataset;
        if syn.n_train == 0 || syn.n_train + syn.n_vali > full.queries.len() {
            bail!("synthetic split {}+{} does not fit {} queries", syn.n_train, syn.n_vali, full.queries.len());
        }
        let [mut train, mut vali, mut test] = synthetic::split(&full, syn.n_train, syn.n_vali);
        let norm = if cfg.normalize {
            let stats = normalize_features(&mut train, None)?;
            normalize_features(&mut vali, Some(&stats))?;
            normalize_features(&mut test, Some(&stats))?;
            Some(stats)
        } else {
            None
        };
        let prep = DataPrep { spec: synthetic_task_spec(&syn.spec), bin_edges: train.bin_edges.clone(), norm };
        let nonempty = |d: MultiTaskDataset| (!d.queries.is_empty()).then_some(d);
        return Ok(Splits { train, vali: nonempty(vali), test: nonempty(test), prep });
    }
    let (train_path, vali_path, test_path) = split_paths(cfg)?;
    let (train, prep) = load_training_file(&train_path, &cfg.tasks, cfg.normalize, cfg.cache)?;
    let other = |p: Option<PathBuf>| p.map(|p| load_with_prep(&p, &prep, cfg.cache)).transpose();
    Ok(Splits { vali: other(vali_path)?, test: other(test_path)?, train, prep })
}

/// Parses and prepares a training file, computing bin edges and
/// normalization statistics from it.
pub fn load_training_file(
    path: &Path,
    spec: &TaskDerivationSpec,
    normalize: bool,
    cache: bool,
) -> Result<(MultiTaskDataset, DataPrep)> {
    let key = CacheKey::new(path, spec, None, if normalize { NormKey::Own } else { NormKey::None })?;
    let ds = cached(path, &key, cache, || {
        let raw = parse_letor(&read(path)?).with_context(|| format!("parsing {}", path.display()))?;
        let mut ds = derive_tasks(&raw, spec, None)?;
        if normalize {
            normalize_features(&mut ds, None)?;
        }
        Ok(ds)
    })?;
    let prep = DataPrep { spec: spec.clone(), bin_edges: ds.bin_edges.clone(), norm: ds.norm.clone() };
    Ok((ds, prep))
}

/// Parses a file and prepares it with stored edges and statistics.
pub fn load_with_prep(path: &Path, prep: &DataPrep, cache: bool) -> Result<MultiTaskDataset> {
    let key = CacheKey::new(
        path,
        &prep.spec,
        Some(prep.bin_edges.clone()),
        prep.norm.clone().map_or(NormKey::None, NormKey::Stored),
    )?;
    cached(path, &key, cache, || {
        let raw = parse_letor(&read(path)?).with_context(|| format!("parsing {}", path.display()))?;
        let mut ds = derive_tasks(&raw, &prep.spec, Some(&prep.bin_edges))?;
        if let Some(stats) = &prep.norm {
            normalize_features(&mut ds, Some(stats))?;
        }
        Ok(ds)
    })
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

/// Identifies the source file and the preparation applied to it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct CacheKey {
    source_len: u64,
    source_modified_ns: u128,
    spec: TaskDerivationSpec,
    edges: Option<Vec<Option<Vec<f64>>>>,
    norm: NormKey,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum NormKey {
    None,
    /// Statistics computed from the file itself.
    Own,
    Stored(NormStats),
}

impl CacheKey {
    fn new(
        path: &Path,
        spec: &TaskDerivationSpec,
        edges: Option<Vec<Option<Vec<f64>>>>,
        norm: NormKey,
    ) -> Result<Self> {
        let meta = fs::metadata(path).with_context(|| format!("reading {}", path.display()))?;
        let modified = meta.modified().ok().and_then(|t| t.duration_since(std::time::UNIX_EPOCH).ok());
        Ok(Self {
            source_len: meta.len(),
            source_modified_ns: modified.map_or(0, |d| d.as_nanos()),
            spec: spec.clone(),
            edges,
            norm,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct CacheHeader {
    key: CacheKey,
    tasks: Vec<TaskId>,
    input_columns: Vec<u32>,
    bin_edges: Vec<Option<Vec<f64>>>,
    norm: Option<NormStats>,
    queries: Vec<(String, usize)>,
}

pub fn cache_path(source: &Path) -> PathBuf {
    let mut name = source.file_name().unwrap_or_default().to_os_string();
    name.push(".mtlrank-cache");
    source.with_file_name(name)
}

fn cached(
    path: &Path,
    key: &CacheKey,
    enabled: bool,
    build: impl FnOnce() -> Result<MultiTaskDataset>,
) -> Result<MultiTaskDataset> {
    if !enabled {
        return build();
    }
    let cpath = cache_path(path);
    if let Ok(Some(ds)) = read_cache(&cpath, key) {
        return Ok(ds);
    }
    let ds = build()?;
    write_cache(&cpath, key, &ds)?;
    Ok(ds)
}

fn write_cache(path: &Path, key: &CacheKey, ds: &MultiTaskDataset) -> Result<()> {
    let header = CacheHeader {
        key: key.clone(),
        tasks: ds.tasks.clone(),
        input_columns: ds.input_columns.clone(),
        bin_edges: ds.bin_edges.clone(),
        norm: ds.norm.clone(),
        queries: ds.queries.iter().map(|q| (q.qid.clone(), q.n_items)).collect(),
    };
    let json = serde_json::to_vec(&header)?;
    let mut out = BufWriter::new(fs::File::create(path).with_context(|| format!("creating {}", path.display()))?);
    out.write_all(DATA_MAGIC)?;
    out.write_all(&(json.len() as u64).to_le_bytes())?;
    out.write_all(&json)?;
    for q in &ds.queries {
        for v in q.features.iter().chain(&q.labels) {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    out.flush()?;
    Ok(())
}

/// `Ok(None)` when the cache belongs to a different source or preparation.
fn read_cache(path: &Path, key: &CacheKey) -> Result<Option<MultiTaskDataset>> {
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    let mut r = Reader { bytes: &bytes, pos: 0 };
    if r.take(16)? != DATA_MAGIC {
        bail!("{} is not a dataset cache", path.display());
    }
    let n = r.u64()? as usize;
    let header: CacheHeader = serde_json::from_slice(r.take(n)?)?;
    if header.key != *key {
        return Ok(None);
    }
    let (d, k) = (header.input_columns.len(), header.tasks.len());
    let mut queries = Vec::with_capacity(header.queries.len());
    for (qid, n_items) in header.queries {
        let features = r.f64s(n_items * d)?;
        let labels = r.f64s(n_items * k)?;
        queries.push(Query { qid, n_items, features, labels });
    }
    if r.pos != bytes.len() {
        bail!("trailing bytes in {}", path.display());
    }
    let ds = MultiTaskDataset {
        tasks: header.tasks,
        input_columns: header.input_columns,
        queries,
        bin_edges: header.bin_edges,
        norm: header.norm,
    };
    ds.validate()?;
    Ok(Some(ds))
}

pub(crate) struct Reader<'a> {
    pub bytes: &'a [u8],
    pub pos: usize,
}

impl<'a> Reader<'a> {
    pub fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|e| *e <= self.bytes.len()).context("unexpected end of file")?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    pub fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    pub fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(n.checked_mul(8).context("length overflow")?)?;
        Ok(raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect())
    }
}
