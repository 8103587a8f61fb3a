//! Training runs, sweeps, baselines, evaluation and front assembly.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, ensure, Context, Result};
use mtlrank_core::metrics::{default_reference, delta_m, hypervolume, pareto_filter};
use mtlrank_core::train::{self, evaluate};
use mtlrank_core::{BalancerKind, MetricPoint, TaskDerivationSpec};

use crate::checkpoint::{self, CheckpointHeader};
use crate::config::RunConfig;
use crate::dataset::{self, load_with_prep, task_names, DataPrep, Splits};
use crate::report::{
    read_report, write_front, write_json, write_metrics, write_trace, write_validation, FrontReport, RunReport, Timing,
    NDCG_CONVENTION,
};

/// Trains on already loaded splits and writes `report.json`, `timing.json`,
/// `trace.csv`, `validation.csv`, `metrics.csv`, `best.ckpt` and
/// `last.ckpt` into `out`.
pub fn train_on(cfg: &RunConfig, splits: &Splits, out: &Path, run_id: &str) -> Result<RunReport> {
    let start = Instant::now();
    let k = splits.train.n_tasks();
    let setup = cfg.setup(k, splits.train.d_in())?;
    let trained = train::train(&setup, &splits.train, splits.vali.as_ref())?;
    let train_seconds = start.elapsed().as_secs_f64();

    let start = Instant::now();
    let s = &cfg.train;
    let mut by_split = BTreeMap::new();
    let parts = [("train", Some(&splits.train)), ("vali", splits.vali.as_ref()), ("test", splits.test.as_ref())];
    for (name, ds) in parts {
        if let Some(ds) = ds {
            by_split.insert(name.to_string(), evaluate(&trained.best, ds, s.ndcg_k, s.eval_batch_size)?);
        }
    }
    let eval_seconds = start.elapsed().as_secs_f64();
    let (final_split, _) = splits.report_split();
    let final_metrics = by_split[final_split].clone();
    let tasks = task_names(&splits.train.tasks);

    let mut notes = vec![NDCG_CONVENTION.to_string()];
    let (baseline, dm) = match &cfg.baselines {
        Some(path) => {
            let values = read_baselines(path, &tasks)?;
            let dm = delta_m(&MetricPoint::maximize(final_metrics.clone()), &MetricPoint::maximize(values.clone()))?;
            notes.push(format!(
                "delta_m against {}: single-task runs of the same architecture with LS weight 1",
                path.display()
            ));
            (Some(values), Some(dm))
        }
        None => (None, None),
    };

    let report = RunReport {
        run_id: run_id.to_string(),
        seed: s.seed,
        config: cfg.clone(),
        tasks,
        n_params: trained.best.n_params(),
        ndcg_k: s.ndcg_k,
        losses: trained.log.losses.clone(),
        objective: trained.log.objective.clone(),
        validations: trained.log.validations.clone(),
        best_step: trained.log.best_step,
        splits: by_split,
        final_split: final_split.to_string(),
        final_metrics,
        baseline,
        delta_m: dm,
        notes,
    };

    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    write_json(&out.join("report.json"), &report)?;
    write_json(&out.join("timing.json"), &Timing { load_seconds: 0.0, train_seconds, eval_seconds })?;
    write_trace(&out.join("trace.csv"), &report)?;
    write_validation(&out.join("validation.csv"), &report)?;
    write_metrics(&out.join("metrics.csv"), &front_of(std::slice::from_ref(&report), &[None], BTreeMap::new()))?;
    let header = |step| CheckpointHeader {
        model: cfg.model.clone(),
        prep: splits.prep.clone(),
        tasks: splits.train.tasks.clone(),
        balancer: trained.balancer.clone(),
        optimizer: trained.optimizer.clone(),
        step,
    };
    checkpoint::save(&out.join("best.ckpt"), &header(trained.log.best_step), &trained.best)?;
    checkpoint::save(&out.join("last.ckpt"), &header(s.steps), &trained.last)?;
    Ok(report)
}

/// Loads the configured data and trains once.
pub fn run_train(cfg: &RunConfig, out: &Path) -> Result<RunReport> {
    let start = Instant::now();
    let splits = dataset::load(&cfg.data)?;
    let load_seconds = start.elapsed().as_secs_f64();
    let report = train_on(cfg, &splits, out, &run_id(out))?;
    let timing_path = out.join("timing.json");
    let mut timing: Timing = serde_json::from_str(&fs::read_to_string(&timing_path)?)?;
    timing.load_seconds = load_seconds;
    write_json(&timing_path, &timing)?;
    Ok(report)
}

fn run_id(out: &Path) -> String {
    out.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_else(|| "run".into())
}

fn read_baselines(path: &Path, tasks: &[String]) -> Result<Vec<f64>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let map: BTreeMap<String, f64> = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    tasks
        .iter()
        .map(|t| map.get(t).copied().with_context(|| format!("{} has no baseline for task {t}", path.display())))
        .collect()
}

/// Evenly spaced bi-objective rays `(i/(n+1), 1 − i/(n+1))`.
pub fn default_rays(n: usize) -> Vec<Vec<f64>> {
    mtlrank_core::toy::default_rays(n)
}

/// Rays from a text file: one ray per line, comma or whitespace separated.
pub fn read_rays(path: &Path) -> Result<Vec<Vec<f64>>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut rays = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let ray = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|t| !t.is_empty())
            .map(|t| t.parse::<f64>().with_context(|| format!("{}:{}: bad number {t:?}", path.display(), i + 1)))
            .collect::<Result<Vec<_>>>()?;
        rays.push(ray);
    }
    ensure!(!rays.is_empty(), "{} contains no rays", path.display());
    Ok(rays)
}

/// Seed offset derived from the ray itself, so repeated rays repeat runs.
pub fn ray_seed(seed: u64, ray: &[f64]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for v in ray {
        for b in v.to_bits().to_le_bytes() {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
    }
    seed ^ h
}

/// One training run per ray in `out/ray_XX`, then the Pareto filter and
/// hypervolume over the final metrics. Failed rays are recorded and
/// skipped.
pub fn run_sweep(cfg: &RunConfig, rays: &[Vec<f64>], out: &Path) -> Result<FrontReport> {
    ensure!(!rays.is_empty(), "a sweep needs at least one ray");
    let splits = dataset::load(&cfg.data)?;
    let mut reports = Vec::new();
    let mut used = Vec::new();
    let mut failures = BTreeMap::new();
    for (i, ray) in rays.iter().enumerate() {
        let id = format!("ray_{i:02}");
        let mut c = cfg.clone();
        c.balancer.preference = Some(ray.clone());
        c.train.seed = ray_seed(cfg.train.seed, ray);
        match train_on(&c, &splits, &out.join(&id), &id) {
            Ok(r) => {
                reports.push(r);
                used.push(Some(ray.clone()));
            }
            Err(e) => {
                failures.insert(id, format!("{e:#}"));
            }
        }
    }
    let front = front_of(&reports, &used, failures);
    write_json(&out.join("sweep.json"), &front)?;
    write_metrics(&out.join("metrics.csv"), &front)?;
    write_front(&out.join("front.csv"), &front)?;
    Ok(front)
}

/// Filters reports to their front and computes the hypervolume of the
/// negated NDCG points against the default reference.
pub fn front_of(reports: &[RunReport], rays: &[Option<Vec<f64>>], failures: BTreeMap<String, String>) -> FrontReport {
    let points: Vec<Vec<f64>> = reports.iter().map(|r| r.final_metrics.clone()).collect();
    let mps: Vec<MetricPoint> = points.iter().map(|p| MetricPoint::maximize(p.clone())).collect();
    let non_dominated = pareto_filter(&mps).map(|f| f.non_dominated).unwrap_or_else(|_| vec![false; mps.len()]);
    let k = points.first().map_or(0, Vec::len);
    let (hv, reference) = if (2..=3).contains(&k) && points.iter().all(|p| p.len() == k) {
        let mins: Vec<Vec<f64>> = mps.iter().map(MetricPoint::minimization).collect();
        let reference = default_reference(&mins);
        (hypervolume(&mins, &reference).ok(), Some(reference))
    } else {
        (None, None)
    };
    FrontReport {
        tasks: reports.first().map(|r| r.tasks.clone()).unwrap_or_default(),
        run_ids: reports.iter().map(|r| r.run_id.clone()).collect(),
        rays: rays.to_vec(),
        points,
        delta_m: reports.iter().map(|r| r.delta_m).collect(),
        non_dominated,
        hypervolume: hv,
        reference,
        failures,
    }
}

/// Front over existing `report.json` files matched by `pattern`.
pub fn run_pareto(pattern: &str, out: Option<&Path>) -> Result<FrontReport> {
    let mut paths: Vec<PathBuf> = glob::glob(pattern)?.collect::<Result<_, _>>()?;
    paths.sort();
    ensure!(!paths.is_empty(), "no reports match {pattern}");
    let mut reports = Vec::new();
    for p in &paths {
        let mut r = read_report(p)?;
        if let Some(parent) = p.parent() {
            r.run_id = parent.display().to_string();
        }
        reports.push(r);
    }
    let tasks = &reports[0].tasks;
    if let Some(bad) = reports.iter().find(|r| &r.tasks != tasks) {
        bail!("report {} has tasks {:?}, expected {:?}", bad.run_id, bad.tasks, tasks);
    }
    let rays: Vec<Option<Vec<f64>>> = reports.iter().map(|r| r.config.balancer.preference.clone()).collect();
    let front = front_of(&reports, &rays, BTreeMap::new());
    if let Some(out) = out {
        fs::create_dir_all(out)?;
        write_json(&out.join("pareto.json"), &front)?;
        write_metrics(&out.join("metrics.csv"), &front)?;
        write_front(&out.join("front.csv"), &front)?;
    }
    Ok(front)
}

/// Single-task LS runs with the configured architecture and seed, one per
/// task. Returns task name → final metric and writes `baselines.json`.
pub fn run_baselines(cfg: &RunConfig, out: &Path) -> Result<BTreeMap<String, f64>> {
    let splits = dataset::load(&cfg.data)?;
    let names = task_names(&splits.train.tasks);
    let losses = cfg.loss_specs(names.len());
    let mut values = BTreeMap::new();
    for (t, name) in names.iter().enumerate() {
        let pick = |ds: &mtlrank_core::MultiTaskDataset| ds.select_tasks(&[ds.tasks[t]]);
        let single = Splits {
            train: pick(&splits.train)?,
            vali: splits.vali.as_ref().map(pick).transpose()?,
            test: splits.test.as_ref().map(pick).transpose()?,
            prep: DataPrep {
                spec: TaskDerivationSpec { tasks: vec![splits.train.tasks[t]], ..splits.prep.spec.clone() },
                bin_edges: vec![splits.prep.bin_edges[t].clone()],
                norm: splits.prep.norm.clone(),
            },
        };
        let mut c = cfg.clone();
        c.losses = vec![losses[t].clone()];
        c.balancer.kind = BalancerKind::Ls;
        c.balancer.preference = Some(vec![1.0]);
        c.balancer.ideal = None;
        c.baselines = None;
        let id = format!("single_{name}");
        let r = train_on(&c, &single, &out.join(&id), &id)?;
        values.insert(name.clone(), r.final_metrics[0]);
    }
    fs::create_dir_all(out)?;
    write_json(&out.join("baselines.json"), &values)?;
    Ok(values)
}

/// Per-split NDCG@k of a checkpoint on LETOR data: a fold directory or a
/// single file. Data is prepared with the checkpoint's stored edges and
/// statistics.
pub fn evaluate_checkpoint(ckpt: &Path, data: &Path, k: usize, batch_size: usize) -> Result<BTreeMap<String, Vec<f64>>> {
    let c = checkpoint::load(ckpt)?;
    let files: Vec<(String, PathBuf)> = if data.is_dir() {
        ["train", "vali", "test"]
            .iter()
            .map(|s| (s.to_string(), data.join(format!("{s}.txt"))))
            .filter(|(_, p)| p.exists())
            .collect()
    } else {
        vec![(data.file_stem().map_or("data".into(), |s| s.to_string_lossy().into_owned()), data.to_path_buf())]
    };
    ensure!(!files.is_empty(), "no train.txt, vali.txt or test.txt in {}", data.display());
    let mut out = BTreeMap::new();
    for (name, path) in files {
        let ds = load_with_prep(&path, &c.header.prep, false)?;
        let ds = if ds.tasks == c.header.tasks { ds } else { ds.select_tasks(&c.header.tasks)? };
        out.insert(name, evaluate(&c.params, &ds, k, batch_size)?);
    }
    Ok(out)
}
