//! Run and sweep reports and their CSV companions.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use mtlrank_core::train::ValidationRecord;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;

pub const NDCG_CONVENTION: &str =
    "NDCG@k with gain 2^y - 1 and discount log2(rank + 1); score ties by item index; queries whose ideal DCG is 0 score 1";

/// Everything a training run determines from its config and seed. Wall
/// clock times live in `timing.json` so this file is reproducible byte for
/// byte.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub run_id: String,
    pub seed: u64,
    pub config: RunConfig,
    pub tasks: Vec<String>,
    pub n_params: usize,
    pub ndcg_k: usize,
    /// Per-step task losses on the training batch.
    pub losses: Vec<Vec<f64>>,
    /// Scalarized objective or mean task loss per step.
    pub objective: Vec<f64>,
    pub validations: Vec<ValidationRecord>,
    /// Step whose parameters were kept (best mean validation NDCG).
    pub best_step: usize,
    /// Per-task NDCG@k of the kept parameters on every available split.
    pub splits: BTreeMap<String, Vec<f64>>,
    /// Split used for `final_metrics`, Δm% and fronts.
    pub final_split: String,
    pub final_metrics: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baseline: Option<Vec<f64>>,
    /// Δm% against `baseline` (negative is better).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta_m: Option<f64>,
    pub notes: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub load_seconds: f64,
    pub train_seconds: f64,
    pub eval_seconds: f64,
}

/// A set of runs filtered to its Pareto front.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrontReport {
    pub tasks: Vec<String>,
    pub run_ids: Vec<String>,
    /// Preference ray per run when known.
    pub rays: Vec<Option<Vec<f64>>>,
    /// Per-task NDCG per run (higher is better).
    pub points: Vec<Vec<f64>>,
    pub delta_m: Vec<Option<f64>>,
    pub non_dominated: Vec<bool>,
    /// Hypervolume of the negated NDCG points; `None` outside 2 or 3 tasks.
    pub hypervolume: Option<f64>,
    pub reference: Option<Vec<f64>>,
    /// Runs that failed, with their errors.
    pub failures: BTreeMap<String, String>,
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn read_report(path: &Path) -> Result<RunReport> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

/// `step, loss_<task>…, objective`.
pub fn write_trace(path: &Path, report: &RunReport) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut head = vec!["step".to_string()];
    head.extend(report.tasks.iter().map(|t| format!("loss_{t}")));
    head.push("objective".into());
    w.write_record(&head)?;
    for (i, (losses, obj)) in report.losses.iter().zip(&report.objective).enumerate() {
        let mut row = vec![(i + 1).to_string()];
        row.extend(losses.iter().map(f64::to_string));
        row.push(obj.to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// `step, ndcg_<task>…, mean`.
pub fn write_validation(path: &Path, report: &RunReport) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut head = vec!["step".to_string()];
    head.extend(report.tasks.iter().map(|t| format!("ndcg_{t}")));
    head.push("mean".into());
    w.write_record(&head)?;
    for v in &report.validations {
        let mut row = vec![v.step.to_string()];
        row.extend(v.ndcg.iter().map(f64::to_string));
        row.push(v.mean.to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// One row per run: `run_id, ndcg_<task>…, delta_m, hvi, non_dominated`.
/// The hypervolume is a property of the whole set and repeats on each row.
pub fn write_metrics(path: &Path, front: &FrontReport) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut head = vec!["run_id".to_string()];
    head.extend(front.tasks.iter().map(|t| format!("ndcg_{t}")));
    head.extend(["delta_m".into(), "hvi".into(), "non_dominated".into()]);
    w.write_record(&head)?;
    for i in 0..front.run_ids.len() {
        let mut row = vec![front.run_ids[i].clone()];
        row.extend(front.points[i].iter().map(f64::to_string));
        row.push(opt(front.delta_m[i]));
        row.push(opt(front.hypervolume));
        row.push(front.non_dominated[i].to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Non-dominated runs only: `run_id, ray…, ndcg_<task>…`.
pub fn write_front(path: &Path, front: &FrontReport) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut head = vec!["run_id".to_string()];
    head.extend(front.tasks.iter().map(|t| format!("ray_{t}")));
    head.extend(front.tasks.iter().map(|t| format!("ndcg_{t}")));
    w.write_record(&head)?;
    for i in (0..front.run_ids.len()).filter(|i| front.non_dominated[*i]) {
        let mut row = vec![front.run_ids[i].clone()];
        match &front.rays[i] {
            Some(r) => row.extend(r.iter().map(f64::to_string)),
            None => row.extend(front.tasks.iter().map(|_| String::new())),
        }
        row.extend(front.points[i].iter().map(f64::to_string));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
