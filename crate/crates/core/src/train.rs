//! Training loop, validation and evaluation.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Mode, Tape};
use crate::balancers::{Balancer, BalancerKind, BalancerState, Preference};
use crate::data::{eval_batches, Batcher, MultiTaskDataset};
use crate::error::{ModelError, TrainError};
use crate::losses::LossSpec;
use crate::metrics::ndcg_for_scores;
use crate::model::{self, RankerConfig, RankerParams};
use crate::optim::{Optimizer, OptimizerConfig};

fn default_steps() -> usize {
    1000
}
fn default_batch_size() -> usize {
    16
}
fn default_validate_every() -> usize {
    100
}
fn default_k() -> usize {
    30
}
fn default_eval_batch() -> usize {
    64
}

/// Loop settings independent of data and model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSettings {
    #[serde(default = "default_steps")]
    pub steps: usize,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
    /// Validate every this many steps (and after the last step).
    #[serde(default = "default_validate_every")]
    pub validate_every: usize,
    /// NDCG cutoff for validation and evaluation.
    #[serde(default = "default_k")]
    pub ndcg_k: usize,
    #[serde(default = "default_eval_batch")]
    pub eval_batch_size: usize,
    #[serde(default)]
    pub seed: u64,
}

impl Default for TrainSettings {
    fn default() -> Self {
        Self {
            steps: default_steps(),
            batch_size: default_batch_size(),
            optimizer: OptimizerConfig::default(),
            validate_every: default_validate_every(),
            ndcg_k: default_k(),
            eval_batch_size: default_eval_batch(),
            seed: 0,
        }
    }
}

/// Everything a run needs besides the data.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainSetup {
    pub model: RankerConfig,
    pub losses: Vec<LossSpec>,
    pub balancer: BalancerKind,
    pub preference: Preference,
    pub settings: TrainSettings,
}

impl TrainSetup {
    pub fn validate(&self, n_tasks: usize, d_in: usize) -> Result<(), TrainError> {
        self.model.validate()?;
        let cfg = |m: alloc::string::String| Err(TrainError::Config(m));
        if self.model.d_f != d_in {
            return cfg(format!("model d_f {} but the data has {d_in} input columns", self.model.d_f));
        }
        if self.losses.len() != n_tasks {
            return cfg(format!("{} loss specs for {n_tasks} tasks", self.losses.len()));
        }
        if self.preference.len() != n_tasks {
            return cfg(format!("preference of length {} for {n_tasks} tasks", self.preference.len()));
        }
        for spec in &self.losses {
            spec.validate().map_err(ModelError::from)?;
        }
        if let Err(m) = self.settings.optimizer.validate() {
            return cfg(m.into());
        }
        let s = &self.settings;
        if s.batch_size == 0 || s.validate_every == 0 || s.ndcg_k == 0 || s.eval_batch_size == 0 {
            return cfg("batch sizes, validation cadence and k must be positive".into());
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationRecord {
    pub step: usize,
    pub ndcg: Vec<f64>,
    pub mean: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    /// Per-step task losses on the training batch.
    pub losses: Vec<Vec<f64>>,
    /// Balancer objective (scalarizing kinds) or mean loss per step.
    pub objective: Vec<f64>,
    pub validations: Vec<ValidationRecord>,
    /// Step of the retained parameters (0 means the initial parameters).
    pub best_step: usize,
}

#[derive(Clone, Debug)]
pub struct TrainOutput {
    pub log: TrainLog,
    /// Parameters with the best mean validation NDCG (final ones without
    /// validation data).
    pub best: RankerParams,
    pub last: RankerParams,
    pub balancer: BalancerState,
    pub optimizer: Optimizer,
}

/// Trains a ranker. Each step draws a batch, computes the K task losses,
/// and updates the parameters with the configured optimizer: scalarizing
/// balancers backpropagate their objective, the others replace the gradient
/// with the balancer's direction.
pub fn train(
    setup: &TrainSetup,
    train_ds: &MultiTaskDataset,
    vali_ds: Option<&MultiTaskDataset>,
) -> Result<TrainOutput, TrainError> {
    let k = train_ds.n_tasks();
    setup.validate(k, train_ds.d_in())?;
    if let Some(v) = vali_ds {
        if v.n_tasks() != k || v.d_in() != train_ds.d_in() {
            return Err(TrainError::Config("validation data does not match the training data".into()));
        }
    }
    let s = &setup.settings;
    let mut params = RankerParams::init(&setup.model, s.seed)?;
    let mut balancer = Balancer::new(setup.balancer.clone(), k)?;
    let n_params = params.n_params();
    let n_aux = balancer.aux_params().len();
    let mut optimizer = Optimizer::new(s.optimizer.clone(), n_params + n_aux);
    let mut batcher = Batcher::new(train_ds, s.batch_size, setup.model.max_list_len, s.seed.wrapping_add(1))?;
    let mut rng = ChaCha8Rng::seed_from_u64(s.seed.wrapping_add(2));
    let scalarizing = setup.balancer.scalarization().is_some();

    let mut log = TrainLog { losses: Vec::with_capacity(s.steps), objective: Vec::with_capacity(s.steps), validations: Vec::new(), best_step: 0 };
    let mut best = params.clone();
    let mut best_mean = f64::NEG_INFINITY;
    let mut flat = params.to_flat();
    flat.extend_from_slice(balancer.aux_params());

    for step in 1..=s.steps {
        let batch = batcher.next_batch()?;
        let nonfinite = |e: ModelError| match e {
            ModelError::NonFiniteLoss { task } => TrainError::NonFiniteLoss { step, task },
            other => TrainError::Model(other),
        };
        let (values, mut direction, objective) = if scalarizing {
            let mut tape = Tape::new();
            let fwd = model::forward(&mut tape, &params, &batch, Mode::Train, &mut rng).map_err(nonfinite)?;
            let roots = model::task_losses(&mut tape, fwd.scores, &batch, &setup.losses).map_err(nonfinite)?;
            let values: Vec<f64> = roots.iter().map(|r| tape.value(*r).data()[0]).collect();
            if let Some(task) = values.iter().position(|v| !v.is_finite()) {
                return Err(TrainError::NonFiniteLoss { step, task });
            }
            let sc = balancer.scalarize(&values, &setup.preference, &mut rng)?.expect("scalarizing kind");
            let mut total = tape.scale(roots[0], sc.loss_weights[0])?;
            for (root, w) in roots.iter().zip(&sc.loss_weights).skip(1) {
                let term = tape.scale(*root, *w)?;
                total = tape.add(total, term)?;
            }
            let grads = tape.backward(total)?;
            let mut direction = fwd.params.flat_gradient(&grads);
            if let Some(aux) = &sc.aux_gradient {
                direction.extend_from_slice(aux);
            }
            (values, direction, sc.value)
        } else {
            let (g, values) =
                model::per_task_gradients(&params, &batch, &setup.losses, Mode::Train, &mut rng).map_err(nonfinite)?;
            let c = balancer.combine(&values, &g, &setup.preference, &mut rng)?;
            let mean = values.iter().sum::<f64>() / k as f64;
            (values, c.direction, mean)
        };
        direction.resize(n_params + n_aux, 0.0);
        optimizer.step(&mut flat, &direction);
        params.set_flat(&flat[..n_params])?;
        balancer.aux_params_mut().copy_from_slice(&flat[n_params..]);
        log.losses.push(values);
        log.objective.push(objective);

        if let Some(v) = vali_ds {
            if step % s.validate_every == 0 || step == s.steps {
                let ndcg = evaluate(&params, v, s.ndcg_k, s.eval_batch_size)?;
                let mean = ndcg.iter().sum::<f64>() / k as f64;
                if mean > best_mean {
                    best_mean = mean;
                    best = params.clone();
                    log.best_step = step;
                }
                log.validations.push(ValidationRecord { step, ndcg, mean });
            }
        }
    }
    if vali_ds.is_none() {
        best = params.clone();
        log.best_step = s.steps;
    }
    Ok(TrainOutput { log, best, last: params, balancer: balancer.state().clone(), optimizer })
}

/// Per-task mean NDCG@k over the queries of `ds`, scored in eval mode on
/// full lists.
pub fn evaluate(params: &RankerParams, ds: &MultiTaskDataset, k: usize, batch_size: usize) -> Result<Vec<f64>, TrainError> {
    let scores = score_dataset(params, ds, batch_size)?;
    ndcg_per_task(ds, &scores, k)
}

/// Eval-mode scores for every query, unpadded.
pub fn score_dataset(params: &RankerParams, ds: &MultiTaskDataset, batch_size: usize) -> Result<Vec<Vec<f64>>, TrainError> {
    if ds.d_in() != params.config().d_f {
        return Err(ModelError::BatchMismatch(format!("data has {} columns, model expects {}", ds.d_in(), params.config().d_f)).into());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut out = Vec::with_capacity(ds.queries.len());
    let mut qi = 0;
    for batch in eval_batches(ds, batch_size)? {
        let scores = model::score(params, &batch, Mode::Eval, &mut rng)?;
        for b in 0..batch.batch_size {
            let n = ds.queries[qi].n_items;
            out.push(scores.data()[b * batch.list_len..b * batch.list_len + n].to_vec());
            qi += 1;
        }
    }
    Ok(out)
}

/// Per-task mean NDCG@k for given per-query scores.
pub fn ndcg_per_task(ds: &MultiTaskDataset, scores: &[Vec<f64>], k: usize) -> Result<Vec<f64>, TrainError> {
    let n_tasks = ds.n_tasks();
    let mut sums = vec![0.0; n_tasks];
    for (q, s) in ds.queries.iter().zip(scores) {
        for (t, sum) in sums.iter_mut().enumerate() {
            *sum += ndcg_for_scores(s, &q.task_labels(t, n_tasks), k)?;
        }
    }
    let n = ds.queries.len().max(1) as f64;
    Ok(sums.into_iter().map(|v| v / n).collect())
}

/// Per-task mean NDCG@k of uniformly random orderings, averaged over
/// `orderings` draws per query.
pub fn random_ordering_ndcg(ds: &MultiTaskDataset, k: usize, orderings: usize, seed: u64) -> Result<Vec<f64>, TrainError> {
    let n_tasks = ds.n_tasks();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sums = vec![0.0; n_tasks];
    for q in &ds.queries {
        let mut perm: Vec<usize> = (0..q.n_items).collect();
        for _ in 0..orderings {
            perm.shuffle(&mut rng);
            for (t, sum) in sums.iter_mut().enumerate() {
                let labels = q.task_labels(t, n_tasks);
                let ranked: Vec<f64> = perm.iter().map(|&i| labels[i]).collect();
                *sum += crate::metrics::ndcg_at_k(&ranked, k)?;
            }
        }
    }
    let n = (ds.queries.len() * orderings).max(1) as f64;
    Ok(sums.into_iter().map(|v| v / n).collect())
}

/// Mean of the first and last `window` entries of a series.
pub fn windowed_means(series: &[f64], window: usize) -> (f64, f64) {
    let w = window.clamp(1, series.len().max(1));
    let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len().max(1) as f64;
    (mean(&series[..w.min(series.len())]), mean(&series[series.len().saturating_sub(w)..]))
}
