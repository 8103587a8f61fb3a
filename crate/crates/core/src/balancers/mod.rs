//! Multi-task balancers: turn K per-task losses and the gradient matrix
//! `G` (K × n_params) into one update direction `d`.
//!
//! Most kinds choose task weights `w` and return `d = Gᵀw`; the rest
//! (PCGrad, GradDrop, CAGrad, EC, ...) build `d` by other rules. Scalarizing
//! kinds also expose the weights `∂objective/∂L_k`, so a trainer can instead
//! backpropagate the scalar objective directly.

mod conflict;
mod impartial;
mod pareto;
mod scalarize;
mod simplex;
mod surgery;

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::BalanceError;
use crate::math::{self, Matrix};

pub use conflict::{cagrad, cagrad_weights, sdmgrad, sdmgrad_weights};
pub use impartial::{famo_step, imtl_g, nash_weights, FamoState, ImtlOutput, NashOutput};
pub use pareto::{ec_direction, epo_direction, log_transform, wc_mgda_direction, EpoMode, EpoOutput, WcMgdaOutput};
pub use scalarize::{chebyshev, scalarize, ScalarizeKind, Scalarized};
pub use simplex::{min_norm_from_gram, min_norm_weights, simplex_qp};
pub use surgery::{graddrop, pcgrad, pcgrad_detailed, PcGradOutput};

/// Per-task flattened gradients, one row per task.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientMatrix {
    tasks: usize,
    cols: usize,
    data: Vec<f64>,
}

impl GradientMatrix {
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Self {
        let tasks = rows.len();
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(tasks * cols);
        for r in rows {
            assert_eq!(r.len(), cols, "gradient rows must have equal length");
            data.extend(r);
        }
        Self { tasks, cols, data }
    }

    pub fn n_tasks(&self) -> usize {
        self.tasks
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.data[k * self.cols..(k + 1) * self.cols]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks(self.cols.max(1)).take(self.tasks)
    }

    /// `G Gᵀ`.
    pub fn gram(&self) -> Matrix {
        let k = self.tasks;
        let mut m = Matrix::zeros(k, k);
        for i in 0..k {
            for j in i..k {
                let v = math::dot(self.row(i), self.row(j));
                m.set(i, j, v);
                m.set(j, i, v);
            }
        }
        m
    }

    /// `Gᵀ w = Σ_k w_k g_k`.
    pub fn combine(&self, weights: &[f64]) -> Vec<f64> {
        assert_eq!(weights.len(), self.tasks);
        let mut d = vec![0.0; self.cols];
        for (w, row) in weights.iter().zip(self.rows()) {
            if *w != 0.0 {
                math::axpy(*w, row, &mut d);
            }
        }
        d
    }

    pub fn mean_row(&self) -> Vec<f64> {
        self.combine(&vec![1.0 / self.tasks as f64; self.tasks])
    }

    /// Multiplies row `k` by `factors[k]`.
    pub fn scale_rows(&self, factors: &[f64]) -> Self {
        let mut out = self.clone();
        for (k, f) in factors.iter().enumerate() {
            out.data[k * self.cols..(k + 1) * self.cols].iter_mut().for_each(|v| *v *= f);
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Nonnegative task weights summing to one.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimplexWeights(Vec<f64>);

impl SimplexWeights {
    pub fn uniform(k: usize) -> Self {
        Self(vec![1.0 / k as f64; k])
    }

    /// Clamps roundoff negatives to zero and renormalizes. Falls back to
    /// uniform weights when nothing positive remains.
    pub fn normalized(mut w: Vec<f64>) -> Self {
        w.iter_mut().for_each(|v| *v = v.max(0.0));
        let s: f64 = w.iter().sum();
        if s > 0.0 && s.is_finite() {
            w.iter_mut().for_each(|v| *v /= s);
            Self(w)
        } else {
            Self::uniform(w.len())
        }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// A preference ray over tasks plus the ideal point used by Chebyshev-type
/// methods.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Preference {
    ray: Vec<f64>,
    ideal: Vec<f64>,
}

impl Preference {
    /// Normalizes `ray` to sum to one. Every entry must be positive.
    pub fn new(ray: Vec<f64>) -> Result<Self, BalanceError> {
        let k = ray.len();
        Self::with_ideal(ray, vec![0.0; k])
    }

    pub fn with_ideal(ray: Vec<f64>, ideal: Vec<f64>) -> Result<Self, BalanceError> {
        if ray.is_empty() || ray.iter().any(|r| !(*r > 0.0) || !r.is_finite()) {
            return Err(BalanceError::InvalidParameter("preference entries must be positive".into()));
        }
        if ideal.len() != ray.len() || ideal.iter().any(|z| !z.is_finite()) {
            return Err(BalanceError::InvalidParameter("ideal point must match the ray".into()));
        }
        let s: f64 = ray.iter().sum();
        Ok(Self { ray: ray.into_iter().map(|r| r / s).collect(), ideal })
    }

    pub fn uniform(k: usize) -> Self {
        Self { ray: vec![1.0 / k as f64; k], ideal: vec![0.0; k] }
    }

    pub fn ray(&self) -> &[f64] {
        &self.ray
    }

    pub fn ideal(&self) -> &[f64] {
        &self.ideal
    }

    pub fn len(&self) -> usize {
        self.ray.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ray.is_empty()
    }
}

fn default_mu() -> f64 {
    50.0
}
fn default_temperature() -> f64 {
    2.0
}
fn default_c() -> f64 {
    0.4
}
fn default_lambda() -> f64 {
    0.3
}
fn default_inner() -> usize {
    500
}
fn default_nash_iters() -> usize {
    100
}
fn default_famo_lr() -> f64 {
    0.025
}
fn default_rho() -> f64 {
    1.0
}
fn default_eps_scale() -> f64 {
    1.0
}

/// The supported algorithms and their parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BalancerKind {
    /// Linear scalarization `Σ r_k L_k`.
    Ls,
    /// Scale-invariant linear scalarization `Σ r_k log L_k`.
    Sils,
    /// Weighted Chebyshev `max_k r_k (L_k − z_k)`.
    Wc,
    /// Log-sum-exp smoothed weighted Chebyshev.
    SoftWc {
        #[serde(default = "default_mu")]
        mu: f64,
    },
    Epo,
    WcMgda,
    /// Random loss weighting.
    Rlw,
    Uncertainty,
    /// Dynamic weight average.
    Dwa {
        #[serde(default = "default_temperature")]
        temperature: f64,
    },
    Mgda,
    #[serde(rename = "graddrop")]
    GradDrop,
    #[serde(rename = "pcgrad")]
    PcGrad,
    LogMgda,
    #[serde(rename = "cagrad")]
    CaGrad {
        #[serde(default = "default_c")]
        c: f64,
    },
    #[serde(rename = "log_cagrad")]
    LogCaGrad {
        #[serde(default = "default_c")]
        c: f64,
    },
    Imtl,
    LogImtl,
    #[serde(rename = "nashmtl")]
    NashMtl {
        #[serde(default = "default_nash_iters")]
        max_iters: usize,
    },
    Famo {
        #[serde(default = "default_famo_lr")]
        lr: f64,
    },
    #[serde(rename = "sdmgrad")]
    SdmGrad {
        #[serde(default = "default_lambda")]
        lambda: f64,
        #[serde(default = "default_inner")]
        inner_iters: usize,
    },
    /// Epsilon-constraint: minimize the primary loss with `L_k ≤ eps_k`.
    /// Without explicit bounds, `eps_k = eps_scale · r_k`.
    Ec {
        #[serde(default)]
        primary: usize,
        #[serde(default)]
        eps: Option<Vec<f64>>,
        #[serde(default = "default_eps_scale")]
        eps_scale: f64,
        #[serde(default = "default_rho")]
        rho: f64,
    },
}

impl BalancerKind {
    /// Every kind with default parameters.
    pub fn all() -> Vec<BalancerKind> {
        use BalancerKind::*;
        vec![
            Ls,
            Sils,
            Wc,
            SoftWc { mu: default_mu() },
            Epo,
            WcMgda,
            Rlw,
            Uncertainty,
            Dwa { temperature: default_temperature() },
            Mgda,
            GradDrop,
            PcGrad,
            LogMgda,
            CaGrad { c: default_c() },
            LogCaGrad { c: default_c() },
            Imtl,
            LogImtl,
            NashMtl { max_iters: default_nash_iters() },
            Famo { lr: default_famo_lr() },
            SdmGrad { lambda: default_lambda(), inner_iters: default_inner() },
            Ec { primary: 0, eps: None, eps_scale: default_eps_scale(), rho: default_rho() },
        ]
    }

    pub fn name(&self) -> &'static str {
        use BalancerKind::*;
        match self {
            Ls => "ls",
            Sils => "sils",
            Wc => "wc",
            SoftWc { .. } => "soft_wc",
            Epo => "epo",
            WcMgda => "wc_mgda",
            Rlw => "rlw",
            Uncertainty => "uncertainty",
            Dwa { .. } => "dwa",
            Mgda => "mgda",
            GradDrop => "graddrop",
            PcGrad => "pcgrad",
            LogMgda => "log_mgda",
            CaGrad { .. } => "cagrad",
            LogCaGrad { .. } => "log_cagrad",
            Imtl => "imtl",
            LogImtl => "log_imtl",
            NashMtl { .. } => "nashmtl",
            Famo { .. } => "famo",
            SdmGrad { .. } => "sdmgrad",
            Ec { .. } => "ec",
        }
    }

    /// Kind with default parameters from its name.
    pub fn from_name(name: &str) -> Option<BalancerKind> {
        Self::all().into_iter().find(|k| k.name() == name)
    }

    /// Kinds that reduce the losses to one scalar objective.
    pub fn scalarization(&self) -> Option<ScalarizeKind> {
        use BalancerKind::*;
        Some(match *self {
            Ls => ScalarizeKind::Ls,
            Sils => ScalarizeKind::Sils,
            Wc => ScalarizeKind::Chebyshev { mu: 0.0 },
            SoftWc { mu } => ScalarizeKind::Chebyshev { mu },
            Rlw => ScalarizeKind::Rlw,
            Uncertainty => ScalarizeKind::Uncertainty,
            Dwa { temperature } => ScalarizeKind::Dwa { temperature },
            _ => return None,
        })
    }

    /// Whether the method targets a specific region of the Pareto front.
    pub fn finds_pareto_front(&self) -> bool {
        use BalancerKind::*;
        matches!(self, Ls | Sils | Wc | SoftWc { .. } | Epo | WcMgda | Ec { .. })
    }

    fn validate(&self) -> Result<(), BalanceError> {
        use BalancerKind::*;
        let bad = |m: &str| Err(BalanceError::InvalidParameter(m.into()));
        match self {
            SoftWc { mu } if !(*mu > 0.0) => bad("soft_wc mu must be positive"),
            Dwa { temperature } if !(*temperature > 0.0) => bad("dwa temperature must be positive"),
            CaGrad { c } | LogCaGrad { c } if !(0.0..1.0).contains(c) => bad("cagrad c must lie in [0, 1)"),
            SdmGrad { lambda, .. } if !(*lambda >= 0.0) => bad("sdmgrad lambda must be nonnegative"),
            Famo { lr } if !(*lr > 0.0) => bad("famo lr must be positive"),
            NashMtl { max_iters: 0 } => bad("nashmtl needs at least one iteration"),
            Ec { rho, eps_scale, .. } if !(*rho > 0.0) || !(*eps_scale > 0.0) => {
                bad("ec rho and eps_scale must be positive")
            }
            _ => Ok(()),
        }
    }
}

/// Persistent per-algorithm data.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Memory {
    #[default]
    Stateless,
    /// Losses of the two previous steps, oldest first.
    Dwa { history: Vec<Vec<f64>> },
    Famo(FamoState),
    /// Learnable log-variances `s_k`.
    Uncertainty { log_vars: Vec<f64> },
    Nash { warm_start: Option<Vec<f64>> },
    SdmGrad { warm_start: Option<Vec<f64>> },
    Ec { multipliers: Vec<f64> },
    Imtl { fallbacks: u64 },
}

/// Balancer state that persists across steps and is stored in checkpoints.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BalancerState {
    pub kind: BalancerKind,
    pub step: u64,
    pub memory: Memory,
}

/// Result of one balancer call.
#[derive(Clone, Debug, PartialEq)]
pub struct Combination {
    /// Update direction, used in place of the raw gradient.
    pub direction: Vec<f64>,
    /// Task weights when the method produces them (`d = Gᵀw` for
    /// simplex-weighted kinds).
    pub weights: Option<Vec<f64>>,
    /// Gradient for extra learnable parameters (uncertainty log-variances).
    pub aux_gradient: Option<Vec<f64>>,
    /// Scalar objective value for scalarizing kinds.
    pub objective: Option<f64>,
}

/// A balancer together with its state.
#[derive(Clone, Debug, PartialEq)]
pub struct Balancer {
    state: BalancerState,
}

impl Balancer {
    pub fn new(kind: BalancerKind, n_tasks: usize) -> Result<Self, BalanceError> {
        kind.validate()?;
        let memory = match &kind {
            BalancerKind::Dwa { .. } => Memory::Dwa { history: Vec::new() },
            BalancerKind::Famo { .. } => Memory::Famo(FamoState::new(n_tasks)),
            BalancerKind::Uncertainty => Memory::Uncertainty { log_vars: vec![0.0; n_tasks] },
            BalancerKind::NashMtl { .. } => Memory::Nash { warm_start: None },
            BalancerKind::SdmGrad { .. } => Memory::SdmGrad { warm_start: None },
            BalancerKind::Ec { .. } => Memory::Ec { multipliers: vec![0.0; n_tasks] },
            BalancerKind::Imtl | BalancerKind::LogImtl => Memory::Imtl { fallbacks: 0 },
            _ => Memory::Stateless,
        };
        Ok(Self { state: BalancerState { kind, step: 0, memory } })
    }

    pub fn from_state(state: BalancerState) -> Result<Self, BalanceError> {
        state.kind.validate()?;
        Ok(Self { state })
    }

    pub fn kind(&self) -> &BalancerKind {
        &self.state.kind
    }

    pub fn state(&self) -> &BalancerState {
        &self.state
    }

    /// Extra learnable parameters owned by the balancer (uncertainty
    /// weighting's log-variances); empty for other kinds.
    pub fn aux_params(&self) -> &[f64] {
        match &self.state.memory {
            Memory::Uncertainty { log_vars } => log_vars,
            _ => &[],
        }
    }

    pub fn aux_params_mut(&mut self) -> &mut [f64] {
        match &mut self.state.memory {
            Memory::Uncertainty { log_vars } => log_vars,
            _ => &mut [],
        }
    }

    /// Scalar objective and its loss weights for scalarizing kinds.
    /// Returns `None` for gradient-manipulation kinds.
    pub fn scalarize<R: Rng + ?Sized>(
        &mut self,
        losses: &[f64],
        pref: &Preference,
        rng: &mut R,
    ) -> Result<Option<Scalarized>, BalanceError> {
        let Some(kind) = self.state.kind.scalarization() else {
            return Ok(None);
        };
        check_losses(losses, pref.len())?;
        let out = scalarize(kind, losses, pref, &mut self.state.memory, rng)?;
        self.state.step += 1;
        Ok(Some(out))
    }

    /// Combines the task gradients into one update direction.
    pub fn combine<R: Rng + ?Sized>(
        &mut self,
        losses: &[f64],
        grads: &GradientMatrix,
        pref: &Preference,
        rng: &mut R,
    ) -> Result<Combination, BalanceError> {
        let k = grads.n_tasks();
        if k < 2 {
            return Err(BalanceError::TooFewTasks(k));
        }
        check_losses(losses, k)?;
        if pref.len() != k {
            return Err(BalanceError::TaskCount { expected: k, got: pref.len() });
        }
        if !grads.is_finite() {
            return Err(BalanceError::NonFiniteGradient);
        }
        if let Some(s) = self.scalarize(losses, pref, rng)? {
            return Ok(Combination {
                direction: grads.combine(&s.loss_weights),
                weights: Some(s.loss_weights),
                aux_gradient: s.aux_gradient,
                objective: Some(s.value),
            });
        }
        let simplex = |w: SimplexWeights| {
            let w = w.into_vec();
            Combination { direction: grads.combine(&w), weights: Some(w), aux_gradient: None, objective: None }
        };
        let direction_only =
            |d: Vec<f64>| Combination { direction: d, weights: None, aux_gradient: None, objective: None };
        let kind = self.state.kind.clone();
        let out = match kind {
            BalancerKind::Mgda => simplex(min_norm_weights(grads)),
            BalancerKind::LogMgda => {
                let g = log_transform(grads, losses)?;
                let w = min_norm_weights(&g).into_vec();
                Combination { direction: g.combine(&w), weights: Some(w), aux_gradient: None, objective: None }
            }
            BalancerKind::PcGrad => direction_only(pcgrad(grads, rng)),
            BalancerKind::GradDrop => direction_only(graddrop(grads, rng)),
            BalancerKind::CaGrad { c } => {
                let (d, w) = cagrad_weights(grads, c);
                Combination { direction: d, weights: Some(w.into_vec()), aux_gradient: None, objective: None }
            }
            BalancerKind::LogCaGrad { c } => {
                let g = log_transform(grads, losses)?;
                let (d, w) = cagrad_weights(&g, c);
                Combination { direction: d, weights: Some(w.into_vec()), aux_gradient: None, objective: None }
            }
            BalancerKind::Imtl | BalancerKind::LogImtl => {
                let g = if matches!(kind, BalancerKind::LogImtl) { log_transform(grads, losses)? } else { grads.clone() };
                let out = imtl_g(&g)?;
                if out.fallback {
                    if let Memory::Imtl { fallbacks } = &mut self.state.memory {
                        *fallbacks += 1;
                    }
                }
                Combination { direction: out.direction, weights: Some(out.alpha), aux_gradient: None, objective: None }
            }
            BalancerKind::NashMtl { max_iters } => {
                let warm = match &self.state.memory {
                    Memory::Nash { warm_start } => warm_start.clone(),
                    _ => None,
                };
                let out = nash_weights(grads, max_iters, warm.as_deref())?;
                self.state.memory = Memory::Nash { warm_start: Some(out.weights.clone()) };
                Combination { direction: out.direction, weights: Some(out.weights), aux_gradient: None, objective: None }
            }
            BalancerKind::Famo { lr } => {
                let Memory::Famo(state) = &mut self.state.memory else {
                    return Err(BalanceError::InvalidParameter("famo state missing".into()));
                };
                simplex(famo_step(state, losses, lr)?)
            }
            BalancerKind::SdmGrad { lambda, inner_iters } => {
                let warm = match &self.state.memory {
                    Memory::SdmGrad { warm_start } => warm_start.clone(),
                    _ => None,
                };
                let (d, w) = sdmgrad_weights(grads, lambda, inner_iters, warm.as_deref());
                self.state.memory = Memory::SdmGrad { warm_start: Some(w.as_slice().to_vec()) };
                Combination { direction: d, weights: Some(w.into_vec()), aux_gradient: None, objective: None }
            }
            BalancerKind::Epo => {
                let out = epo_direction(grads, losses, pref)?;
                Combination { direction: out.direction, weights: Some(out.weights), aux_gradient: None, objective: None }
            }
            BalancerKind::WcMgda => {
                let out = wc_mgda_direction(grads, losses, pref);
                Combination { direction: out.direction, weights: Some(out.weights), aux_gradient: None, objective: None }
            }
            BalancerKind::Ec { primary, eps, eps_scale, rho } => {
                if primary >= k {
                    return Err(BalanceError::InvalidParameter(alloc::format!("ec primary {primary} >= {k}")));
                }
                let bounds = match eps {
                    Some(e) if e.len() == k => e,
                    Some(e) => return Err(BalanceError::TaskCount { expected: k, got: e.len() }),
                    None => pref.ray().iter().map(|r| r * eps_scale).collect(),
                };
                let Memory::Ec { multipliers } = &mut self.state.memory else {
                    return Err(BalanceError::InvalidParameter("ec state missing".into()));
                };
                let d = ec_direction(grads, losses, primary, &bounds, rho, multipliers)?;
                let mut w = multipliers.clone();
                w[primary] = 1.0;
                Combination { direction: d, weights: Some(w), aux_gradient: None, objective: None }
            }
            _ => unreachable!("scalarizing kinds return early"),
        };
        self.state.step += 1;
        Ok(out)
    }
}

fn check_losses(losses: &[f64], k: usize) -> Result<(), BalanceError> {
    if losses.len() != k {
        return Err(BalanceError::TaskCount { expected: k, got: losses.len() });
    }
    if losses.iter().any(|l| !l.is_finite()) {
        return Err(BalanceError::InvalidParameter(String::from("losses must be finite")));
    }
    Ok(())
}

pub(crate) fn require_positive(losses: &[f64]) -> Result<(), BalanceError> {
    match losses.iter().position(|l| !(*l > 0.0)) {
        Some(task) => Err(BalanceError::NonPositiveLoss { task, value: losses[task] }),
        None => Ok(()),
    }
}
