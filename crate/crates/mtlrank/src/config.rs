//! Run configuration (TOML).

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use mtlrank_core::synthetic::SyntheticSpec;
use mtlrank_core::{BalancerKind, LossSpec, Preference, RankerConfig, TaskDerivationSpec, TrainSettings, TrainSetup};
use serde::{Deserialize, Serialize};

fn yes() -> bool {
    true
}

/// Where the data comes from. LETOR runs name a fold directory
/// (`train.txt`, `vali.txt`, `test.txt`) or the individual files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vali: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test: Option<PathBuf>,
    /// Generated data instead of files.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<SyntheticData>,
    #[serde(default)]
    pub tasks: TaskDerivationSpec,
    /// Signed-log transform plus z-score with training statistics.
    #[serde(default = "yes")]
    pub normalize: bool,
    /// Keep a binary copy of each parsed split beside its source file.
    #[serde(default)]
    pub cache: bool,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            dir: None,
            train: None,
            vali: None,
            test: None,
            synthetic: None,
            tasks: TaskDerivationSpec::default(),
            normalize: true,
            cache: false,
        }
    }
}

/// Synthetic data and its consecutive train/validation/test split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticData {
    #[serde(flatten)]
    pub spec: SyntheticSpec,
    pub n_train: usize,
    pub n_vali: usize,
}

impl Default for SyntheticData {
    fn default() -> Self {
        Self { spec: SyntheticSpec::default(), n_train: 400, n_vali: 50 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BalancerConfig {
    #[serde(flatten)]
    pub kind: BalancerKind,
    /// Preference ray; uniform when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preference: Option<Vec<f64>>,
    /// Ideal point for Chebyshev-type kinds; zero when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ideal: Option<Vec<f64>>,
}

impl Default for BalancerConfig {
    fn default() -> Self {
        Self { kind: BalancerKind::Ls, preference: None, ideal: None }
    }
}

impl BalancerConfig {
    pub fn preference(&self, k: usize) -> Result<Preference> {
        let ray = self.preference.clone().unwrap_or_else(|| vec![1.0; k]);
        let ideal = self.ideal.clone().unwrap_or_else(|| vec![0.0; ray.len()]);
        Ok(Preference::with_ideal(ray, ideal)?)
    }
}

fn default_out() -> PathBuf {
    PathBuf::from("runs/default")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub data: DataConfig,
    #[serde(default)]
    pub model: RankerConfig,
    /// One loss per task; empty means RankNet for every task.
    #[serde(default)]
    pub losses: Vec<LossSpec>,
    #[serde(default)]
    pub balancer: BalancerConfig,
    #[serde(default)]
    pub train: TrainSettings,
    /// JSON map from task name to its single-task metric, for Δm%.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baselines: Option<PathBuf>,
    #[serde(default = "default_out")]
    pub out_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            data: DataConfig::default(),
            model: RankerConfig::default(),
            losses: Vec::new(),
            balancer: BalancerConfig::default(),
            train: TrainSettings::default(),
            baselines: None,
            out_dir: default_out(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    /// Reads a config file. Relative data and baseline paths are taken
    /// relative to the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut cfg = Self::from_toml(&text).with_context(|| format!("parsing {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new(""));
        let rebase = |p: &mut Option<PathBuf>| {
            if let Some(p) = p {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        };
        rebase(&mut cfg.data.dir);
        rebase(&mut cfg.data.train);
        rebase(&mut cfg.data.vali);
        rebase(&mut cfg.data.test);
        rebase(&mut cfg.baselines);
        Ok(cfg)
    }

    /// The fully resolved config, defaults included.
    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string_pretty(self)?)
    }

    /// Losses with the empty-list default expanded.
    pub fn loss_specs(&self, k: usize) -> Vec<LossSpec> {
        if self.losses.is_empty() {
            vec![LossSpec::default(); k]
        } else {
            self.losses.clone()
        }
    }

    /// Checks task counts and builds the core training setup for data with
    /// `k` tasks and `d_in` input columns.
    pub fn setup(&self, k: usize, d_in: usize) -> Result<TrainSetup> {
        let losses = self.loss_specs(k);
        if losses.len() != k {
            bail!("{} loss specs for {k} tasks", losses.len());
        }
        let preference = self.balancer.preference(k)?;
        if preference.len() != k {
            bail!("preference of length {} for {k} tasks", preference.len());
        }
        let setup = TrainSetup {
            model: self.model.clone(),
            losses,
            balancer: self.balancer.kind.clone(),
            preference,
            settings: self.train.clone(),
        };
        setup.validate(k, d_in)?;
        Ok(setup)
    }
}
