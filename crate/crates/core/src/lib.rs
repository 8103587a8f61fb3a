//! Multi-task learning-to-rank engine.
//!
//! A transformer cross-encoder scores every item of a query list; each of the
//! K relevance criteria contributes its own ranking loss, and a multi-task
//! balancer turns the K per-task gradients into one update direction.
//!
//! The crate is `no_std` (it needs `alloc`). File formats, configuration and
//! the command line live in the `mtlrank` companion crate.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod autodiff;
pub mod balancers;
pub mod data;
pub mod error;
pub mod losses;
pub mod math;
pub mod metrics;
pub mod model;
pub mod optim;
pub mod synthetic;
pub mod tensor;
pub mod toy;
pub mod train;

pub use autodiff::{finite_diff_check, Gradients, Mode, NodeId, Tape};
pub use error::*;
pub use balancers::{Balancer, BalancerKind, BalancerState, Combination, GradientMatrix, Preference, SimplexWeights};
pub use data::{MultiTaskDataset, RawDataset, TaskDerivationSpec, TaskId};
pub use losses::LossSpec;
pub use metrics::{FrontSet, MetricPoint};
pub use model::{PaddedBatch, RankerConfig, RankerParams};
pub use tensor::Tensor;
pub use train::{TrainSettings, TrainSetup};
