//! Label-free performance estimation and feature shift attribution for
//! classifiers facing an unlabeled distribution shift.
//!
//! Source and target samples are aligned with exact discrete optimal
//! transport. The resulting matching transfers labels to the target sample
//! (giving a performance estimate without target labels) and provides, for
//! every target instance, a pre-shift counterpart. Shapley values over
//! partial feature shifts between the two then attribute the anticipated
//! loss change (XPE) or predictive entropy (XPPE) to features or groups.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, the
//! command-line front-end and thread-pool execution live in the `xpe` crate.
#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod baselines;
pub mod data;
pub mod drift;
pub mod error;
pub mod exec;
pub mod metrics;
pub mod model;
pub mod pipeline;
pub mod rng;
pub mod shapley;
pub mod shiftgen;
pub mod transport;

mod math;

pub use data::{Dataset, FeatureGrouping, GroupingKind, MissingMask};
pub use error::{Error, Result};
pub use exec::{Executor, Sequential};
pub use model::{Classifier, LossKind, ModelKind, TrainConfig, TrainedModel};
pub use rng::RngSpec;
pub use shapley::{Attribution, Coalition, CoalitionGame, Method};
