//! Random forests as kernel generators.
//!
//! The crate fits random forests for continuous, binary and right-censored
//! survival targets, turns a fitted forest into a proximity kernel (the
//! fraction of trees in which two samples share a terminal node), and
//! trains regularized linear models on that kernel: kernel ridge regression
//! for continuous and binary targets and a survival support vector machine
//! for censored times. The [`harness`] module runs the full simulation
//! study comparing the forest, its kernel and an analytic Laplace kernel.

pub mod data;
pub mod error;
pub mod forest;
pub mod harness;
pub mod kernels;
pub mod krr;
pub mod linalg;
pub mod metrics;
pub mod simgen;
pub mod ssvm;

pub use data::{FeatureMatrix, SurvivalData, Target, TargetKind};
pub use error::{Error, Result};
pub use forest::{fit_tree, Forest, NodeLimit, Tree, TreeParams};
pub use kernels::{KernelKind, KernelMatrix};
pub use krr::KrrModel;
pub use metrics::{MetricKind, MetricValue};
pub use simgen::{GeneratedData, Setup};
pub use ssvm::{SsvmModel, SsvmOptions};
