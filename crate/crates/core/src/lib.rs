//! Balanced influence-based data selection.
//!
//! Given an attribution matrix — pairwise influence scores of training
//! examples (rows) on validation instances (columns) — this crate selects a
//! training subset under a budget while keeping the selection balanced
//! across the tasks the validation columns belong to. The pipeline:
//!
//! 1. [`influence`] (optional): build the matrix from projected gradient
//!    features, or a cosine similarity matrix from representations.
//! 2. [`normalize`]: z-standardize each column so all validation instances
//!    share one scale — raw influence magnitudes differ wildly across tasks
//!    and would otherwise dominate any max-based selector.
//! 3. [`select`]: the iterative balanced selector plus baselines
//!    (task-wise max, instance-wise max, sum, random, representation
//!    similarity).
//! 4. [`analysis`]: average influence distributions, task frequency of
//!    highest influence, and balance summaries for comparing selections.
//!
//! [`synth`] generates matrices with a controlled cross-task bias for
//! experiments, and [`io`] defines the on-disk formats.

pub mod analysis;
pub mod error;
pub mod influence;
pub mod io;
pub mod model;
pub mod normalize;
pub mod select;
pub mod synth;

pub use error::{Error, Result};
pub use model::{
    resolve_budget, validate_partition, AttributionMatrix, Budget, Method, SelectionResult,
    TaskPartition,
};
