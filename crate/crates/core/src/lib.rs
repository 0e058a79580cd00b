//! Offline evaluation and optimization of ranking policies from logged click data.
//!
//! The crate estimates the expected (position-weighted) number of clicks that a
//! new ranking policy would collect, using only records logged under a
//! different production policy. Five clipped importance-sampling estimators are
//! provided, each matching the independence structure of a click model:
//!
//! | estimator | weight is a ratio of                          | unbiased when clicks depend on |
//! |-----------|-----------------------------------------------|--------------------------------|
//! | list      | list probabilities                            | anything                       |
//! | IP        | item-position marginals                       | item and position              |
//! | PBM       | examination-weighted item marginals           | attraction x examination       |
//! | item      | position-weight-summed item marginals         | item only                      |
//! | RCTR      | (no weight)                                   | position only                  |
//!
//! Alongside the estimators the crate ships synthetic click-model worlds with
//! exact policy values, exact expectations of every estimator, policy
//! optimization under the list and IP estimators, and a leave-one-day-out
//! evaluation harness.
//!
//! Data-parallel loops (record passes, log simulation, Monte Carlo studies)
//! run on rayon when the default `parallel` feature is enabled. Reductions
//! always combine fixed-size chunks in index order, so results are
//! bit-identical for any number of worker threads and with the feature off.

pub mod analysis;
pub mod click_models;
pub mod error;
pub mod estimators;
pub mod harness;
pub mod optimize;
pub mod parallel;
pub mod policies;
pub mod sum;
pub mod types;

pub use crate::error::{Error, Result};
pub use crate::types::{
    dcg_weights, reward, validate_record, Catalog, ClickVector, Clip, ContextId, EstimatorConfig,
    EstimatorFamily, ItemId, LoggedDataset, LoggedRecord, QueryId, RankedList, RewardWeights,
    Validity, Violation,
};
