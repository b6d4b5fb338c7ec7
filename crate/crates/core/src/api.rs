//! One-call fitting entry point shared by the command line and foreign bindings,
//! so both produce the same tree document and run report for the same inputs.

use std::time::Duration;

use serde::{Serialize, Serializer};
use thiserror::Error;

use crate::dataset::{BinaryDataset, DatasetError};
use crate::posterior::PosteriorParams;
use crate::search::{maptree_search, SearchBudget, SearchError, SearchResult};
use crate::tree::DecisionTree;

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct FitOptions {
    pub params: PosteriorParams,
    pub budget: SearchBudget,
}

impl FitOptions {
    pub fn with_max_expansions(mut self, n: u64) -> Self {
        self.budget.max_expansions = Some(n);
        self
    }

    pub fn with_time_limit(mut self, limit: Duration) -> Self {
        self.budget.time_limit = Some(limit);
        self
    }
}

#[derive(Debug, Error)]
pub enum FitError {
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Search(#[from] SearchError),
}

fn finite_or_null<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
    if v.is_finite() {
        s.serialize_f64(*v)
    } else {
        s.serialize_none()
    }
}

/// Summary of one fit, written as a single JSON line.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    #[serde(serialize_with = "finite_or_null")]
    pub neg_log_joint: f64,
    #[serde(serialize_with = "finite_or_null")]
    pub lower_bound: f64,
    pub optimal: bool,
    pub expansions_used: u64,
    pub elapsed_ms: f64,
    /// Internal plus leaf nodes of the returned tree.
    pub n_nodes: usize,
    pub or_nodes: usize,
    pub and_nodes: usize,
}

impl RunReport {
    pub fn from_result(result: &SearchResult) -> Self {
        Self {
            neg_log_joint: result.neg_log_joint,
            lower_bound: result.lower_bound,
            optimal: result.optimal,
            expansions_used: result.expansions_used,
            elapsed_ms: result.elapsed.as_secs_f64() * 1e3,
            n_nodes: result.tree.n_nodes(),
            or_nodes: result.or_nodes,
            and_nodes: result.and_nodes,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("report serialization is infallible")
    }
}

pub fn fit_dataset(
    dataset: &BinaryDataset,
    options: &FitOptions,
) -> Result<(DecisionTree, RunReport), FitError> {
    let result = maptree_search(dataset, &options.params, options.budget)?;
    let report = RunReport::from_result(&result);
    Ok((result.tree, report))
}

/// Fits dense 0/1 rows and labels.
pub fn fit(
    features: &[Vec<u8>],
    labels: &[u8],
    options: &FitOptions,
) -> Result<(DecisionTree, RunReport), FitError> {
    let dataset = BinaryDataset::from_rows(features, labels)?;
    fit_dataset(&dataset, options)
}
