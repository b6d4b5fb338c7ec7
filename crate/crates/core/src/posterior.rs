//! Closed-form BCART probability mass, all in natural-log space.
//!
//! The per-leaf Bernoulli parameters are integrated out against their Beta
//! prior, so a leaf only ever contributes the ratio
//! `B(c1 + rho1, c0 + rho0) / B(rho1, rho0)`. The tree prior splits a node at
//! depth `d` with probability `alpha * (1 + d)^-beta`, shared equally among
//! the features that split the node's samples nontrivially.

use std::fmt;
use std::ops::Add;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::BinaryDataset;
use crate::tree::{DecisionTree, TreeNode};

/// Natural-log probability. `f64::NEG_INFINITY` stands for probability zero.
pub type LogProb = f64;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PosteriorError {
    #[error("alpha must lie in (0, 1], got {0}")]
    Alpha(f64),
    #[error("beta must be finite and non-negative, got {0}")]
    Beta(f64),
    #[error("rho1 and rho0 must be finite and positive, got rho1={rho1}, rho0={rho0}")]
    Rho { rho1: f64, rho0: f64 },
    #[error(
        "degenerate prior: p_split({depth}) = 1, so a leaf with valid splits has probability 0"
    )]
    DegeneratePrior { depth: usize },
    #[error("invalid tree at {path}: split on feature {feature} leaves one side empty")]
    TrivialSplit { path: String, feature: usize },
    #[error("invalid tree at {path}: feature {feature} out of range for {n_features} features")]
    FeatureOutOfRange {
        path: String,
        feature: usize,
        n_features: usize,
    },
}

/// The four hyperparameters of the prior and the leaf likelihood.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PosteriorParams {
    alpha: f64,
    beta: f64,
    rho1: f64,
    rho0: f64,
    #[serde(skip)]
    log_beta_prior: f64,
}

impl PosteriorParams {
    pub const DEFAULT_ALPHA: f64 = 0.95;
    pub const DEFAULT_BETA: f64 = 0.5;
    pub const DEFAULT_RHO: f64 = 1.0;

    pub fn new(alpha: f64, beta: f64, rho1: f64, rho0: f64) -> Result<Self, PosteriorError> {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(PosteriorError::Alpha(alpha));
        }
        if !(beta >= 0.0 && beta.is_finite()) {
            return Err(PosteriorError::Beta(beta));
        }
        if !(rho1 > 0.0 && rho0 > 0.0 && rho1.is_finite() && rho0.is_finite()) {
            return Err(PosteriorError::Rho { rho1, rho0 });
        }
        Ok(Self {
            alpha,
            beta,
            rho1,
            rho0,
            log_beta_prior: ln_beta(rho1, rho0),
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn rho1(&self) -> f64 {
        self.rho1
    }

    pub fn rho0(&self) -> f64 {
        self.rho0
    }
}

impl Default for PosteriorParams {
    fn default() -> Self {
        Self::new(
            Self::DEFAULT_ALPHA,
            Self::DEFAULT_BETA,
            Self::DEFAULT_RHO,
            Self::DEFAULT_RHO,
        )
        .expect("default hyperparameters are valid")
    }
}

impl<'de> Deserialize<'de> for PosteriorParams {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            alpha: f64,
            beta: f64,
            rho1: f64,
            rho0: f64,
        }
        let raw = Raw::deserialize(deserializer)?;
        PosteriorParams::new(raw.alpha, raw.beta, raw.rho1, raw.rho0)
            .map_err(serde::de::Error::custom)
    }
}

/// Label histogram of a sample subset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct LabelCounts {
    pub c1: u32,
    pub c0: u32,
}

impl LabelCounts {
    pub fn new(c1: u32, c0: u32) -> Self {
        Self { c1, c0 }
    }

    pub fn total(&self) -> u32 {
        self.c1 + self.c0
    }

    pub fn is_pure(&self) -> bool {
        self.c1 == 0 || self.c0 == 0
    }
}

impl Add for LabelCounts {
    type Output = LabelCounts;

    fn add(self, rhs: Self) -> Self::Output {
        LabelCounts::new(self.c1 + rhs.c1, self.c0 + rhs.c0)
    }
}

/// Negative log-probability used as an AND/OR edge or subtree cost.
///
/// `Cost::INFINITE` is larger than every finite cost, absorbs under addition
/// and never wins a `min`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default)]
pub struct Cost(f64);

impl Cost {
    pub const ZERO: Cost = Cost(0.0);
    pub const INFINITE: Cost = Cost(f64::INFINITY);

    /// Cost of an event with the given log-probability.
    pub fn from_log_prob(lp: LogProb) -> Cost {
        Cost(-lp)
    }

    pub fn new(value: f64) -> Cost {
        debug_assert!(!value.is_nan());
        Cost(value)
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn is_finite(self) -> bool {
        self.0.is_finite()
    }

    pub fn min(self, other: Cost) -> Cost {
        if other.0 < self.0 {
            other
        } else {
            self
        }
    }

    /// `self - other` for a finite `other`; infinite when `self` is.
    pub fn gap_above(self, other: Cost) -> f64 {
        if self.is_finite() {
            self.0 - other.0
        } else {
            f64::INFINITY
        }
    }
}

impl Add for Cost {
    type Output = Cost;

    fn add(self, rhs: Cost) -> Cost {
        Cost(self.0 + rhs.0)
    }
}

impl fmt::Display for Cost {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_finite() {
            write!(f, "{}", self.0)
        } else {
            f.write_str("inf")
        }
    }
}

fn ln_beta(a: f64, b: f64) -> f64 {
    libm::lgamma(a) + libm::lgamma(b) - libm::lgamma(a + b)
}

/// `log B(c1 + rho1, c0 + rho0) - log B(rho1, rho0)`.
pub fn log_leaf_likelihood(counts: LabelCounts, params: &PosteriorParams) -> LogProb {
    if counts.c1 == 0 && counts.c0 == 0 {
        return 0.0;
    }
    ln_beta(
        counts.c1 as f64 + params.rho1,
        counts.c0 as f64 + params.rho0,
    ) - params.log_beta_prior
}

pub fn log_p_split(depth: usize, params: &PosteriorParams) -> LogProb {
    params.alpha.ln() - params.beta * ((1 + depth) as f64).ln()
}

/// Log prior probability that a node at `depth` stops and becomes a leaf.
pub fn log_p_leaf(
    depth: usize,
    num_valid_splits: usize,
    params: &PosteriorParams,
) -> Result<LogProb, PosteriorError> {
    if num_valid_splits == 0 {
        return Ok(0.0);
    }
    let p_split = log_p_split(depth, params).exp();
    if p_split >= 1.0 {
        return Err(PosteriorError::DegeneratePrior { depth });
    }
    Ok((-p_split).ln_1p())
}

/// Log prior probability that a node at `depth` splits on one particular
/// valid feature. `NEG_INFINITY` when nothing can be split.
pub fn log_p_inner(depth: usize, num_valid_splits: usize, params: &PosteriorParams) -> LogProb {
    if num_valid_splits == 0 {
        return f64::NEG_INFINITY;
    }
    log_p_split(depth, params) - (num_valid_splits as f64).ln()
}

/// Edge cost from an OR node to its terminal: `-log p_leaf - log l_leaf`.
pub fn terminal_cost(
    depth: usize,
    num_valid_splits: usize,
    counts: LabelCounts,
    params: &PosteriorParams,
) -> Cost {
    match log_p_leaf(depth, num_valid_splits, params) {
        Ok(lp) => Cost::from_log_prob(lp + log_leaf_likelihood(counts, params)),
        Err(_) => Cost::INFINITE,
    }
}

/// Edge cost from an OR node to any one of its AND children.
pub fn split_cost(depth: usize, num_valid_splits: usize, params: &PosteriorParams) -> Cost {
    Cost::from_log_prob(log_p_inner(depth, num_valid_splits, params))
}

/// `log P(Y | X, T) + log P(T | X)`, recomputed by routing the dataset through
/// the tree.
pub fn log_joint(
    tree: &DecisionTree,
    dataset: &BinaryDataset,
    params: &PosteriorParams,
) -> Result<LogProb, PosteriorError> {
    let samples: Vec<usize> = (0..dataset.n_samples()).collect();
    let mut path = String::from("root");
    node_log_joint(tree.root(), dataset, params, &samples, 0, &mut path)
}

fn node_log_joint(
    node: &TreeNode,
    dataset: &BinaryDataset,
    params: &PosteriorParams,
    samples: &[usize],
    depth: usize,
    path: &mut String,
) -> Result<LogProb, PosteriorError> {
    let nvs = count_valid_splits(dataset, samples);
    match node {
        TreeNode::Leaf(_) => {
            let counts = dataset.label_counts_of(samples);
            let lp = log_p_leaf(depth, nvs, params).unwrap_or(f64::NEG_INFINITY);
            Ok(lp + log_leaf_likelihood(counts, params))
        }
        TreeNode::Split {
            feature,
            left,
            right,
        } => {
            let feature = *feature;
            if feature >= dataset.n_features() {
                return Err(PosteriorError::FeatureOutOfRange {
                    path: path.clone(),
                    feature,
                    n_features: dataset.n_features(),
                });
            }
            let (zeros, ones): (Vec<usize>, Vec<usize>) =
                samples.iter().partition(|&&i| !dataset.feature(i, feature));
            if zeros.is_empty() || ones.is_empty() {
                return Err(PosteriorError::TrivialSplit {
                    path: path.clone(),
                    feature,
                });
            }
            let mark = path.len();
            path.push_str(".left");
            let l = node_log_joint(left, dataset, params, &zeros, depth + 1, path)?;
            path.truncate(mark);
            path.push_str(".right");
            let r = node_log_joint(right, dataset, params, &ones, depth + 1, path)?;
            path.truncate(mark);
            Ok(log_p_inner(depth, nvs, params) + (l + r))
        }
    }
}

fn count_valid_splits(dataset: &BinaryDataset, samples: &[usize]) -> usize {
    (0..dataset.n_features())
        .filter(|&f| {
            let ones = samples.iter().filter(|&&i| dataset.feature(i, f)).count();
            ones > 0 && ones < samples.len()
        })
        .count()
}
