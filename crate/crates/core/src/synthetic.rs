//! Random ground-truth trees and noisy samples labeled by them.
//!
//! All randomness comes from `ChaCha8Rng`, seeded from a `u64`, so a
//! configuration reproduces the same tree and dataset on every platform.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::BinaryDataset;
use crate::posterior::LabelCounts;
use crate::tree::{DecisionTree, TreeNode};

pub type SynthRng = ChaCha8Rng;

#[derive(Debug, Error, PartialEq)]
pub enum SynthError {
    #[error("noise_eps must lie in [0, 0.5), got {0}")]
    Noise(f64),
    #[error("tree needs more than {n_features} distinct features along one path")]
    TooDeep { n_features: usize },
    #[error("n_features must be positive")]
    NoFeatures,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_features: usize,
    pub n_internal_nodes: usize,
    pub n_samples: usize,
    pub noise_eps: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_features: 40,
            n_internal_nodes: 7,
            n_samples: 200,
            noise_eps: 0.0,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        if !(0.0..0.5).contains(&self.noise_eps) {
            return Err(SynthError::Noise(self.noise_eps));
        }
        if self.n_features == 0 {
            return Err(SynthError::NoFeatures);
        }
        Ok(())
    }

    pub fn rng(&self) -> SynthRng {
        ChaCha8Rng::seed_from_u64(self.seed)
    }

    /// `ceil(eps * n_samples)`, ignoring representation error in the product.
    pub fn n_flips(&self) -> usize {
        let x = self.noise_eps * self.n_samples as f64;
        let r = x.round();
        if (x - r).abs() < 1e-9 {
            r as usize
        } else {
            x.ceil() as usize
        }
    }
}

/// Class a generated leaf predicts; generated leaves store one pseudo-sample.
pub fn leaf_label(counts: LabelCounts) -> bool {
    counts.c1 > counts.c0
}

/// A random tree with `n_internal_nodes` splits. The internal-node budget below
/// each node is divided uniformly at random between its subtrees, features are
/// uniform among those unused on the path, and leaves alternate 0, 1, 0, ...
/// from left to right. A leaf of label 1 holds counts (1, 0), of label 0 (0, 1).
pub fn random_tree(config: &SynthConfig, rng: &mut impl Rng) -> Result<DecisionTree, SynthError> {
    config.validate()?;
    let mut unused: Vec<usize> = (0..config.n_features).collect();
    let mut next_label = false;
    let root = grow(
        config.n_internal_nodes,
        &mut unused,
        &mut next_label,
        rng,
        config.n_features,
    )?;
    Ok(DecisionTree::new(config.n_features, root))
}

fn grow(
    budget: usize,
    unused: &mut Vec<usize>,
    next_label: &mut bool,
    rng: &mut impl Rng,
    n_features: usize,
) -> Result<TreeNode, SynthError> {
    if budget == 0 {
        let label = *next_label;
        *next_label = !label;
        return Ok(if label {
            TreeNode::leaf(1, 0)
        } else {
            TreeNode::leaf(0, 1)
        });
    }
    if unused.is_empty() {
        return Err(SynthError::TooDeep { n_features });
    }
    let left_budget = rng.random_range(0..budget);
    let pick = rng.random_range(0..unused.len());
    let feature = unused.swap_remove(pick);
    let left = grow(left_budget, unused, next_label, rng, n_features);
    let right = left.and_then(|l| {
        grow(
            budget - 1 - left_budget,
            unused,
            next_label,
            rng,
            n_features,
        )
        .map(|r| (l, r))
    });
    // restore the path's feature pool exactly as it was
    unused.push(feature);
    let last = unused.len() - 1;
    unused.swap(pick, last);
    let (left, right) = right?;
    Ok(TreeNode::split(feature, left, right))
}

/// Features i.i.d. Bernoulli(1/2), labels from `tree`, then exactly
/// [`SynthConfig::n_flips`] distinct labels flipped.
pub fn sample_dataset(
    tree: &DecisionTree,
    config: &SynthConfig,
    rng: &mut impl Rng,
) -> Result<BinaryDataset, SynthError> {
    config.validate()?;
    let f = config.n_features;
    let mut rows = Vec::with_capacity(config.n_samples);
    let mut labels = Vec::with_capacity(config.n_samples);
    for _ in 0..config.n_samples {
        let row: Vec<u8> = (0..f).map(|_| rng.random::<bool>() as u8).collect();
        let label = leaf_label(*tree.route(|j| row[j] == 1));
        rows.push(row);
        labels.push(label as u8);
    }
    let k = config.n_flips();
    if k > 0 {
        for i in index::sample(rng, config.n_samples, k) {
            labels[i] ^= 1;
        }
    }
    Ok(
        BinaryDataset::from_rows(&rows, &labels)
            .expect("generated rows are binary and rectangular"),
    )
}

/// Tree and dataset from `config.seed`.
pub fn generate(config: &SynthConfig) -> Result<(DecisionTree, BinaryDataset), SynthError> {
    let mut rng = config.rng();
    let tree = random_tree(config, &mut rng)?;
    let data = sample_dataset(&tree, config, &mut rng)?;
    Ok((tree, data))
}
