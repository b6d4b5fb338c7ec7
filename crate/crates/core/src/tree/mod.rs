//! Binary classification trees: routing, prediction, evaluation and the JSON
//! tree document.

mod doc;
mod greedy;
mod solution;

use serde::Serialize;
use thiserror::Error;

use crate::dataset::BinaryDataset;
use crate::posterior::{LabelCounts, PosteriorParams};

pub use doc::TREE_FORMAT;
pub use greedy::fit_greedy;
pub use solution::{
    solution_to_tree, tree_to_solution, SolutionChoice, SolutionGraph, SolutionNode,
};

#[derive(Debug, Error)]
pub enum TreeError {
    #[error("malformed tree document at {path}: {message}")]
    Schema { path: String, message: String },
    #[error("tree document is not valid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("{path}: split on feature {feature} but only {n_features} features exist")]
    FeatureOutOfRange {
        path: String,
        feature: usize,
        n_features: usize,
    },
    #[error("tree expects {tree} features but the dataset has {dataset}")]
    FeatureCountMismatch { tree: usize, dataset: usize },
}

/// A node of a binary decision tree. `left` is the `feature = 0` branch.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TreeNode {
    Leaf(LabelCounts),
    Split {
        feature: usize,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
}

impl TreeNode {
    pub fn leaf(c1: u32, c0: u32) -> TreeNode {
        TreeNode::Leaf(LabelCounts::new(c1, c0))
    }

    pub fn split(feature: usize, left: TreeNode, right: TreeNode) -> TreeNode {
        TreeNode::Split {
            feature,
            left: Box::new(left),
            right: Box::new(right),
        }
    }

    pub fn is_leaf(&self) -> bool {
        matches!(self, TreeNode::Leaf(_))
    }

    fn count(&self) -> (usize, usize) {
        match self {
            TreeNode::Leaf(_) => (1, 0),
            TreeNode::Split { left, right, .. } => {
                let (l0, i0) = left.count();
                let (l1, i1) = right.count();
                (l0 + l1, i0 + i1 + 1)
            }
        }
    }

    fn depth(&self) -> usize {
        match self {
            TreeNode::Leaf(_) => 0,
            TreeNode::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    fn max_feature(&self) -> Option<usize> {
        match self {
            TreeNode::Leaf(_) => None,
            TreeNode::Split {
                feature,
                left,
                right,
            } => [Some(*feature), left.max_feature(), right.max_feature()]
                .into_iter()
                .flatten()
                .max(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecisionTree {
    n_features: usize,
    root: TreeNode,
}

/// Test-set metrics of a tree.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Evaluation {
    pub accuracy: f64,
    pub mean_log_likelihood: f64,
    pub n_nodes: usize,
}

impl DecisionTree {
    /// # Panics
    /// If a split references a feature `>= n_features`.
    pub fn new(n_features: usize, root: TreeNode) -> Self {
        if let Some(f) = root.max_feature() {
            assert!(f < n_features, "feature {f} out of range {n_features}");
        }
        Self { n_features, root }
    }

    pub fn single_leaf(n_features: usize, counts: LabelCounts) -> Self {
        Self::new(n_features, TreeNode::Leaf(counts))
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn root(&self) -> &TreeNode {
        &self.root
    }

    pub fn n_leaves(&self) -> usize {
        self.root.count().0
    }

    pub fn n_internal(&self) -> usize {
        self.root.count().1
    }

    /// Internal plus leaf nodes.
    pub fn n_nodes(&self) -> usize {
        let (l, i) = self.root.count();
        l + i
    }

    pub fn depth(&self) -> usize {
        self.root.depth()
    }

    /// Leaves in left-to-right order.
    pub fn leaves(&self) -> Vec<LabelCounts> {
        fn walk(node: &TreeNode, out: &mut Vec<LabelCounts>) {
            match node {
                TreeNode::Leaf(c) => out.push(*c),
                TreeNode::Split { left, right, .. } => {
                    walk(left, out);
                    walk(right, out);
                }
            }
        }
        let mut out = Vec::new();
        walk(&self.root, &mut out);
        out
    }

    /// True when no root-to-leaf path tests the same feature twice.
    pub fn has_distinct_path_features(&self) -> bool {
        fn walk(node: &TreeNode, used: &mut Vec<usize>) -> bool {
            match node {
                TreeNode::Leaf(_) => true,
                TreeNode::Split {
                    feature,
                    left,
                    right,
                } => {
                    if used.contains(feature) {
                        return false;
                    }
                    used.push(*feature);
                    let ok = walk(left, used) && walk(right, used);
                    used.pop();
                    ok
                }
            }
        }
        walk(&self.root, &mut Vec::new())
    }

    /// The leaf a feature vector falls into.
    pub fn route<F: Fn(usize) -> bool>(&self, feature_value: F) -> &LabelCounts {
        let mut node = &self.root;
        loop {
            match node {
                TreeNode::Leaf(c) => return c,
                TreeNode::Split {
                    feature,
                    left,
                    right,
                } => node = if feature_value(*feature) { right } else { left },
            }
        }
    }

    /// Beta posterior mean of the label-1 probability at the sample's leaf.
    pub fn predict_proba(&self, sample: &[bool], params: &PosteriorParams) -> f64 {
        leaf_proba(self.route(|f| sample[f]), params)
    }

    /// Hard label: 1 iff `predict_proba >= 0.5`.
    pub fn predict(&self, sample: &[bool], params: &PosteriorParams) -> bool {
        self.predict_proba(sample, params) >= 0.5
    }

    pub fn predict_proba_row(
        &self,
        dataset: &BinaryDataset,
        sample: usize,
        params: &PosteriorParams,
    ) -> f64 {
        leaf_proba(self.route(|f| dataset.feature(sample, f)), params)
    }

    pub fn check_compatible(&self, dataset: &BinaryDataset) -> Result<(), TreeError> {
        if self.n_features != dataset.n_features() {
            return Err(TreeError::FeatureCountMismatch {
                tree: self.n_features,
                dataset: dataset.n_features(),
            });
        }
        Ok(())
    }

    pub fn evaluate(&self, dataset: &BinaryDataset, params: &PosteriorParams) -> Evaluation {
        let n = dataset.n_samples();
        let mut correct = 0usize;
        let mut ll = 0.0;
        for i in 0..n {
            let p = self.predict_proba_row(dataset, i, params);
            let y = dataset.label(i);
            if (p >= 0.5) == y {
                correct += 1;
            }
            ll += if y { p.ln() } else { (1.0 - p).ln() };
        }
        Evaluation {
            accuracy: correct as f64 / n as f64,
            mean_log_likelihood: ll / n as f64,
            n_nodes: self.n_nodes(),
        }
    }

    /// Same shape with every leaf's counts recomputed from `dataset`.
    pub fn refit_counts(&self, dataset: &BinaryDataset) -> DecisionTree {
        fn walk(node: &TreeNode, dataset: &BinaryDataset, samples: &[usize]) -> TreeNode {
            match node {
                TreeNode::Leaf(_) => TreeNode::Leaf(dataset.label_counts_of(samples)),
                TreeNode::Split {
                    feature,
                    left,
                    right,
                } => {
                    let (ones, zeros): (Vec<usize>, Vec<usize>) =
                        samples.iter().partition(|&&i| dataset.feature(i, *feature));
                    TreeNode::split(
                        *feature,
                        walk(left, dataset, &zeros),
                        walk(right, dataset, &ones),
                    )
                }
            }
        }
        let all: Vec<usize> = (0..dataset.n_samples()).collect();
        DecisionTree::new(self.n_features, walk(&self.root, dataset, &all))
    }

    pub fn to_json(&self) -> String {
        doc::to_json(self)
    }

    pub fn from_json(text: &str) -> Result<DecisionTree, TreeError> {
        doc::from_json(text)
    }

    /// Parses a document and checks it against the dataset it will be applied to.
    pub fn from_json_for(text: &str, dataset: &BinaryDataset) -> Result<DecisionTree, TreeError> {
        let tree = doc::from_json(text)?;
        tree.check_compatible(dataset)?;
        Ok(tree)
    }
}

fn leaf_proba(counts: &LabelCounts, params: &PosteriorParams) -> f64 {
    (counts.c1 as f64 + params.rho1()) / (counts.total() as f64 + params.rho1() + params.rho0())
}
