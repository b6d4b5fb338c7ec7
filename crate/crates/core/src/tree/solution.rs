//! Solution graphs of the BCART AND/OR graph and their one-to-one
//! correspondence with decision trees.
//!
//! A solution keeps, for every OR node it contains, the subset identity
//! (hash and depth), the label counts and exactly one chosen child: the
//! terminal, or one AND node whose two OR children are also in the solution.

use super::{DecisionTree, TreeNode};
use crate::dataset::{BinaryDataset, SampleSubset, SubsetHash};
use crate::posterior::{
    split_cost, terminal_cost, Cost, LabelCounts, PosteriorError, PosteriorParams,
};

#[derive(Debug, Clone, PartialEq)]
pub enum SolutionChoice {
    Terminal {
        cost: Cost,
    },
    And {
        feature: usize,
        cost: Cost,
        /// Indices of the `feature = 0` and `feature = 1` OR nodes.
        children: [usize; 2],
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolutionNode {
    pub hash: SubsetHash,
    pub depth: usize,
    pub counts: LabelCounts,
    pub num_valid_splits: usize,
    pub choice: SolutionChoice,
}

/// OR nodes in preorder; `nodes[0]` is the root.
#[derive(Debug, Clone, PartialEq)]
pub struct SolutionGraph {
    n_features: usize,
    nodes: Vec<SolutionNode>,
}

impl SolutionGraph {
    pub fn new(n_features: usize, nodes: Vec<SolutionNode>) -> Self {
        assert!(!nodes.is_empty(), "a solution contains the root");
        Self { n_features, nodes }
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn nodes(&self) -> &[SolutionNode] {
        &self.nodes
    }

    /// Sum of the edge costs in the solution.
    pub fn cost(&self) -> Cost {
        self.cost_from(0)
    }

    fn cost_from(&self, idx: usize) -> Cost {
        match &self.nodes[idx].choice {
            SolutionChoice::Terminal { cost } => *cost,
            SolutionChoice::And { cost, children, .. } => {
                *cost + (self.cost_from(children[0]) + self.cost_from(children[1]))
            }
        }
    }
}

pub fn solution_to_tree(solution: &SolutionGraph) -> DecisionTree {
    fn build(s: &SolutionGraph, idx: usize) -> TreeNode {
        let node = &s.nodes[idx];
        match &node.choice {
            SolutionChoice::Terminal { .. } => TreeNode::Leaf(node.counts),
            SolutionChoice::And {
                feature, children, ..
            } => TreeNode::split(*feature, build(s, children[0]), build(s, children[1])),
        }
    }
    DecisionTree::new(solution.n_features, build(solution, 0))
}

/// The solution graph a tree selects on `dataset`'s AND/OR graph.
pub fn tree_to_solution(
    tree: &DecisionTree,
    dataset: &BinaryDataset,
    params: &PosteriorParams,
) -> Result<SolutionGraph, PosteriorError> {
    let mut subset = SampleSubset::full(dataset);
    let mut nodes = Vec::new();
    let mut path = String::from("root");
    collect(
        tree.root(),
        dataset,
        params,
        &mut subset,
        0,
        &mut nodes,
        &mut path,
    )?;
    Ok(SolutionGraph::new(dataset.n_features(), nodes))
}

fn collect(
    node: &TreeNode,
    dataset: &BinaryDataset,
    params: &PosteriorParams,
    subset: &mut SampleSubset,
    depth: usize,
    out: &mut Vec<SolutionNode>,
    path: &mut String,
) -> Result<usize, PosteriorError> {
    let counts = subset.label_counts(dataset);
    let nvs = subset.valid_splits(dataset).len();
    let idx = out.len();
    out.push(SolutionNode {
        hash: subset.hash(),
        depth,
        counts,
        num_valid_splits: nvs,
        choice: SolutionChoice::Terminal {
            cost: terminal_cost(depth, nvs, counts, params),
        },
    });
    if let TreeNode::Split {
        feature,
        left,
        right,
    } = node
    {
        let feature = *feature;
        if feature >= dataset.n_features() {
            return Err(PosteriorError::FeatureOutOfRange {
                path: path.clone(),
                feature,
                n_features: dataset.n_features(),
            });
        }
        let [lo, hi] = subset.split_stats(dataset, feature);
        if lo.counts.total() == 0 || hi.counts.total() == 0 {
            return Err(PosteriorError::TrivialSplit {
                path: path.clone(),
                feature,
            });
        }
        let mut children = [0; 2];
        for (side, (child, label)) in [(left, ".left"), (right, ".right")].into_iter().enumerate() {
            let mark = path.len();
            path.push_str(label);
            let cp = subset.restrict(dataset, feature, side == 1);
            let result = collect(child, dataset, params, subset, depth + 1, out, path);
            subset.undo(cp).expect("lifo");
            path.truncate(mark);
            children[side] = result?;
        }
        out[idx].choice = SolutionChoice::And {
            feature,
            cost: split_cost(depth, nvs, params),
            children,
        };
    }
    Ok(idx)
}
