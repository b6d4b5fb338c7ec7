//! Top-down information-gain tree, used as a comparison baseline.

use super::{DecisionTree, TreeNode};
use crate::dataset::{BinaryDataset, SampleSubset};
use crate::posterior::LabelCounts;

fn entropy(c: LabelCounts) -> f64 {
    let n = c.total() as f64;
    if n == 0.0 {
        return 0.0;
    }
    [c.c1, c.c0]
        .into_iter()
        .filter(|&k| k > 0)
        .map(|k| {
            let p = k as f64 / n;
            -p * p.log2()
        })
        .sum()
}

/// Splits on the feature of highest entropy gain until a node is pure, has no
/// nontrivial split, or sits at `max_depth`. Ties go to the lowest feature.
/// Zero-gain splits are still taken.
pub fn fit_greedy(dataset: &BinaryDataset, max_depth: usize) -> DecisionTree {
    let mut subset = SampleSubset::full(dataset);
    let root = grow(dataset, &mut subset, 0, max_depth);
    DecisionTree::new(dataset.n_features(), root)
}

fn grow(
    dataset: &BinaryDataset,
    subset: &mut SampleSubset,
    depth: usize,
    max_depth: usize,
) -> TreeNode {
    let counts = subset.label_counts(dataset);
    if depth >= max_depth || counts.is_pure() {
        return TreeNode::Leaf(counts);
    }
    let parent = entropy(counts);
    let n = counts.total() as f64;
    let mut best: Option<(usize, f64)> = None;
    for f in 0..dataset.n_features() {
        let [lo, hi] = subset.split_stats(dataset, f);
        if lo.counts.total() == 0 || hi.counts.total() == 0 {
            continue;
        }
        let child = (lo.counts.total() as f64 * entropy(lo.counts)
            + hi.counts.total() as f64 * entropy(hi.counts))
            / n;
        let gain = parent - child;
        if best.is_none_or(|(_, g)| gain > g) {
            best = Some((f, gain));
        }
    }
    let Some((feature, _)) = best else {
        return TreeNode::Leaf(counts);
    };
    let cp = subset.restrict(dataset, feature, false);
    let left = grow(dataset, subset, depth + 1, max_depth);
    subset.undo(cp).expect("lifo");
    let cp = subset.restrict(dataset, feature, true);
    let right = grow(dataset, subset, depth + 1, max_depth);
    subset.undo(cp).expect("lifo");
    TreeNode::split(feature, left, right)
}
