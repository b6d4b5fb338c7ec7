//! Exhaustive enumeration of every tree with positive prior on tiny datasets.
//!
//! Shares nothing with the search besides the posterior terms and the
//! dataset accessors: subsets are plain index lists and scores are summed
//! per tree, so it serves as an independent check of the search's optimum.

use thiserror::Error;

use crate::dataset::BinaryDataset;
use crate::posterior::{log_leaf_likelihood, log_p_inner, log_p_leaf, LogProb, PosteriorParams};
use crate::tree::{DecisionTree, TreeNode};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OracleGuard {
    pub max_features: usize,
    pub max_samples: usize,
}

impl Default for OracleGuard {
    fn default() -> Self {
        Self {
            max_features: 4,
            max_samples: 10,
        }
    }
}

impl OracleGuard {
    pub fn unlimited() -> Self {
        Self {
            max_features: usize::MAX,
            max_samples: usize::MAX,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum OracleError {
    #[error("dataset has {n_features} features and {n_samples} samples; enumeration is limited to {} features and {} samples", .guard.max_features, .guard.max_samples)]
    TooLarge {
        n_features: usize,
        n_samples: usize,
        guard: OracleGuard,
    },
    #[error("the prior assigns a node at depth {depth} a split probability of at least 1")]
    DegeneratePrior { depth: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnumeratedTree {
    pub tree: DecisionTree,
    pub log_prior: LogProb,
    pub log_joint: LogProb,
}

struct Partial {
    node: TreeNode,
    log_prior: LogProb,
    log_lik: LogProb,
}

struct Enumerator<'a> {
    dataset: &'a BinaryDataset,
    params: &'a PosteriorParams,
}

impl Enumerator<'_> {
    fn valid_splits(&self, samples: &[usize]) -> Vec<usize> {
        (0..self.dataset.n_features())
            .filter(|&f| {
                let ones = samples
                    .iter()
                    .filter(|&&i| self.dataset.feature(i, f))
                    .count();
                ones > 0 && ones < samples.len()
            })
            .collect()
    }

    /// Calls `emit` for each subtree over `samples` at `depth`: the leaf first,
    /// then splits by ascending feature, left subtrees outermost.
    fn subtrees(
        &self,
        samples: &[usize],
        depth: usize,
        emit: &mut dyn FnMut(Partial),
    ) -> Result<(), OracleError> {
        let valid = self.valid_splits(samples);
        let counts = self.dataset.label_counts_of(samples);
        let leaf_prior = log_p_leaf(depth, valid.len(), self.params)
            .map_err(|_| OracleError::DegeneratePrior { depth })?;
        emit(Partial {
            node: TreeNode::Leaf(counts),
            log_prior: leaf_prior,
            log_lik: log_leaf_likelihood(counts, self.params),
        });
        let inner = log_p_inner(depth, valid.len(), self.params);
        for &f in &valid {
            let (right, left): (Vec<usize>, Vec<usize>) =
                samples.iter().partition(|&&i| self.dataset.feature(i, f));
            let mut failure = None;
            self.subtrees(&left, depth + 1, &mut |l: Partial| {
                if failure.is_some() {
                    return;
                }
                let result = self.subtrees(&right, depth + 1, &mut |r: Partial| {
                    emit(Partial {
                        node: TreeNode::split(f, l.node.clone(), r.node),
                        log_prior: inner + l.log_prior + r.log_prior,
                        log_lik: l.log_lik + r.log_lik,
                    })
                });
                if let Err(e) = result {
                    failure = Some(e);
                }
            })?;
            if let Some(e) = failure {
                return Err(e);
            }
        }
        Ok(())
    }
}

fn check_guard(dataset: &BinaryDataset, guard: OracleGuard) -> Result<(), OracleError> {
    if dataset.n_features() > guard.max_features || dataset.n_samples() > guard.max_samples {
        return Err(OracleError::TooLarge {
            n_features: dataset.n_features(),
            n_samples: dataset.n_samples(),
            guard,
        });
    }
    Ok(())
}

/// Streams every tree with positive prior to `visit`; returns how many there were.
pub fn enumerate_trees<F>(
    dataset: &BinaryDataset,
    params: &PosteriorParams,
    guard: OracleGuard,
    mut visit: F,
) -> Result<u64, OracleError>
where
    F: FnMut(EnumeratedTree),
{
    check_guard(dataset, guard)?;
    let all: Vec<usize> = (0..dataset.n_samples()).collect();
    let mut count = 0u64;
    Enumerator { dataset, params }.subtrees(&all, 0, &mut |p: Partial| {
        count += 1;
        visit(EnumeratedTree {
            tree: DecisionTree::new(dataset.n_features(), p.node),
            log_prior: p.log_prior,
            log_joint: p.log_prior + p.log_lik,
        });
    })?;
    Ok(count)
}

/// The tree of least `-log_joint` and its cost. Among exact ties the first in
/// enumeration order wins, which puts the leaf before any split and lower
/// features before higher ones.
pub fn brute_force_map(
    dataset: &BinaryDataset,
    params: &PosteriorParams,
    guard: OracleGuard,
) -> Result<(DecisionTree, f64), OracleError> {
    let mut best: Option<(DecisionTree, f64)> = None;
    enumerate_trees(dataset, params, guard, |t| {
        let cost = -t.log_joint;
        if best.as_ref().is_none_or(|(_, b)| cost < *b) {
            best = Some((t.tree, cost));
        }
    })?;
    Ok(best.expect("the enumeration always contains the leaf"))
}

/// Number of trees with positive prior, by the recursion
/// `t(I) = 1 + sum over valid f of t(I|f=0) * t(I|f=1)`.
pub fn count_trees(dataset: &BinaryDataset) -> u128 {
    fn t(ds: &BinaryDataset, samples: &[usize]) -> u128 {
        let mut total = 1u128;
        for f in 0..ds.n_features() {
            let (right, left): (Vec<usize>, Vec<usize>) =
                samples.iter().partition(|&&i| ds.feature(i, f));
            if !left.is_empty() && !right.is_empty() {
                total += t(ds, &left) * t(ds, &right);
            }
        }
        total
    }
    t(dataset, &(0..dataset.n_samples()).collect::<Vec<_>>())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::posterior::log_joint;

    fn all(ds: &BinaryDataset, p: &PosteriorParams) -> Vec<EnumeratedTree> {
        let mut out = Vec::new();
        enumerate_trees(ds, p, OracleGuard::default(), |t| out.push(t)).unwrap();
        out
    }

    #[test]
    fn one_sample_has_one_tree() {
        let ds = BinaryDataset::from_rows(&[vec![0, 1]], &[1]).unwrap();
        let trees = all(&ds, &PosteriorParams::default());
        assert_eq!(trees.len(), 1);
        assert_eq!(trees[0].log_prior, 0.0);
        assert!(trees[0].tree.root().is_leaf());
    }

    #[test]
    fn separable_pair_with_one_feature() {
        let ds = BinaryDataset::from_rows(&[vec![0], vec![1]], &[0, 1]).unwrap();
        let trees = all(&ds, &PosteriorParams::default());
        assert_eq!(trees.len(), 2);
        assert!(trees[0].tree.root().is_leaf());
        assert_eq!(trees[1].tree.n_leaves(), 2);
    }

    #[test]
    fn hand_counted_recursion() {
        // 4 samples covering both features: the root splits either way into
        // pairs that the other feature still splits, so t = 1 + 2 * (2 * 2) = 9.
        let ds = BinaryDataset::from_rows(
            &[vec![0, 0], vec![0, 1], vec![1, 0], vec![1, 1]],
            &[0, 1, 1, 0],
        )
        .unwrap();
        assert_eq!(count_trees(&ds), 9);
        assert_eq!(all(&ds, &PosteriorParams::default()).len(), 9);
    }

    #[test]
    fn joints_match_the_posterior_module() {
        let ds = BinaryDataset::from_rows(
            &[
                vec![0, 0, 1],
                vec![0, 1, 1],
                vec![1, 0, 0],
                vec![1, 1, 1],
                vec![0, 1, 0],
            ],
            &[0, 1, 1, 0, 1],
        )
        .unwrap();
        let p = PosteriorParams::new(0.8, 1.2, 0.5, 2.0).unwrap();
        let trees = all(&ds, &p);
        assert_eq!(trees.len() as u128, count_trees(&ds));
        let mass: f64 = trees.iter().map(|t| t.log_prior.exp()).sum();
        assert!((mass - 1.0).abs() < 1e-12);
        for t in &trees {
            assert!(t.tree.has_distinct_path_features());
            assert!((log_joint(&t.tree, &ds, &p).unwrap() - t.log_joint).abs() < 1e-12);
        }
    }

    #[test]
    fn map_of_separable_pair() {
        let ds = BinaryDataset::from_rows(&[vec![0, 0], vec![1, 1]], &[0, 1]).unwrap();
        let p = PosteriorParams::default();
        let (tree, cost) = brute_force_map(&ds, &p, OracleGuard::default()).unwrap();
        assert_eq!(tree.n_leaves(), 2);
        // the f0 and f1 stumps score identically; enumeration order picks f0
        assert!(matches!(tree.root(), TreeNode::Split { feature: 0, .. }));
        let leaf = DecisionTree::single_leaf(2, ds.label_counts_of(&[0, 1]));
        assert!(cost < -log_joint(&leaf, &ds, &p).unwrap());
    }

    #[test]
    fn pure_labels_with_small_alpha_give_a_leaf() {
        let ds =
            BinaryDataset::from_rows(&[vec![0, 1], vec![1, 0], vec![1, 1]], &[1, 1, 1]).unwrap();
        let p = PosteriorParams::new(0.1, 0.5, 1.0, 1.0).unwrap();
        let (tree, _) = brute_force_map(&ds, &p, OracleGuard::default()).unwrap();
        assert!(tree.root().is_leaf());
    }

    #[test]
    fn count_is_invariant_under_feature_permutation() {
        let rows = [
            vec![0, 0, 1],
            vec![0, 1, 1],
            vec![1, 0, 0],
            vec![1, 1, 1],
            vec![0, 1, 0],
            vec![1, 0, 1],
        ];
        let labels = [0, 1, 1, 0, 1, 0];
        let ds = BinaryDataset::from_rows(&rows, &labels).unwrap();
        let permuted: Vec<Vec<u8>> = rows.iter().map(|r| vec![r[2], r[0], r[1]]).collect();
        let dp = BinaryDataset::from_rows(&permuted, &labels).unwrap();
        let p = PosteriorParams::default();
        let n = enumerate_trees(&ds, &p, OracleGuard::default(), |_| {}).unwrap();
        assert_eq!(
            n,
            enumerate_trees(&dp, &p, OracleGuard::default(), |_| {}).unwrap()
        );
    }

    #[test]
    fn guard_rejects_large_inputs() {
        let ds = BinaryDataset::from_rows(&vec![vec![0u8; 5]; 3], &[0, 1, 0]).unwrap();
        assert!(matches!(
            enumerate_trees(
                &ds,
                &PosteriorParams::default(),
                OracleGuard::default(),
                |_| {}
            ),
            Err(OracleError::TooLarge { n_features: 5, .. })
        ));
    }
}
