//! Best-first AND/OR search for the MAP tree.
//!
//! Each iteration descends from the root along the best lower bounds to an
//! unexpanded OR node, expands it, and propagates lower and upper bounds back
//! up. The root's bounds meet exactly when the best solution in the explicit
//! graph is globally optimal; stopping earlier yields the best tree found so far.

use std::collections::VecDeque;
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::dataset::{BinaryDataset, Checkpoint, SampleSubset};
use crate::graph::{AndOrGraph, GraphError, OrId};
use crate::posterior::{
    log_joint, log_leaf_likelihood, log_p_split, Cost, LabelCounts, PosteriorParams,
};
use crate::tree::{solution_to_tree, DecisionTree, SolutionChoice, SolutionGraph, SolutionNode};

/// Perfect split heuristic for an OR node with `counts` at `depth`.
///
/// The cheaper of stopping here, or of one split that separates the labels
/// perfectly. The split branch uses `p_split(d)` without the `1 / |V|` factor.
pub fn heuristic(counts: LabelCounts, depth: usize, params: &PosteriorParams) -> Cost {
    let leaf = log_leaf_likelihood(counts, params);
    // Kept as `S + (A + B)`; the consistency inequality then holds exactly in
    // floating point against `split_cost + (h(c0) + h(c1))`.
    let perfect = log_p_split(depth, params)
        + (log_leaf_likelihood(LabelCounts::new(counts.c1, 0), params)
            + log_leaf_likelihood(LabelCounts::new(0, counts.c0), params));
    Cost::from_log_prob(leaf.max(perfect))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SearchBudget {
    pub max_expansions: Option<u64>,
    pub time_limit: Option<Duration>,
}

impl SearchBudget {
    /// Run until optimal.
    pub fn unlimited() -> Self {
        Self::default()
    }

    pub fn expansions(n: u64) -> Self {
        Self {
            max_expansions: Some(n),
            time_limit: None,
        }
    }

    pub fn time(limit: Duration) -> Self {
        Self {
            max_expansions: None,
            time_limit: Some(limit),
        }
    }

    pub fn with_time_limit(mut self, limit: Duration) -> Self {
        self.time_limit = Some(limit);
        self
    }
}

#[derive(Debug, Error)]
pub enum SearchError {
    #[error("out of memory after {expansions} expansions: {source}")]
    OutOfMemory {
        expansions: u64,
        #[source]
        source: GraphError,
    },
}

#[derive(Debug, Clone)]
pub struct SearchResult {
    pub tree: DecisionTree,
    /// `-log P(T, Y | X)` of `tree`.
    pub neg_log_joint: f64,
    /// Root lower bound at termination; equals `neg_log_joint` when optimal.
    pub lower_bound: f64,
    pub optimal: bool,
    pub expansions_used: u64,
    pub elapsed: Duration,
    pub or_nodes: usize,
    pub and_nodes: usize,
}

/// Counts of heuristic consistency checks made at expansion time.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ConsistencyAudit {
    pub or_checks: u64,
    pub or_violations: u64,
    pub and_checks: u64,
    pub and_violations: u64,
}

impl ConsistencyAudit {
    pub fn violations(&self) -> u64 {
        self.or_violations + self.and_violations
    }
}

/// Why [`Search::step`] did nothing.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Step {
    Expanded(OrId),
    Converged,
}

/// Pending bound updates, drained deepest first and FIFO within a depth.
#[derive(Debug, Default)]
struct Worklist {
    buckets: Vec<VecDeque<OrId>>,
    top: usize,
    len: usize,
}

impl Worklist {
    fn push(&mut self, graph: &mut AndOrGraph, id: OrId) {
        let node = graph.or_node_mut(id);
        if node.queued {
            return;
        }
        node.queued = true;
        let d = node.depth();
        if self.buckets.len() <= d {
            self.buckets.resize_with(d + 1, VecDeque::new);
        }
        self.buckets[d].push_back(id);
        self.top = self.top.max(d);
        self.len += 1;
    }

    fn pop(&mut self, graph: &mut AndOrGraph) -> Option<OrId> {
        if self.len == 0 {
            return None;
        }
        loop {
            if let Some(id) = self.buckets[self.top].pop_front() {
                self.len -= 1;
                graph.or_node_mut(id).queued = false;
                return Some(id);
            }
            self.top -= 1;
        }
    }
}

#[derive(Clone, Copy)]
enum Bound {
    Lower,
    Upper,
}

/// One search over one dataset. Resumable: each [`Search::run`] call continues
/// from the current graph.
pub struct Search<'a> {
    dataset: &'a BinaryDataset,
    params: PosteriorParams,
    graph: AndOrGraph,
    subset: SampleSubset,
    path: Vec<Checkpoint>,
    worklist: Worklist,
    expansions: u64,
    audit: ConsistencyAudit,
    elapsed: Duration,
}

impl<'a> Search<'a> {
    pub fn new(dataset: &'a BinaryDataset, params: &PosteriorParams) -> Self {
        let p = *params;
        Self {
            dataset,
            params: p,
            graph: AndOrGraph::new(dataset, params, move |c, d| heuristic(c, d, &p)),
            subset: SampleSubset::full(dataset),
            path: Vec::new(),
            worklist: Worklist::default(),
            expansions: 0,
            audit: ConsistencyAudit::default(),
            elapsed: Duration::ZERO,
        }
    }

    /// Caps the explicit graph's size; reaching it ends the search with
    /// [`SearchError::OutOfMemory`].
    pub fn with_node_limit(mut self, max_nodes: usize) -> Self {
        self.graph = self.graph.with_node_limit(max_nodes);
        self
    }

    pub fn graph(&self) -> &AndOrGraph {
        &self.graph
    }

    pub fn expansions(&self) -> u64 {
        self.expansions
    }

    pub fn audit(&self) -> ConsistencyAudit {
        self.audit
    }

    pub fn lower_bound(&self) -> Cost {
        self.graph.or_node(self.graph.root()).lower_bound()
    }

    pub fn upper_bound(&self) -> Cost {
        self.graph.or_node(self.graph.root()).upper_bound()
    }

    pub fn is_optimal(&self) -> bool {
        self.lower_bound() >= self.upper_bound()
    }

    /// Runs until optimal or until `budget` (counted over the whole search) runs out.
    pub fn run(&mut self, budget: SearchBudget) -> Result<SearchResult, SearchError> {
        let start = Instant::now();
        let base = self.elapsed;
        let mut outcome = Ok(());
        loop {
            if self.is_optimal() {
                break;
            }
            if budget.max_expansions.is_some_and(|m| self.expansions >= m) {
                break;
            }
            if budget
                .time_limit
                .is_some_and(|t| base + start.elapsed() >= t)
            {
                break;
            }
            match self.step() {
                Ok(Step::Expanded(_)) => {}
                Ok(Step::Converged) => break,
                Err(e) => {
                    outcome = Err(e);
                    break;
                }
            }
        }
        self.elapsed = base + start.elapsed();
        outcome?;
        Ok(self.result())
    }

    /// One iteration: find, expand, propagate.
    pub fn step(&mut self) -> Result<Step, SearchError> {
        if self.is_optimal() {
            return Ok(Step::Converged);
        }
        let Some(id) = self.find_node_to_expand() else {
            return Ok(Step::Converged);
        };
        let p = self.params;
        let expanded = self
            .graph
            .expand(id, &self.subset, self.dataset, |c, d| heuristic(c, d, &p));
        self.unwind();
        if let Err(source) = expanded {
            return Err(SearchError::OutOfMemory {
                expansions: self.expansions,
                source,
            });
        }
        self.expansions += 1;
        self.check_consistency(id);
        self.propagate(id, Bound::Lower);
        self.propagate(id, Bound::Upper);
        Ok(Step::Expanded(id))
    }

    fn unwind(&mut self) {
        while let Some(cp) = self.path.pop() {
            self.subset
                .undo(cp)
                .expect("descent checkpoints are undone in order");
        }
    }

    /// Descends to an unexpanded OR node, leaving its subset materialized.
    ///
    /// At each OR node, follows the AND child with the least `split_cost + LB`
    /// (lowest feature on ties), then that AND node's child with the larger
    /// `UB - LB` gap (the `feature = 1` child on ties). `None` when the descent
    /// ends at an expanded node without AND children, which only happens once
    /// the remaining root gap is rounding noise.
    fn find_node_to_expand(&mut self) -> Option<OrId> {
        debug_assert!(self.path.is_empty());
        let mut o = self.graph.root();
        while self.graph.or_node(o).is_expanded() {
            let inner = self
                .graph
                .or_node(o)
                .split_cost()
                .expect("expanded nodes are resolved");
            let mut best = None;
            for a in self.graph.and_children(o) {
                let v = inner + self.graph.and_node(a).lower_bound();
                if best.is_none_or(|(_, b)| v < b) {
                    best = Some((a, v));
                }
            }
            let Some((a, _)) = best else {
                self.unwind();
                return None;
            };
            let and = self.graph.and_node(a);
            let [c0, c1] = and.children();
            let gap = |c: OrId| {
                let n = self.graph.or_node(c);
                n.upper_bound().gap_above(n.lower_bound())
            };
            let side = gap(c0) <= gap(c1);
            let feature = and.feature();
            let next = if side { c1 } else { c0 };
            self.path
                .push(self.subset.restrict(self.dataset, feature, side));
            o = next;
        }
        Some(o)
    }

    /// Bound propagation from a just-expanded node towards the root.
    ///
    /// An OR node's bound is recomputed as the minimum of its terminal cost
    /// and `split_cost + bound(a)` over its AND children, each AND bound being
    /// refreshed as the sum of its children's. Parents are revisited only when
    /// the value strictly improves.
    fn propagate(&mut self, from: OrId, which: Bound) {
        self.worklist.push(&mut self.graph, from);
        while let Some(o) = self.worklist.pop(&mut self.graph) {
            let node = self.graph.or_node(o);
            let terminal = node
                .terminal_cost()
                .expect("propagation starts at expanded nodes");
            let inner = node
                .split_cost()
                .expect("propagation starts at expanded nodes");
            let mut v = terminal;
            let ands: Vec<_> = self.graph.and_children(o).collect();
            for a in ands {
                let [c0, c1] = self.graph.and_node(a).children();
                let (n0, n1) = (self.graph.or_node(c0), self.graph.or_node(c1));
                let and = match which {
                    Bound::Lower => {
                        let b = n0.lower_bound() + n1.lower_bound();
                        self.graph.and_node_mut(a).lower_bound = b;
                        b
                    }
                    Bound::Upper => {
                        let b = n0.upper_bound() + n1.upper_bound();
                        self.graph.and_node_mut(a).upper_bound = b;
                        b
                    }
                };
                v = v.min(inner + and);
            }
            let node = self.graph.or_node_mut(o);
            let improved = match which {
                Bound::Lower if v > node.lower_bound => {
                    node.lower_bound = v;
                    true
                }
                Bound::Upper if v < node.upper_bound => {
                    node.upper_bound = v;
                    true
                }
                _ => false,
            };
            if improved {
                let parents: Vec<_> = self
                    .graph
                    .parents(o)
                    .map(|a| self.graph.and_node(a).parent())
                    .collect();
                for p in parents {
                    self.worklist.push(&mut self.graph, p);
                }
            }
        }
    }

    /// `h(o) <= cost(o, c) + h(c)` over the terminal and AND children of a
    /// freshly expanded node, and `h(a) <= h(o_0) + h(o_1)` for each AND child.
    fn check_consistency(&mut self, o: OrId) {
        let p = &self.params;
        let node = self.graph.or_node(o);
        let h_o = heuristic(node.counts(), node.depth(), p);
        let terminal = node.terminal_cost().expect("expanded");
        let inner = node.split_cost().expect("expanded");
        self.audit.or_checks += 1;
        if h_o > terminal {
            self.audit.or_violations += 1;
        }
        for a in self.graph.and_children(o) {
            let [c0, c1] = self.graph.and_node(a).children();
            let h0 = heuristic(self.graph.or_node(c0).counts(), node.depth() + 1, p);
            let h1 = heuristic(self.graph.or_node(c1).counts(), node.depth() + 1, p);
            let h_a = h0 + h1;
            self.audit.or_checks += 1;
            if h_o > inner + h_a {
                self.audit.or_violations += 1;
            }
            self.audit.and_checks += 1;
            if h_a > (Cost::ZERO + h0) + (Cost::ZERO + h1) {
                self.audit.and_violations += 1;
            }
        }
        debug_assert_eq!(
            self.audit.violations(),
            0,
            "inconsistent heuristic at {o:?}"
        );
    }

    /// Nodes whose bounds have met yet whose heuristic exceeds that exact value.
    pub fn admissibility_violations(&self) -> usize {
        self.graph
            .or_ids()
            .filter(|&id| {
                let n = self.graph.or_node(id);
                n.lower_bound() == n.upper_bound()
                    && heuristic(n.counts(), n.depth(), &self.params) > n.upper_bound()
            })
            .count()
    }

    /// Best solution in the explicit graph, or `None` while the root's upper
    /// bound is still infinite.
    ///
    /// Prefers the terminal when it costs no more than the best AND child,
    /// otherwise the AND child of least `split_cost + UB` (lowest feature on ties).
    pub fn solution(&mut self) -> Option<SolutionGraph> {
        if !self.upper_bound().is_finite() {
            return None;
        }
        let mut nodes = Vec::new();
        self.collect_solution(self.graph.root(), &mut nodes);
        Some(SolutionGraph::new(self.dataset.n_features(), nodes))
    }

    fn collect_solution(&mut self, o: OrId, out: &mut Vec<SolutionNode>) -> usize {
        let node = self.graph.or_node(o);
        let terminal = node.terminal_cost().expect("finite UB implies expanded");
        let inner = node.split_cost().expect("finite UB implies expanded");
        let mut best = None;
        for a in self.graph.and_children(o) {
            let v = inner + self.graph.and_node(a).upper_bound();
            if best.is_none_or(|(_, b)| v < b) {
                best = Some((a, v));
            }
        }
        let idx = out.len();
        out.push(SolutionNode {
            hash: self.subset.hash(),
            depth: node.depth(),
            counts: node.counts(),
            num_valid_splits: node.num_valid_splits().expect("resolved"),
            choice: SolutionChoice::Terminal { cost: terminal },
        });
        match best {
            Some((a, v)) if v < terminal => {
                let and = self.graph.and_node(a);
                let feature = and.feature();
                let kids = and.children();
                let mut children = [0; 2];
                for (side, kid) in kids.into_iter().enumerate() {
                    let cp = self.subset.restrict(self.dataset, feature, side == 1);
                    children[side] = self.collect_solution(kid, out);
                    self.subset.undo(cp).expect("lifo");
                }
                out[idx].choice = SolutionChoice::And {
                    feature,
                    cost: inner,
                    children,
                };
            }
            _ => {}
        }
        idx
    }

    /// The current anytime result.
    pub fn result(&mut self) -> SearchResult {
        let (tree, cost) = match self.solution() {
            Some(s) => {
                let cost = s.cost();
                debug_assert_eq!(cost, self.upper_bound());
                (solution_to_tree(&s), cost)
            }
            None => {
                let root = self.graph.or_node(self.graph.root());
                let leaf = DecisionTree::single_leaf(self.dataset.n_features(), root.counts());
                (leaf, root.terminal_cost().expect("the root is resolved"))
            }
        };
        debug_assert!(
            !cost.is_finite()
                || log_joint(&tree, self.dataset, &self.params)
                    .ok()
                    .map(|lj| -lj)
                    == Some(cost.value()),
            "solution cost disagrees with the recomputed joint"
        );
        SearchResult {
            neg_log_joint: cost.value(),
            lower_bound: self.lower_bound().value().min(cost.value()),
            optimal: self.is_optimal(),
            expansions_used: self.expansions,
            elapsed: self.elapsed,
            or_nodes: self.graph.n_or_nodes(),
            and_nodes: self.graph.n_and_nodes(),
            tree,
        }
    }
}

/// Searches for the MAP tree of `dataset` within `budget`.
pub fn maptree_search(
    dataset: &BinaryDataset,
    params: &PosteriorParams,
    budget: SearchBudget,
) -> Result<SearchResult, SearchError> {
    Search::new(dataset, params).run(budget)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tree::TreeNode;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() <= 1e-12 * a.abs().max(1.0)
    }

    fn two_point() -> BinaryDataset {
        BinaryDataset::from_rows(&[vec![0, 0], vec![1, 1]], &[0, 1]).unwrap()
    }

    #[test]
    fn heuristic_examples() {
        let p = PosteriorParams::default();
        assert_eq!(heuristic(LabelCounts::new(0, 0), 0, &p).value(), 0.0);
        for d in [0, 1, 5] {
            let pure = LabelCounts::new(3, 0);
            assert_eq!(
                heuristic(pure, d, &p).value(),
                -log_leaf_likelihood(pure, &p)
            );
        }
        assert!(close(
            heuristic(LabelCounts::new(1, 1), 0, &p).value(),
            -(0.2375f64).ln()
        ));
    }

    #[test]
    fn single_sample() {
        let ds = BinaryDataset::from_rows(&[vec![1, 0, 1]], &[1]).unwrap();
        let r =
            maptree_search(&ds, &PosteriorParams::default(), SearchBudget::unlimited()).unwrap();
        assert!(r.optimal);
        assert_eq!(r.expansions_used, 1);
        assert_eq!(r.tree, DecisionTree::single_leaf(3, LabelCounts::new(1, 0)));
        assert_eq!(
            r.neg_log_joint,
            -log_leaf_likelihood(LabelCounts::new(1, 0), &PosteriorParams::default())
        );
    }

    #[test]
    fn fresh_search_expands_root_first() {
        let ds = two_point();
        let mut s = Search::new(&ds, &PosteriorParams::default());
        assert_eq!(s.upper_bound(), Cost::INFINITE);
        assert_eq!(s.step().unwrap(), Step::Expanded(s.graph().root()));
        assert!(s.upper_bound().is_finite());
        assert!(s.upper_bound() <= s.graph().or_node(s.graph().root()).terminal_cost().unwrap());
    }

    #[test]
    fn separable_pair_gives_stump() {
        // Both features induce the same partition, so the two stumps tie
        // exactly and the lowest feature is returned.
        let ds = two_point();
        let p = PosteriorParams::default();
        let r = maptree_search(&ds, &p, SearchBudget::unlimited()).unwrap();
        assert!(r.optimal);
        assert_eq!(
            r.tree.root(),
            &TreeNode::split(0, TreeNode::leaf(0, 1), TreeNode::leaf(1, 0))
        );
        let f1 = DecisionTree::new(
            2,
            TreeNode::split(1, TreeNode::leaf(0, 1), TreeNode::leaf(1, 0)),
        );
        assert_eq!(-log_joint(&f1, &ds, &p).unwrap(), r.neg_log_joint);
        assert_eq!(r.lower_bound, r.neg_log_joint);
    }

    #[test]
    fn zero_budget_returns_leaf() {
        let ds = two_point();
        let r = maptree_search(
            &ds,
            &PosteriorParams::default(),
            SearchBudget::expansions(0),
        )
        .unwrap();
        assert!(!r.optimal);
        assert_eq!(r.expansions_used, 0);
        assert_eq!(r.tree, DecisionTree::single_leaf(2, LabelCounts::new(1, 1)));
        assert_eq!(
            r.neg_log_joint,
            -log_joint(&r.tree, &ds, &PosteriorParams::default()).unwrap()
        );
    }

    #[test]
    fn leaf_wins_when_splits_are_expensive() {
        let ds =
            BinaryDataset::from_rows(&[vec![0], vec![1], vec![0], vec![1]], &[1, 1, 1, 1]).unwrap();
        let p = PosteriorParams::new(0.05, 0.5, 1.0, 1.0).unwrap();
        let r = maptree_search(&ds, &p, SearchBudget::unlimited()).unwrap();
        assert!(r.optimal);
        assert_eq!(r.tree.n_nodes(), 1);
    }

    #[test]
    fn xor_needs_depth_two() {
        let rows: Vec<Vec<u8>> = (0..16)
            .map(|i| vec![(i & 1) as u8, (i >> 1 & 1) as u8])
            .collect();
        let labels: Vec<u8> = rows.iter().map(|r| r[0] ^ r[1]).collect();
        let ds = BinaryDataset::from_rows(&rows, &labels).unwrap();
        let mut s = Search::new(&ds, &PosteriorParams::default());
        let r = s.run(SearchBudget::unlimited()).unwrap();
        assert!(r.optimal);
        assert_eq!(r.tree.n_leaves(), 4);
        assert_eq!(s.audit().violations(), 0);
        assert_eq!(s.admissibility_violations(), 0);
    }

    #[test]
    fn resumed_run_matches_fresh_run() {
        let rows: Vec<Vec<u8>> = (0..40u32)
            .map(|i| (0..5).map(|f| ((i * 7 + f * 13) % 5 < 2) as u8).collect())
            .collect();
        let labels: Vec<u8> = (0..40u32).map(|i| ((i * 11) % 3 == 0) as u8).collect();
        let ds = BinaryDataset::from_rows(&rows, &labels).unwrap();
        let p = PosteriorParams::default();
        let mut s = Search::new(&ds, &p);
        s.run(SearchBudget::expansions(5)).unwrap();
        let resumed = s.run(SearchBudget::expansions(20)).unwrap();
        let fresh = maptree_search(&ds, &p, SearchBudget::expansions(20)).unwrap();
        assert_eq!(resumed.tree, fresh.tree);
        assert_eq!(resumed.neg_log_joint, fresh.neg_log_joint);
    }

    #[test]
    fn node_limit_surfaces_as_resource_error() {
        let rows: Vec<Vec<u8>> = (0..32u32)
            .map(|i| (0..5).map(|f| (i >> f & 1) as u8).collect())
            .collect();
        let labels: Vec<u8> = (0..32u32).map(|i| (i.count_ones() % 2) as u8).collect();
        let ds = BinaryDataset::from_rows(&rows, &labels).unwrap();
        let mut s = Search::new(&ds, &PosteriorParams::default()).with_node_limit(50);
        match s.run(SearchBudget::unlimited()) {
            Err(SearchError::OutOfMemory { expansions, .. }) => assert!(expansions > 0),
            other => panic!("expected a resource error, got {other:?}"),
        }
    }

    #[test]
    fn search_is_send() {
        fn send<T: Send>() {}
        send::<Search<'static>>();
    }
}
