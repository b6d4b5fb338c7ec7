//! Explicit part of the BCART AND/OR graph.
//!
//! OR nodes are subproblems `(subset, depth)`; an OR node's terminal child is
//! not materialized, its edge cost is stored on the OR node instead. AND nodes
//! exist only for nontrivial splits, so both of their OR children are
//! nonempty. OR nodes reached along different split paths are merged through
//! a cache keyed by `(subset hash, depth)`; the subset itself is never stored.

use std::collections::HashMap;
use std::collections::TryReserveError;
use std::hash::{BuildHasherDefault, Hasher};

use thiserror::Error;

use crate::dataset::{BinaryDataset, SampleSubset, SubsetHash};
use crate::posterior::{split_cost, terminal_cost, Cost, LabelCounts, PosteriorParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct OrId(u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct AndId(u32);

impl OrId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl AndId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

const NO_EDGE: u32 = u32::MAX;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("OR node {0:?} is already expanded")]
    AlreadyExpanded(OrId),
    #[error("out of memory growing the search graph ({or_nodes} OR nodes, {and_nodes} AND nodes)")]
    OutOfMemory { or_nodes: usize, and_nodes: usize },
    #[error("search graph exceeds {0} nodes")]
    TooLarge(usize),
}

#[derive(Debug, Clone)]
pub struct OrNode {
    pub(crate) lower_bound: Cost,
    pub(crate) upper_bound: Cost,
    /// Terminal and split edge costs; known once the node is resolved.
    terminal_cost: Cost,
    split_cost: Cost,
    counts: LabelCounts,
    first_and: u32,
    n_and: u32,
    depth: u16,
    resolved: bool,
    expanded: bool,
    pub(crate) queued: bool,
    first_parent: u32,
}

impl OrNode {
    pub fn depth(&self) -> usize {
        self.depth as usize
    }

    pub fn counts(&self) -> LabelCounts {
        self.counts
    }

    pub fn lower_bound(&self) -> Cost {
        self.lower_bound
    }

    pub fn upper_bound(&self) -> Cost {
        self.upper_bound
    }

    pub fn is_expanded(&self) -> bool {
        self.expanded
    }

    /// `|V(I)|`, known once the node has been resolved (root, or expanded).
    pub fn num_valid_splits(&self) -> Option<usize> {
        self.resolved.then_some(self.n_and as usize)
    }

    /// `-log p_leaf - log l_leaf`, known once resolved.
    pub fn terminal_cost(&self) -> Option<Cost> {
        self.resolved.then_some(self.terminal_cost)
    }

    /// `-log p_inner(d, I)`, the edge cost to each AND child; known once resolved.
    pub fn split_cost(&self) -> Option<Cost> {
        self.resolved.then_some(self.split_cost)
    }

    pub(crate) fn and_range(&self) -> std::ops::Range<usize> {
        if self.expanded {
            self.first_and as usize..(self.first_and + self.n_and) as usize
        } else {
            0..0
        }
    }
}

#[derive(Debug, Clone)]
pub struct AndNode {
    feature: u32,
    parent: OrId,
    children: [OrId; 2],
    pub(crate) lower_bound: Cost,
    pub(crate) upper_bound: Cost,
}

impl AndNode {
    pub fn feature(&self) -> usize {
        self.feature as usize
    }

    pub fn parent(&self) -> OrId {
        self.parent
    }

    /// `[feature = 0 child, feature = 1 child]`.
    pub fn children(&self) -> [OrId; 2] {
        self.children
    }

    pub fn lower_bound(&self) -> Cost {
        self.lower_bound
    }

    pub fn upper_bound(&self) -> Cost {
        self.upper_bound
    }
}

#[derive(Debug, Clone, Copy)]
struct ParentEdge {
    and: AndId,
    next: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct CacheKey {
    hash: SubsetHash,
    depth: u16,
}

impl std::hash::Hash for CacheKey {
    fn hash<H: Hasher>(&self, state: &mut H) {
        state.write_u64(self.hash.mix ^ self.depth as u64);
    }
}

/// The key's `mix` lane is already well mixed; only spread it once more.
#[derive(Default)]
struct KeyHasher(u64);

impl Hasher for KeyHasher {
    fn finish(&self) -> u64 {
        let x = self.0.wrapping_mul(0x9E37_79B9_7F4A_7C15);
        x ^ (x >> 29)
    }

    fn write(&mut self, bytes: &[u8]) {
        for &b in bytes {
            self.0 = self.0.rotate_left(8) ^ b as u64;
        }
    }

    fn write_u64(&mut self, v: u64) {
        self.0 ^= v;
    }
}

type Cache = HashMap<CacheKey, OrId, BuildHasherDefault<KeyHasher>>;

/// Result of [`AndOrGraph::expand`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Expansion {
    pub and_children: usize,
    pub new_or_nodes: usize,
    pub cache_hits: usize,
}

#[derive(Debug, Clone)]
pub struct AndOrGraph {
    params: PosteriorParams,
    ors: Vec<OrNode>,
    ands: Vec<AndNode>,
    parent_edges: Vec<ParentEdge>,
    cache: Cache,
    max_nodes: usize,
    created: Vec<OrId>,
}

fn oom(graph: &AndOrGraph) -> impl Fn(TryReserveError) -> GraphError + '_ {
    move |_| GraphError::OutOfMemory {
        or_nodes: graph.ors.len(),
        and_nodes: graph.ands.len(),
    }
}

impl AndOrGraph {
    /// A graph holding only the root `o_{[N], 0}`, with `LB = h(root)` and
    /// `UB = inf`.
    pub fn new<H>(dataset: &BinaryDataset, params: &PosteriorParams, heuristic: H) -> Self
    where
        H: Fn(LabelCounts, usize) -> Cost,
    {
        let subset = SampleSubset::full(dataset);
        let counts = subset.label_counts(dataset);
        let nvs = subset.valid_splits(dataset).len();
        let root = OrNode {
            lower_bound: heuristic(counts, 0),
            upper_bound: Cost::INFINITE,
            terminal_cost: terminal_cost(0, nvs, counts, params),
            split_cost: split_cost(0, nvs, params),
            counts,
            first_and: 0,
            n_and: nvs as u32,
            depth: 0,
            resolved: true,
            expanded: false,
            queued: false,
            first_parent: NO_EDGE,
        };
        let mut cache = Cache::default();
        cache.insert(
            CacheKey {
                hash: subset.hash(),
                depth: 0,
            },
            OrId(0),
        );
        Self {
            params: *params,
            ors: vec![root],
            ands: Vec::new(),
            parent_edges: Vec::new(),
            cache,
            max_nodes: u32::MAX as usize - 1,
            created: Vec::new(),
        }
    }

    /// Caps the number of OR plus AND records; expansion fails beyond it.
    pub fn with_node_limit(mut self, max_nodes: usize) -> Self {
        self.max_nodes = max_nodes.min(u32::MAX as usize - 1);
        self
    }

    pub fn params(&self) -> &PosteriorParams {
        &self.params
    }

    pub fn root(&self) -> OrId {
        OrId(0)
    }

    pub fn or_node(&self, id: OrId) -> &OrNode {
        &self.ors[id.index()]
    }

    pub(crate) fn or_node_mut(&mut self, id: OrId) -> &mut OrNode {
        &mut self.ors[id.index()]
    }

    pub fn and_node(&self, id: AndId) -> &AndNode {
        &self.ands[id.index()]
    }

    pub(crate) fn and_node_mut(&mut self, id: AndId) -> &mut AndNode {
        &mut self.ands[id.index()]
    }

    pub fn n_or_nodes(&self) -> usize {
        self.ors.len()
    }

    pub fn n_and_nodes(&self) -> usize {
        self.ands.len()
    }

    pub fn or_ids(&self) -> impl Iterator<Item = OrId> {
        (0..self.ors.len() as u32).map(OrId)
    }

    /// AND children of an expanded OR node, ascending by feature.
    pub fn and_children(&self, id: OrId) -> impl Iterator<Item = AndId> + '_ {
        self.ors[id.index()].and_range().map(|i| AndId(i as u32))
    }

    /// AND nodes having `id` as a child.
    pub fn parents(&self, id: OrId) -> impl Iterator<Item = AndId> + '_ {
        let mut edge = self.ors[id.index()].first_parent;
        std::iter::from_fn(move || {
            if edge == NO_EDGE {
                return None;
            }
            let e = self.parent_edges[edge as usize];
            edge = e.next;
            Some(e.and)
        })
    }

    /// OR node ids created by the most recent expansion.
    pub fn last_created(&self) -> &[OrId] {
        &self.created
    }

    /// Looks up the OR node for a subset at a depth.
    pub fn lookup(&self, hash: SubsetHash, depth: usize) -> Option<OrId> {
        self.cache
            .get(&CacheKey {
                hash,
                depth: depth as u16,
            })
            .copied()
    }

    /// Expands `id`, whose subset `subset` currently holds.
    ///
    /// Creates one AND node per nontrivial split, each with its two OR children
    /// at `depth + 1`. Children already in the cache are reused with their
    /// current bounds; new ones start at `LB = h`, `UB = inf`. AND bounds are
    /// the sums of their children's.
    pub fn expand<H>(
        &mut self,
        id: OrId,
        subset: &SampleSubset,
        dataset: &BinaryDataset,
        heuristic: H,
    ) -> Result<Expansion, GraphError>
    where
        H: Fn(LabelCounts, usize) -> Cost,
    {
        if self.ors[id.index()].expanded {
            return Err(GraphError::AlreadyExpanded(id));
        }
        let depth = self.ors[id.index()].depth as usize;
        debug_assert_eq!(subset.label_counts(dataset), self.ors[id.index()].counts);
        let valid = subset.valid_splits(dataset);

        let needed = self.ors.len() + self.ands.len() + 3 * valid.len();
        if needed > self.max_nodes {
            return Err(GraphError::TooLarge(self.max_nodes));
        }
        self.ors.try_reserve(2 * valid.len()).map_err(oom(self))?;
        self.ands.try_reserve(valid.len()).map_err(oom(self))?;
        self.parent_edges
            .try_reserve(2 * valid.len())
            .map_err(oom(self))?;
        self.cache.try_reserve(2 * valid.len()).map_err(oom(self))?;

        {
            let node = &mut self.ors[id.index()];
            let nvs = valid.len();
            if !node.resolved {
                node.terminal_cost = terminal_cost(depth, nvs, node.counts, &self.params);
                node.split_cost = split_cost(depth, nvs, &self.params);
                node.resolved = true;
            }
            node.n_and = nvs as u32;
            node.first_and = self.ands.len() as u32;
            node.expanded = true;
        }

        self.created.clear();
        let mut cache_hits = 0;
        for &feature in &valid {
            let and_id = AndId(self.ands.len() as u32);
            let sides = subset.split_stats(dataset, feature);
            let mut children = [OrId(0); 2];
            for (side, stats) in sides.iter().enumerate() {
                let key = CacheKey {
                    hash: stats.hash,
                    depth: (depth + 1) as u16,
                };
                let child = match self.cache.get(&key) {
                    Some(&existing) => {
                        cache_hits += 1;
                        existing
                    }
                    None => {
                        let new = OrId(self.ors.len() as u32);
                        self.ors.push(OrNode {
                            lower_bound: heuristic(stats.counts, depth + 1),
                            upper_bound: Cost::INFINITE,
                            terminal_cost: Cost::INFINITE,
                            split_cost: Cost::INFINITE,
                            counts: stats.counts,
                            first_and: 0,
                            n_and: 0,
                            depth: (depth + 1) as u16,
                            resolved: false,
                            expanded: false,
                            queued: false,
                            first_parent: NO_EDGE,
                        });
                        self.cache.insert(key, new);
                        self.created.push(new);
                        new
                    }
                };
                let edge = self.parent_edges.len() as u32;
                let child_node = &mut self.ors[child.index()];
                self.parent_edges.push(ParentEdge {
                    and: and_id,
                    next: child_node.first_parent,
                });
                child_node.first_parent = edge;
                children[side] = child;
            }
            let [c0, c1] = children;
            let (n0, n1) = (&self.ors[c0.index()], &self.ors[c1.index()]);
            self.ands.push(AndNode {
                feature: feature as u32,
                parent: id,
                children,
                lower_bound: n0.lower_bound + n1.lower_bound,
                upper_bound: n0.upper_bound + n1.upper_bound,
            });
        }
        Ok(Expansion {
            and_children: valid.len(),
            new_or_nodes: self.created.len(),
            cache_hits,
        })
    }
}
