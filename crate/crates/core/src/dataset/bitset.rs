//! Reversible sparse bitset over sample indices.
//!
//! Only nonzero words are tracked (`active`, kept sorted). Every `restrict`
//! pushes a checkpoint recording the words it changed, and `undo` replays
//! those records in LIFO order to get back the previous state bit-exactly.

use thiserror::Error;

use super::{n_words, BinaryDataset, WORD_BITS};
use crate::posterior::LabelCounts;

/// Multiplier of the first 64-bit hash lane.
pub const HASH_K1: u64 = 377_424_577_268_497_867;
/// Multiplier of the second 64-bit hash lane.
pub const HASH_K2: u64 = 285_989_758_769_553_131;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SubsetError {
    #[error("undo out of order: checkpoint {got} popped while {expected} is the most recent")]
    OutOfOrder { expected: usize, got: usize },
}

/// Subset digest used as the subproblem cache key.
///
/// `h1`, `h2` are the 128-bit polynomial hash `h_k = sum_b block_b * K_k^b
/// mod 2^64`. With odd multipliers the low `t` bits of each lane depend only on
/// the low `t` bits of the blocks, so subsets that differ only in high bit
/// positions collide: `{63}` and `{127}` both hash to `(2^63, 2^63)`. `mix`
/// sums a strong per-block mix of `(b, block_b)` over nonzero blocks and
/// separates such sets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, PartialOrd, Ord)]
pub struct SubsetHash {
    pub h1: u64,
    pub h2: u64,
    pub mix: u64,
}

#[inline]
fn mix_block(index: u32, block: u64) -> u64 {
    let mut x = block ^ (index as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

impl SubsetHash {
    /// Hash of a dense block array, visiting every block.
    pub fn of_blocks(blocks: &[u64]) -> SubsetHash {
        let (mut h1, mut h2, mut mix) = (0u64, 0u64, 0u64);
        let (mut p1, mut p2) = (1u64, 1u64);
        for (b, &block) in blocks.iter().enumerate() {
            h1 = h1.wrapping_add(block.wrapping_mul(p1));
            h2 = h2.wrapping_add(block.wrapping_mul(p2));
            if block != 0 {
                mix = mix.wrapping_add(mix_block(b as u32, block));
            }
            p1 = p1.wrapping_mul(HASH_K1);
            p2 = p2.wrapping_mul(HASH_K2);
        }
        SubsetHash { h1, h2, mix }
    }

    /// The polynomial lanes alone.
    pub fn lanes(&self) -> (u64, u64) {
        (self.h1, self.h2)
    }
}

/// Incremental accumulator over blocks visited in increasing index order.
#[derive(Clone, Copy)]
struct HashAcc {
    hash: SubsetHash,
}

impl HashAcc {
    fn new() -> Self {
        Self {
            hash: SubsetHash::default(),
        }
    }

    #[inline]
    fn push(&mut self, index: u32, pow1: u64, pow2: u64, block: u64) {
        self.hash.h1 = self.hash.h1.wrapping_add(block.wrapping_mul(pow1));
        self.hash.h2 = self.hash.h2.wrapping_add(block.wrapping_mul(pow2));
        self.hash.mix = self.hash.mix.wrapping_add(mix_block(index, block));
    }
}

/// Walks `K1^b, K2^b` forward over a sorted sequence of block indices.
struct Powers {
    at: u32,
    p1: u64,
    p2: u64,
}

impl Powers {
    fn new() -> Self {
        Self {
            at: 0,
            p1: 1,
            p2: 1,
        }
    }

    #[inline]
    fn advance_to(&mut self, block: u32) -> (u64, u64) {
        let gap = block - self.at;
        if gap == 1 {
            self.p1 = self.p1.wrapping_mul(HASH_K1);
            self.p2 = self.p2.wrapping_mul(HASH_K2);
        } else if gap > 1 {
            self.p1 = self.p1.wrapping_mul(HASH_K1.wrapping_pow(gap));
            self.p2 = self.p2.wrapping_mul(HASH_K2.wrapping_pow(gap));
        }
        self.at = block;
        (self.p1, self.p2)
    }
}

/// Labels and hash of one side of a candidate split.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SplitSide {
    pub counts: LabelCounts,
    pub hash: SubsetHash,
}

/// Token returned by [`SampleSubset::restrict`]; must be handed back to
/// [`SampleSubset::undo`] in LIFO order.
#[must_use = "a restriction must be undone with its checkpoint"]
#[derive(Debug, PartialEq, Eq)]
pub struct Checkpoint {
    level: usize,
}

impl Checkpoint {
    pub fn level(&self) -> usize {
        self.level
    }
}

#[derive(Debug, Clone, Copy)]
struct Frame {
    history_start: usize,
    active_len: usize,
}

#[derive(Debug, Clone)]
pub struct SampleSubset {
    n_samples: usize,
    words: Vec<u64>,
    active: Vec<u32>,
    history: Vec<(u32, u64)>,
    frames: Vec<Frame>,
    scratch: Vec<u32>,
}

impl SampleSubset {
    /// All `N` samples of `dataset`.
    pub fn full(dataset: &BinaryDataset) -> Self {
        Self::full_of_size(dataset.n_samples())
    }

    pub fn full_of_size(n_samples: usize) -> Self {
        let mut words = vec![u64::MAX; n_words(n_samples)];
        let tail = n_samples % WORD_BITS;
        if tail != 0 {
            *words.last_mut().unwrap() = (1u64 << tail) - 1;
        }
        Self::from_words(n_samples, words)
    }

    pub fn empty(n_samples: usize) -> Self {
        Self::from_words(n_samples, vec![0; n_words(n_samples)])
    }

    pub fn from_indices<I: IntoIterator<Item = usize>>(n_samples: usize, indices: I) -> Self {
        let mut words = vec![0u64; n_words(n_samples)];
        for i in indices {
            assert!(i < n_samples, "sample {i} out of range {n_samples}");
            words[i / WORD_BITS] |= 1 << (i % WORD_BITS);
        }
        Self::from_words(n_samples, words)
    }

    fn from_words(n_samples: usize, words: Vec<u64>) -> Self {
        let active = (0..words.len() as u32)
            .filter(|&w| words[w as usize] != 0)
            .collect();
        Self {
            n_samples,
            words,
            active,
            history: Vec::new(),
            frames: Vec::new(),
            scratch: Vec::new(),
        }
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    /// Indices of the nonzero words, ascending.
    pub fn active_words(&self) -> &[u32] {
        &self.active
    }

    /// Number of unpopped checkpoints.
    pub fn depth(&self) -> usize {
        self.frames.len()
    }

    pub fn len(&self) -> usize {
        self.active
            .iter()
            .map(|&w| self.words[w as usize].count_ones() as usize)
            .sum()
    }

    pub fn is_empty(&self) -> bool {
        self.active.is_empty()
    }

    pub fn contains(&self, sample: usize) -> bool {
        sample < self.n_samples && self.words[sample / WORD_BITS] >> (sample % WORD_BITS) & 1 == 1
    }

    pub fn indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.active.iter().flat_map(move |&w| {
            let mut bits = self.words[w as usize];
            std::iter::from_fn(move || {
                if bits == 0 {
                    return None;
                }
                let b = bits.trailing_zeros() as usize;
                bits &= bits - 1;
                Some(w as usize * WORD_BITS + b)
            })
        })
    }

    pub fn label_counts(&self, dataset: &BinaryDataset) -> LabelCounts {
        let labels = dataset.label_words();
        let (mut c1, mut total) = (0u32, 0u32);
        for &w in &self.active {
            let word = self.words[w as usize];
            c1 += (word & labels[w as usize]).count_ones();
            total += word.count_ones();
        }
        LabelCounts::new(c1, total - c1)
    }

    /// Number of members with `feature = 1`.
    fn ones_in(&self, dataset: &BinaryDataset, feature: usize) -> usize {
        let col = dataset.column_words(feature);
        self.active
            .iter()
            .map(|&w| (self.words[w as usize] & col[w as usize]).count_ones() as usize)
            .sum()
    }

    /// Features that leave both sides of the split nonempty, ascending.
    pub fn valid_splits(&self, dataset: &BinaryDataset) -> Vec<usize> {
        let size = self.len();
        (0..dataset.n_features())
            .filter(|&f| {
                let ones = self.ones_in(dataset, f);
                ones > 0 && ones < size
            })
            .collect()
    }

    pub fn hash(&self) -> SubsetHash {
        let mut acc = HashAcc::new();
        let mut powers = Powers::new();
        for &w in &self.active {
            let (p1, p2) = powers.advance_to(w);
            acc.push(w, p1, p2, self.words[w as usize]);
        }
        acc.hash
    }

    /// Label counts and hashes of `I|f=0` and `I|f=1`, without modifying the
    /// subset.
    pub fn split_stats(&self, dataset: &BinaryDataset, feature: usize) -> [SplitSide; 2] {
        let col = dataset.column_words(feature);
        let labels = dataset.label_words();
        let mut acc = [HashAcc::new(); 2];
        let mut ones = [0u32; 2];
        let mut total = [0u32; 2];
        let mut powers = Powers::new();
        for &w in &self.active {
            let (p1, p2) = powers.advance_to(w);
            let word = self.words[w as usize];
            let hi = word & col[w as usize];
            let lo = word & !col[w as usize];
            let lab = labels[w as usize];
            for (side, part) in [lo, hi].into_iter().enumerate() {
                if part != 0 {
                    acc[side].push(w, p1, p2, part);
                    ones[side] += (part & lab).count_ones();
                    total[side] += part.count_ones();
                }
            }
        }
        [0, 1].map(|side| SplitSide {
            counts: LabelCounts::new(ones[side], total[side] - ones[side]),
            hash: acc[side].hash,
        })
    }

    /// Intersects the subset in place with `feature = value`.
    pub fn restrict(&mut self, dataset: &BinaryDataset, feature: usize, value: bool) -> Checkpoint {
        self.frames.push(Frame {
            history_start: self.history.len(),
            active_len: self.active.len(),
        });
        let col = dataset.column_words(feature);
        let mut kept = 0;
        for k in 0..self.active.len() {
            let w = self.active[k];
            let old = self.words[w as usize];
            let mask = if value {
                col[w as usize]
            } else {
                !col[w as usize]
            };
            let new = old & mask;
            if new != old {
                self.history.push((w, old));
                self.words[w as usize] = new;
            }
            if new != 0 {
                self.active[kept] = w;
                kept += 1;
            }
        }
        self.active.truncate(kept);
        Checkpoint {
            level: self.frames.len(),
        }
    }

    /// Reverts the most recent [`SampleSubset::restrict`].
    pub fn undo(&mut self, checkpoint: Checkpoint) -> Result<(), SubsetError> {
        if checkpoint.level != self.frames.len() {
            return Err(SubsetError::OutOfOrder {
                expected: self.frames.len(),
                got: checkpoint.level,
            });
        }
        let frame = self.frames.pop().expect("level matched a frame");
        self.scratch.clear();
        for &(w, old) in &self.history[frame.history_start..] {
            if self.words[w as usize] == 0 {
                self.scratch.push(w);
            }
            self.words[w as usize] = old;
        }
        self.history.truncate(frame.history_start);
        if !self.scratch.is_empty() {
            // Both lists are ascending; merge the revived words back in.
            let survivors = std::mem::take(&mut self.active);
            let mut merged = Vec::with_capacity(frame.active_len);
            let (mut i, mut j) = (0, 0);
            while i < survivors.len() || j < self.scratch.len() {
                if j == self.scratch.len()
                    || (i < survivors.len() && survivors[i] < self.scratch[j])
                {
                    merged.push(survivors[i]);
                    i += 1;
                } else {
                    merged.push(self.scratch[j]);
                    j += 1;
                }
            }
            self.active = merged;
        }
        debug_assert_eq!(self.active.len(), frame.active_len);
        Ok(())
    }
}

impl PartialEq for SampleSubset {
    /// Set equality; checkpoint history is ignored.
    fn eq(&self, other: &Self) -> bool {
        self.n_samples == other.n_samples && self.words == other.words
    }
}

impl Eq for SampleSubset {}
