//! Binary datasets and the sample subsets the search works on.

mod bitset;

use std::io::{self, BufRead};

use thiserror::Error;

use crate::posterior::LabelCounts;

pub use bitset::{Checkpoint, SampleSubset, SplitSide, SubsetError, SubsetHash, HASH_K1, HASH_K2};

pub(crate) const WORD_BITS: usize = 64;

pub(crate) fn n_words(n: usize) -> usize {
    n.div_ceil(WORD_BITS)
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("empty dataset")]
    Empty,
    #[error("line {line}: token {token:?} is not 0 or 1")]
    NonBinary { line: usize, token: String },
    #[error("line {line}: expected {expected} tokens, found {found}")]
    Ragged {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("line {line}: a row needs at least one feature and a label")]
    TooFewColumns { line: usize },
    #[error("row {row}: value {value} is not 0 or 1")]
    NonBinaryValue { row: usize, value: u8 },
    #[error("row {row}: expected {expected} features, found {found}")]
    RowLength {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("{features} feature rows but {labels} labels")]
    LabelLength { features: usize, labels: usize },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// An `N x F` binary feature matrix with binary labels, stored column-wise as
/// packed bit-vectors (sample `i` at bit `i % 64` of word `i / 64`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryDataset {
    n_samples: usize,
    n_features: usize,
    columns: Vec<Vec<u64>>,
    labels: Vec<u64>,
}

impl BinaryDataset {
    /// Builds a dataset from dense rows. Every entry must be 0 or 1.
    pub fn from_rows(features: &[Vec<u8>], labels: &[u8]) -> Result<Self, DatasetError> {
        if features.is_empty() {
            return Err(DatasetError::Empty);
        }
        if features.len() != labels.len() {
            return Err(DatasetError::LabelLength {
                features: features.len(),
                labels: labels.len(),
            });
        }
        let n_features = features[0].len();
        if n_features == 0 {
            return Err(DatasetError::Empty);
        }
        let n = features.len();
        let words = n_words(n);
        let mut columns = vec![vec![0u64; words]; n_features];
        let mut label_bits = vec![0u64; words];
        for (row, (xs, &y)) in features.iter().zip(labels).enumerate() {
            if xs.len() != n_features {
                return Err(DatasetError::RowLength {
                    row,
                    expected: n_features,
                    found: xs.len(),
                });
            }
            let (w, b) = (row / WORD_BITS, row % WORD_BITS);
            for (f, &x) in xs.iter().enumerate() {
                match x {
                    0 => {}
                    1 => columns[f][w] |= 1 << b,
                    value => return Err(DatasetError::NonBinaryValue { row, value }),
                }
            }
            match y {
                0 => {}
                1 => label_bits[w] |= 1 << b,
                value => return Err(DatasetError::NonBinaryValue { row, value }),
            }
        }
        Ok(Self {
            n_samples: n,
            n_features,
            columns,
            labels: label_bits,
        })
    }

    /// Parses whitespace-separated 0/1 rows, label in the last column. Blank
    /// lines and lines starting with `#` are skipped.
    pub fn load<R: BufRead>(reader: R) -> Result<Self, DatasetError> {
        Self::parse(reader, true)
    }

    /// Like [`BinaryDataset::load`] but every column is a feature; labels are
    /// set to 0.
    pub fn load_unlabeled<R: BufRead>(reader: R) -> Result<Self, DatasetError> {
        Self::parse(reader, false)
    }

    fn parse<R: BufRead>(reader: R, labeled: bool) -> Result<Self, DatasetError> {
        let mut rows: Vec<Vec<u8>> = Vec::new();
        let mut labels = Vec::new();
        let mut width = None;
        for (idx, line) in reader.lines().enumerate() {
            let line = line?;
            let lineno = idx + 1;
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let mut row = Vec::new();
            for token in trimmed.split_whitespace() {
                row.push(match token {
                    "0" => 0,
                    "1" => 1,
                    _ => {
                        return Err(DatasetError::NonBinary {
                            line: lineno,
                            token: token.to_string(),
                        })
                    }
                });
            }
            match width {
                None => width = Some(row.len()),
                Some(w) if w != row.len() => {
                    return Err(DatasetError::Ragged {
                        line: lineno,
                        expected: w,
                        found: row.len(),
                    })
                }
                _ => {}
            }
            if labeled {
                if row.len() < 2 {
                    return Err(DatasetError::TooFewColumns { line: lineno });
                }
                labels.push(row.pop().unwrap());
            } else {
                labels.push(0);
            }
            rows.push(row);
        }
        Self::from_rows(&rows, &labels)
    }

    /// Writes the dataset in the format accepted by [`BinaryDataset::load`].
    pub fn write<W: io::Write>(&self, mut out: W) -> io::Result<()> {
        let mut line = String::with_capacity(2 * (self.n_features + 1));
        for i in 0..self.n_samples {
            line.clear();
            for f in 0..self.n_features {
                line.push(if self.feature(i, f) { '1' } else { '0' });
                line.push(' ');
            }
            line.push(if self.label(i) { '1' } else { '0' });
            line.push('\n');
            out.write_all(line.as_bytes())?;
        }
        Ok(())
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn feature(&self, sample: usize, feature: usize) -> bool {
        self.columns[feature][sample / WORD_BITS] >> (sample % WORD_BITS) & 1 == 1
    }

    pub fn label(&self, sample: usize) -> bool {
        self.labels[sample / WORD_BITS] >> (sample % WORD_BITS) & 1 == 1
    }

    pub fn row(&self, sample: usize) -> Vec<bool> {
        (0..self.n_features)
            .map(|f| self.feature(sample, f))
            .collect()
    }

    pub fn column_words(&self, feature: usize) -> &[u64] {
        &self.columns[feature]
    }

    pub fn label_words(&self) -> &[u64] {
        &self.labels
    }

    pub fn label_counts_of(&self, samples: &[usize]) -> LabelCounts {
        let c1 = samples.iter().filter(|&&i| self.label(i)).count() as u32;
        LabelCounts::new(c1, samples.len() as u32 - c1)
    }

    /// Rows at the given indices, in order.
    pub fn select(&self, samples: &[usize]) -> BinaryDataset {
        let rows: Vec<Vec<u8>> = samples
            .iter()
            .map(|&i| {
                (0..self.n_features)
                    .map(|f| self.feature(i, f) as u8)
                    .collect()
            })
            .collect();
        let labels: Vec<u8> = samples.iter().map(|&i| self.label(i) as u8).collect();
        BinaryDataset::from_rows(&rows, &labels).expect("selection of a valid dataset")
    }

    /// Replaces the label of `sample`.
    pub fn set_label(&mut self, sample: usize, value: bool) {
        let (w, b) = (sample / WORD_BITS, sample % WORD_BITS);
        if value {
            self.labels[w] |= 1 << b;
        } else {
            self.labels[w] &= !(1 << b);
        }
    }
}
