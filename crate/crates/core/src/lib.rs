//! Exact maximum a posteriori decision trees under the Bayesian CART prior.
//!
//! The posterior over binary classification trees is recast as a minimum-cost
//! solution problem on an AND/OR graph of subproblems `(subset, depth)`;
//! [`search::maptree_search`] explores that graph best-first, guided by an
//! admissible and consistent heuristic, and certifies optimality when the
//! root's lower and upper bounds meet.
//!
//! ```
//! use maptree_core::{maptree_search, BinaryDataset, PosteriorParams, SearchBudget};
//!
//! let rows = vec![vec![0, 1], vec![1, 1], vec![0, 0], vec![1, 0]];
//! let ds = BinaryDataset::from_rows(&rows, &[0, 0, 1, 1]).unwrap();
//! let result = maptree_search(&ds, &PosteriorParams::default(), SearchBudget::unlimited()).unwrap();
//! assert!(result.optimal);
//! ```

pub mod api;
pub mod dataset;
pub mod graph;
pub mod oracle;
pub mod posterior;
pub mod search;
pub mod synthetic;
pub mod tree;

pub use api::{fit, fit_dataset, FitError, FitOptions, RunReport};
pub use dataset::{BinaryDataset, DatasetError, SampleSubset, SubsetHash};
pub use posterior::{log_joint, Cost, LabelCounts, LogProb, PosteriorError, PosteriorParams};
pub use search::{heuristic, maptree_search, Search, SearchBudget, SearchError, SearchResult};
pub use synthetic::SynthConfig;
pub use tree::{fit_greedy, DecisionTree, Evaluation, TreeError, TreeNode};
