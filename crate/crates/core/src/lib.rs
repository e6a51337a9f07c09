//! Simulation and exact analysis of growing combinatorial Markov chains:
//! Pólya urns, record counts, uniform attachment and Erdős–Rényi graph
//! chains, and binary search trees.

pub mod error;
pub mod chain;
pub mod graph;
pub mod lab;
pub mod martin;
pub mod quad;
pub mod rng;
pub mod silhouette;
pub mod transforms;

pub use error::{Error, Result};
pub use graph::{embedding_count, sampling_density, sampling_density_exact, Graph, Permutation};
pub use silhouette::{BinaryTree, End, LabeledTree, Word, XiTable};
pub use chain::{simulate, ChainKind, ChainSpec, ChainState, Delta, Theta, Trajectory};
pub use lab::{ExperimentConfig, OutputFormat, ReportKind, Table};
pub use martin::{AdjacencyLimit, LogProb};
