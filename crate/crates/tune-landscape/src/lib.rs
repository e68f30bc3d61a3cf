//! Analysis toolkit for GPU kernel autotuning datasets: discrete
//! parameter spaces with constraint expressions, tuning-run ingestion,
//! fitness-landscape analysis (fitness flow graphs, PageRank
//! centrality), gradient-boosted-tree surrogates with permutation
//! feature importance, benchmark characteristic analyses, and
//! reference tuners.

pub mod analysis;
pub mod constraint;
pub mod dataset;
pub mod landscape;
pub mod report;
pub mod space;
pub mod surrogate;
pub mod tuner;

pub use constraint::{Expr, ParseError};
pub use dataset::{DeviceDataset, Status, StudyDataset};
pub use landscape::{FitnessFlowGraph, NeighborhoodPolicy};
pub use space::{Configuration, Parameter, ParameterSpace, SpaceError, SpaceRef};
