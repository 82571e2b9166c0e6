#![allow(clippy::neg_cmp_op_on_partial_ord)]

//! Citation-count modelling: a linear birth process with exponentially
//! aging attractiveness, its likelihood fit, clustering of fitted papers,
//! early-citation prediction of cluster membership, and journal analytics.

pub mod analytics;
pub mod artifacts;
pub mod cluster;
pub mod error;
pub mod fit;
pub mod ingest;
pub mod model;
pub mod optim;
pub mod predict;
pub mod simulate;

pub use cluster::{ClusterAssignment, FeatureVector, Label, Transform};
pub use error::{Error, Result};
pub use fit::{FitOptions, FitResult, WindowPolicy};
pub use ingest::{CorpusFormat, IngestedPaper, LoadedCorpus, PrepublicationPolicy};
pub use model::{ModelParams, ProcessState, Window};
pub use simulate::{CitationHistory, CorpusSpec, GroupSpec, Paper};

/// Tool version embedded in every output file.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
