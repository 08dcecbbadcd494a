//! Decoupled learning on large directed heterogeneous graphs.
//!
//! The crate splits graph learning into a parameter-free precompute stage
//! and a cheap training stage: an edge-aware propagation engine smooths
//! node features over typed multi-hop neighborhoods once, then simple
//! multi-label classifiers train on the stacked hop features without ever
//! touching the graph again. A construction pipeline turns Wikidata-style
//! knowledge-graph dumps into the graph, feature and label artifacts the
//! engine consumes.

pub mod apm;
pub mod error;
pub mod graph;
pub mod io;
pub mod labels;
pub mod matrix;
pub mod metrics;
pub mod models;
pub mod pipeline;

pub use error::{Error, Result};
pub use graph::{build_graph, HeteroGraph};
pub use labels::LabelMatrix;
pub use matrix::{FeatureMatrix, RelationEmbeddingTable};
