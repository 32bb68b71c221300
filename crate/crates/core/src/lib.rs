//! Pseudo-label remedy for unsupervised domain adaptation.
//!
//! A projection-based adapter (identity, JDA or BDA) aligns a labelled source
//! domain with an unlabelled target domain; a nearest-neighbour classifier
//! produces crude target pseudo labels; the remedy loop then keeps, per
//! pseudo class, the samples that form the dominant component of a
//! thresholded cosine-similarity graph and relabels the rest with a classifier
//! trained on the source plus those confident samples.
//!
//! ```
//! use label_remedy::{datasets, pipeline, AdapterKind, ExperimentConfig};
//!
//! let data = datasets::make_synthetic_shift(3, 20, 8, 1.0, 0.1, 7).unwrap();
//! let cfg = ExperimentConfig {
//!     adapter: AdapterKind::Jda,
//!     subspace_dim: 4,
//!     outer_iters: 2,
//!     ..ExperimentConfig::default()
//! };
//! let out = pipeline::run(&data.source, &data.target, &cfg, Some(&data.ground_truth)).unwrap();
//! assert_eq!(out.labels().len(), 60);
//! ```

pub mod adapters;
pub mod classifier;
pub mod datasets;
pub mod error;
pub mod eval;
pub mod graph;
pub mod pipeline;
pub mod remedy;
pub mod types;
pub mod utsp;

pub use adapters::{build_mmd_matrices, constraint_residual, fit_projection, MmdSolver, MmdSystem};
pub use classifier::NnModel;
pub use error::{Error, Result};
pub use eval::{accuracy, Method, TaskResult, TaskSpec};
pub use graph::{AdjacencyMask, SpanningTree};
pub use pipeline::{run, IterationTrace, RunOutcome};
pub use remedy::remedy;
pub use types::{
    validate_domains, AdapterKind, ClassSimilarityGraph, ExperimentConfig, FeatureMatrix,
    LabeledDomain, Projection, PseudoLabelState, UnlabeledDomain,
};
pub use utsp::utsp_partition;
