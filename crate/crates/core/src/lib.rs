//! Graph feature imputation by fractional subgraph diffusion (FSD) and
//! class-aware propagation (CAP).
//!
//! A typical run loads a graph and features, keeps the largest connected
//! component, hides entries with a [`Mask`], fills them with [`fsd_impute`],
//! pseudo-labels the nodes with [`label_propagation`] and finally refines the
//! imputed rows with [`class_aware_propagation`].

pub mod cap;
pub mod error;
pub mod features;
pub mod fractional;
pub mod fsd;
pub mod graph;
pub mod labels;
pub mod masking;
pub mod metrics;
mod parallel;
pub mod pipeline;
pub mod synthetic;

pub use cap::{class_aware_propagation, cap_refine, neighborhood_entropy, temperature_softmax, CapOutput};
pub use error::{Error, Result};
pub use features::FeatureMatrix;
pub use fractional::{build_fractional, FracOperator};
pub use fsd::{fp_baseline, fsd_impute, layer_iterate, DegreeScope, FsdConfig, Imputation};
pub use graph::{largest_connected_component, sym_normalize, Graph, NodeMapping, NormalizedAdjacency};
pub use labels::{label_propagation, PropagationConfig, PseudoLabelSet};
pub use masking::{apply_mask, generate_mask, Mask, MissingMode};
pub use parallel::configure_threads;
pub use pipeline::{cmd_eval, cmd_impute, cmd_mask, cmd_run, PipelineConfig};
