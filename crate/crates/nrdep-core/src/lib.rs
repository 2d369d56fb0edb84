//! Dependent linear subspaces across paired data views.
//!
//! Given two or more views of the same samples, this crate finds per-view
//! linear projections whose probabilistic neighborhoods agree across views.
//! Agreement is the inner product of per-point neighbor distributions,
//! optimized by annealed rounds of L-BFGS in which a symmetrized-KL
//! disagreement penalty is shrunk away. A regularized CCA baseline, a
//! seeded grouped-data generator, and neighbor-retrieval evaluation
//! utilities round out the toolkit; the `nrdep` binary exposes all of it
//! on the command line.

pub mod baseline_cca;
pub mod data_model;
pub mod error;
pub mod evaluation;
pub mod io;
pub mod measures;
pub mod neighborhood;
pub mod objective;
pub mod optimizer;
pub mod synthgen;

pub use baseline_cca::{cca_fit, default_ridge, CcaResult};
pub use data_model::{
    validate_dataset, FeatureMatrix, FitConfig, LinearMap, MultiViewDataset, NeighborField,
};
pub use error::{NrdepError, Result};
pub use evaluation::{
    knn_sets, mean_precision_recall, table1_protocol, RetrievalPoint, RetrievalReport,
    Table1Summary,
};
pub use measures::{angle_cosine, kl_divergence, sim_inner, symmetrized_kl};
pub use neighborhood::{compute_sigma, neighbor_field, project, projected_neighbor_field, BandwidthSpec};
pub use objective::ObjectiveState;
pub use optimizer::{
    fit, lbfgs_minimize, pack_maps, project_views, unpack_maps, FitResult, FlatParams,
    LbfgsResult, RestartTrace, RoundRecord, ViewLayout,
};
pub use synthgen::{correspondence_score, generate, SyntheticDataset, SyntheticSpec};

/// Library version recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
