//! Gradient coding with static and dynamic worker clustering.
//!
//! The crate simulates per-iteration completion times of distributed
//! gradient descent under plain gradient coding (GC), GC with static
//! clustering (GC-SC) and GC with dynamic clustering (GC-DC), where a greedy
//! scheduler re-assigns workers to clusters every iteration based on the
//! observed straggler states.
//!
//! Workers, clusters, mini-batches and codeword slots are 0-based throughout.

pub mod assignment;
pub mod code;
pub mod config;
pub mod dataset;
pub mod engine;
pub mod error;
pub mod latency;
pub mod output;
pub mod scheduler;
pub mod seed;
pub mod straggler;

pub use assignment::{
    derive_data_assignment, dynamic_assignment_matrix, feasibility_check, static_assignment,
    ClusterAssignmentMatrix, DataAssignment,
};
pub use code::{build_cluster_code, decode_cluster, evaluate_codeword, ClusterCode, Codebook, Codeword};
pub use config::{ExperimentConfig, Scheme};
pub use engine::{run_experiment, ExperimentResult, IterationRecord, SchemeSummary};
pub use error::{Error, Result};
pub use scheduler::{assign_clusters, Placement, Schedule, SelectionMode};
pub use straggler::{Ssi, StragglerConfig, StragglerModel, StragglerState};
