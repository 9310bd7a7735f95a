//! Exact computation for finite tabular latent Markov decision processes.

pub mod checkpoint;
pub mod coverage;
pub mod error;
pub mod exact;
pub mod io;
pub mod lemmas;
pub mod model;
pub mod omle;
pub mod policy;
pub mod random;
pub mod sample;
pub mod trajectory;

pub use checkpoint::{default_budget, enumerate_checkpoint_specs, enumerate_subsequences, CheckpointSpec};
pub use error::{Error, Result};
pub use model::{perturb_model, validate_model, LmdpModel, Shape, ValidationReport};
pub use policy::{build_segmented_policy, HistoryKey, HistoryPolicy, MemorylessPolicy, MixturePolicy, Policy};
pub use sample::sample_trajectory;
pub use trajectory::{Step, Trajectory};
