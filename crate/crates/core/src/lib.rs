//! Temporal knowledge graph extrapolation with causally disentangled
//! evolutionary embeddings.
//!
//! The pipeline rolls a relation-aware graph convolution plus gated recurrent
//! update over a window of historical snapshots, splits the evolved entity and
//! relation embeddings into causal and confounding halves with complementary
//! learned masks, penalizes the mutual information between the halves with a
//! variational contrastive upper bound, performs backdoor-style interventions
//! that swap confounding signals between rows, and decodes future facts with a
//! convolutional scorer over `(subject, relation, time)` features.
//!
//! Entry points:
//! - [`dataset::load_bundle`] / [`synthetic::periodic_bundle`] for data,
//! - [`train::run_training`] for the full training loop,
//! - [`eval::evaluate`] for time-aware filtered MRR and Hits@k,
//! - [`experiments`] for ablation, noise, sweep, and gradient-audit suites,
//! - [`cli`] for the command-line front end behind the `tkgr` binary.

pub mod autodiff;
pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod dataset;
pub mod decoder;
pub mod disentangle;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod experiments;
pub mod model;
pub mod nn;
pub mod objective;
pub mod synthetic;
pub mod train;

pub use config::TrainConfig;
pub use dataset::DatasetBundle;
pub use error::{Result, TkgrError};
pub use model::{Model, ModelConfig};
