//! Simulation toolkit for multi-label-learning discretely-modulated CV-QKD.
//!
//! The pipeline runs in two phases. During *state learning* Alice sends
//! labelled PSK coherent states through a lossy, noisy fiber; Bob turns each
//! received point into a vector of distances to a set of reference states and
//! trains a Bayesian multi-label kNN classifier on them. During *state
//! prediction* the trained classifier recovers which constellation state was
//! sent, and a private, refreshable encoding rule maps states to key bits.
//!
//! Modules, bottom-up:
//!
//! - [`statespace`]: phase-space points, QPSK/8PSK constellations, quadrant
//!   labels and encoding rules.
//! - [`channel`]: the fiber channel map and seeded random sources.
//! - [`features`]: distance features and outlier filtering.
//! - [`classifier`]: the multi-label kNN classifier and label-set decoding.
//! - [`metrics`]: Precision/Recall/FPR, average precision, ROC/AUC.
//! - [`keyrate`]: asymptotic and finite-size secret key rates.
//! - [`protocol`]: state learning, state prediction, intercept-resend demo.
//!
//! Batch-heavy operations accept an [`Execution`] policy. With the default
//! `parallel` feature they fan out over rayon; without it every policy runs
//! sequentially. Results are bit-identical either way.

pub mod channel;
pub mod classifier;
pub mod error;
pub mod exec;
pub mod features;
pub mod keyrate;
pub mod metrics;
pub mod numfmt;
pub mod protocol;
pub mod statespace;

pub use error::{Error, Result};
pub use exec::Execution;
