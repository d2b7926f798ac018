//! Count-based exploration from clustered observation embeddings.
//!
//! Each episode's embeddings are clustered with a Gaussian mixture; the
//! episodic cluster centers are then matched by cosine similarity against a
//! growing global table of `(center, count)` pairs. The table's counts act as
//! pseudo-counts and drive an inverse-square-root intrinsic reward.
//!
//! Modules:
//! - [`embedding`]: observations, random-feature encoder, trace files
//! - [`gmm`]: EM for full-covariance Gaussian mixtures
//! - [`pseudocount`]: global cluster table and intrinsic rewards
//! - [`envsim`]: deterministic maze simulator and visitation metric
//! - [`agent`]: random and tabular Q-learning agents, episode rollout
//! - [`harness`]: experiment configuration, runs and ablations

pub mod agent;
pub mod embedding;
pub mod envsim;
pub mod error;
pub mod gmm;
pub mod harness;
pub mod pseudocount;
pub mod rng;

pub use error::{Error, Result};
