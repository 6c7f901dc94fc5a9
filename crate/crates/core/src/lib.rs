//! Fake professional-profile detection.
//!
//! The pipeline turns structured profiles into Section Tag Embeddings (the
//! mean over sections of section-text embedding minus tag embedding), fuses
//! them with 17 structural features, and trains boosted-tree and baseline
//! classifiers. The [`scenario`] module runs the attack / adversarial
//! retraining matrix on top of seeded synthetic corpora from [`synthgen`].

pub mod corpus;
pub mod embedding;
pub mod error;
pub mod eval;
pub mod featurize;
pub mod learn;
pub mod scenario;
pub mod seed;
pub mod synthgen;
pub mod tune;

pub use error::{Error, Result};
