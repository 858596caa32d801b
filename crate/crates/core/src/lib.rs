//! Translationese debiasing for word embeddings and sentence vectors.
//!
//! The pipeline trains skip-gram embeddings for an original and a
//! translated corpus, finds the words whose usage differs between them,
//! derives a "translationese" label for vectors, and removes that
//! information with iterative nullspace projection.

pub mod align;
pub mod cli;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod inlp;
pub mod joint;
pub mod labeled;
pub mod linalg;
pub mod manifest;
pub mod sgns;
pub mod space;
pub mod synth;
pub mod usage;

pub use error::{Error, Result};
