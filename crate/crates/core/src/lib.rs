//! Embedding-space ensembles of contrastively trained encoders on the unit
//! hypersphere.
//!
//! The pipeline this crate implements: train several small MLP encoders with
//! an InfoNCE objective so that each maps inputs onto its own copy of
//! S^(D-1); learn orthogonal maps that align every member's sphere to an
//! anchor member without labels; aggregate the aligned embeddings per sample
//! with the Karcher mean; score single models and ensembles with
//! nearest-neighbor retrieval metrics. Synthetic worlds with known ground
//! truth validate exact recovery, and IDX image tooling supports a
//! desk-scale digits pipeline with rotation, color, and crop shifts.

pub mod align;
pub mod contrastive;
pub mod data;
pub mod embedding;
pub mod ensemble;
pub mod error;
pub mod io;
pub mod metrics;
pub mod parallel;
pub mod seeding;
pub mod sphere;
pub mod synthetic;

pub use error::{Error, Result};
