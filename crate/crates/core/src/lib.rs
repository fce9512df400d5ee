//! Contrastive subspace clustering for data with missing entries.
//!
//! Pipeline: [`datagen`] builds or loads a partially observed matrix,
//! [`augment`] splits each sample's observed entries into two disjoint views,
//! [`contrastive`] trains a ReLU backbone with an NT-Xent objective on those
//! views, and [`cluster`] runs sparse subspace clustering on the backbone
//! embeddings. [`mae`] and [`cluster::zf_ssc`] are the baselines, [`eval`]
//! scores and aggregates results, and [`cli`] drives experiment sweeps.

pub mod augment;
pub mod checkpoint;
pub mod cli;
pub mod cluster;
pub mod contrastive;
pub mod datagen;
mod error;
pub mod eval;
pub mod mae;
pub mod numerics;

pub use error::{Error, Result};
