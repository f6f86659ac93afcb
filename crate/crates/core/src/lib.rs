//! Multi-label ultrasound-plane classification with label-graph classifiers
//! and cluster-relabeled contrastive learning, on a synthetic benchmark.

pub mod activation;
pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod cooccur;
pub mod corpus;
pub mod encoder;
pub mod error;
pub mod export;
pub mod glove;
pub mod graph;
pub mod losses;
pub mod metrics;
pub mod model;
pub mod optim;
pub mod relabel;
pub mod seed;
pub mod trainer;

#[cfg(test)]
mod testutil;

pub use error::{CheckpointError, Error, Result};
