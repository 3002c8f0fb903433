//! Incomplete multi-view clustering with dynamic graph learning and a masked
//! graph reconstruction loss.
//!
//! The pipeline fuses a missing-robust global neighbor graph from the raw
//! views, imputes primary features with a GCN embedding layer, extracts
//! high-level features with a graph self-attention encoder and clusters them
//! with a pseudo-label self-training head. See [`trainer::train`].

pub mod backprop;
pub mod checkpoint;
pub mod clustering;
pub mod config;
pub mod dataset;
pub mod experiment;
mod error;
pub mod graph;
pub mod losses;
pub mod metrics;
pub mod model;
pub mod synthetic;
pub mod trainer;

pub use config::{Components, RecLoss, TrainConfig};
pub use dataset::{load_dataset, normalize_views, save_dataset, simulate_missing, MultiViewDataset};
pub use error::{Error, Result};
pub use trainer::{train, train_with, TrainState};
