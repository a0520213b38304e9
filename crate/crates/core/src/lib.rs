//! Batch analytics for dockless bike-sharing event feeds.
//!
//! The pipeline reconstructs unlock→lock trips from raw lock-state events,
//! measures per-parking-spot congestion density over configurable time bins,
//! identifies congested spots, and classifies them (K-means / Gaussian
//! mixture, elbow + silhouette model selection) into over-, semi-, and
//! light-crowded classes. Everything is deterministic for a given config,
//! seed, and set of input files, at any thread count.
//!
//! Modules follow the data flow: [`ingest`] parses the five input datasets,
//! [`geo`] supplies distances, polygon measures, and the grid index,
//! [`trips`] pairs and summarizes journeys, [`congestion`] bins flows and
//! scores spots, [`clustering`] builds features and fits the models, and
//! [`pipeline`] drives full runs with a reproducibility manifest. [`synth`]
//! generates seeded synthetic datasets with exact ground truth.

pub mod clustering;
pub mod config;
pub mod congestion;
pub mod error;
pub mod geo;
pub mod ingest;
pub mod manifest;
pub mod output;
pub mod pipeline;
pub mod synth;
pub mod trips;

pub use error::{Error, Result};
