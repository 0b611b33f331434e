//! Weld-quality monitoring from arc-voltage time series.
//!
//! The pipeline cuts a voltage series into fixed-length segments, smooths
//! and downsamples each one into a feature vector, clusters the vectors
//! with a self-organizing map, and labels the flattest clusters as
//! desirable. The labeled database ranks welders and trains two
//! classifiers (a sigmoid MLP and a Gaussian RBF network) that can then
//! flag error segments in a live sample stream.

pub mod dataset;
pub mod error;
pub mod eval;
pub mod kmeans;
pub mod mlp;
pub mod normalize;
pub mod persist;
pub mod ranking;
pub mod rbf;
pub mod signal;
pub mod som;
pub mod stream;
pub mod synth;

pub use dataset::{LabeledDataset, DESIRABLE, UNDESIRABLE};
pub use error::{Result, WeldError};
pub use signal::{FeatureVector, PreprocessConfig, Provenance, RawSeries, SourceId};
