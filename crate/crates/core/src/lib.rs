//! Disparity analysis of membership-inference attacks over raw score
//! matrices: FPR-calibrated metrics, instance/method-level set algebra
//! (consistency, coverage, stability), prediction-level ensembles, a
//! deterministic synthetic experiment simulator, and cost-performance
//! analysis.

pub mod analysis;
pub mod disparity;
pub mod ensemble;
pub mod error;
pub mod metrics;
pub mod model;
pub mod par;
pub mod rng;
pub mod scorers;
pub mod simulator;

pub use error::{Error, Result};
pub use model::{
    validate_bundle, ExperimentBundle, GroundTruth, PredictionMatrix, SampleSet, ScoreMatrix,
    Signal, ValidationReport,
};
