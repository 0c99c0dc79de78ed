//! Privacy-preserving average consensus.
//!
//! Each node releases `x⁺(k) = x(k) + θ(k)` and the network mixes the
//! released values, `x(k+1) = W x⁺(k)`, with `W` doubly stochastic. Noise
//! that keeps ε-DP cannot vanish in aggregate, so the average drifts; noise
//! whose cumulative effect vanishes restores exact consensus but gives up
//! ε-DP. The [`experiment`] module measures both sides.

mod experiment;
mod graph;
mod privacy;
mod run;
mod schedule;
mod weights;

use thiserror::Error;

pub use experiment::{
    impossibility_experiment, ExperimentConfig, ExperimentReport, ExperimentRow, GraphSpec, SimulateConfig,
    SimulateSummary, VANISHING_NOISE_FLAG, VANISHING_NOISE_THRESHOLD,
};
pub use graph::{Graph, GraphKind};
pub use privacy::{
    first_release_privacy, sequence_privacy_estimate, ReleaseVerdict, SequenceConfig, SequenceEstimate, StepEstimate,
};
pub use run::{run, ConsensusRun};
pub use schedule::NoiseSchedule;
pub use weights::WeightMatrix;

#[derive(Debug, Error)]
pub enum ConsensusError {
    #[error("graph needs at least 3 nodes, got {0}")]
    TooFewNodes(usize),
    #[error("graph is disconnected: {components} connected components")]
    Disconnected { components: usize },
    #[error("edge list line {line}: {reason}")]
    InvalidEdge { line: usize, reason: String },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("invalid weight matrix: {0}")]
    InvalidWeights(String),
    #[error("invalid noise schedule: {0}")]
    InvalidSchedule(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Analyzer(#[from] crate::analyzer::AnalyzerError),
    #[error(transparent)]
    Oracle(#[from] crate::oracle::OracleError),
}
