//! Frame features, the seven-layer alignment network, co-activation priors
//! and HMM forced alignment.

pub mod coact;
pub mod features;
pub mod hmm;
pub mod net;
pub mod train;

use thiserror::Error;

pub use coact::{coact_penalty, coact_stats, CoactPrior, LayerPrior};
pub use features::{extract_features, FeatureConfig, FeatureExtractor, FeatureMatrix};
pub use hmm::{viterbi_align, viterbi_align_chain, viterbi_align_log, AlignmentResult, HmmTopology};
pub use net::{backward, loss, Forward, Gradients, LossBreakdown, Model, NetSpec, NetState};
pub use train::{adapt, train, AdaptParams, AdaptReport, Dataset, EpochMetrics, LayerSchedule, TrainParams};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("{samples} samples is shorter than one {window}-sample window")]
    TooShort { samples: usize, window: usize },
    #[error("{frames} frames cannot cover a chain of {states} states")]
    TooFewFrames { frames: usize, states: usize },
    #[error("phone {0:?} is not in the topology")]
    UnknownPhone(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("model file: {0}")]
    Model(String),
}
