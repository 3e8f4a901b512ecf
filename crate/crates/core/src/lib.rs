//! Front-end pipeline for Hindi speech corpora: PCM16 WAV I/O and decimation,
//! peak-amplitude voice activity detection, number/abbreviation text
//! normalization, Devanagari grapheme-to-phoneme conversion, and a
//! seven-layer DNN with co-activation priors for HMM state alignment.

pub mod align;
pub mod audio;
pub mod g2p;
pub mod pipeline;
pub mod textnorm;
pub mod vad;

pub use audio::{AudioBuffer, AudioError};
pub use g2p::{G2pError, Phone, PhoneSeq};
pub use textnorm::TextNormError;
pub use vad::{SpeechSegment, VadConfig, VadError};
