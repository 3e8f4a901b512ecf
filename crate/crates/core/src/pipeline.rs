//! End-to-end helpers shared by the CLI and the server: recognition of raw
//! WAV bytes and forced alignment of an utterance.

use std::collections::HashMap;

use serde::Serialize;
use thiserror::Error;

use crate::align::features::FeatureExtractor;
use crate::align::hmm::{viterbi_align, HmmTopology};
use crate::align::{FeatureConfig, Model, NetError};
use crate::audio::{parse_wav, to_16k_mono, AudioBuffer, AudioError};
use crate::g2p::{G2pError, G2pRules, PhoneSeq};
use crate::vad::{detect_segments, gate_audio, SpeechSegment, VadConfig, VadError};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Audio(#[from] AudioError),
    #[error(transparent)]
    Vad(#[from] VadError),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    G2p(#[from] G2pError),
    #[error("model has no HMM topology (phone list)")]
    NoTopology,
}

/// A model bundled with its topology and feature extractor.
pub struct Recognizer {
    model: Model,
    topology: HmmTopology,
    extractor: FeatureExtractor,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Recognition {
    /// Speech spans in samples of the 16 kHz mono signal.
    pub segments: Vec<SpeechSegment>,
    /// Arg-max state per frame of the gated audio.
    pub state_sequence: Vec<usize>,
    pub phone_sequence: Vec<String>,
}

impl Recognizer {
    pub fn new(model: Model) -> Result<Self, PipelineError> {
        let phones = model.phones.clone().ok_or(PipelineError::NoTopology)?;
        let topology = HmmTopology::new(phones)?;
        let cfg = model.features.unwrap_or(FeatureConfig { bands: model.net.spec.input_dim(), ..Default::default() });
        let extractor = FeatureExtractor::new(cfg)?;
        Ok(Self { model, topology, extractor })
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn topology(&self) -> &HmmTopology {
        &self.topology
    }

    /// parse, mixdown, decimate to 16 kHz, VAD gate, features, forward,
    /// per-frame arg-max, collapse to phones.
    pub fn recognize_wav(&self, wav: &[u8], vad: &VadConfig) -> Result<Recognition, PipelineError> {
        let audio = to_16k_mono(&parse_wav(wav)?)?;
        self.recognize(&audio, vad)
    }

    pub fn recognize(&self, audio: &AudioBuffer, vad: &VadConfig) -> Result<Recognition, PipelineError> {
        let empty = Recognition { segments: Vec::new(), state_sequence: Vec::new(), phone_sequence: Vec::new() };
        if audio.samples().is_empty() {
            return Ok(empty);
        }
        let segments = detect_segments(audio, vad)?;
        let gated = gate_audio(audio, &segments)?;
        if gated.samples().len() < self.extractor.config().window_samples {
            return Ok(Recognition { segments, ..empty });
        }
        let feats = self.extractor.extract(&gated)?;
        let states = self.model.net.forward(&feats.frames)?.argmax();
        let phone_sequence = self.topology.collapse_to_phones(&states);
        Ok(Recognition { segments, state_sequence: states, phone_sequence })
    }

    pub fn posteriors(&self, audio: &AudioBuffer) -> Result<nalgebra::DMatrix<f64>, PipelineError> {
        let feats = self.extractor.extract(audio)?;
        Ok(self.model.net.posteriors(&feats.frames)?)
    }

    /// Forced alignment of `words` against `audio` (16 kHz mono). Words
    /// missing from `lexicon` fall back to rule-based G2P.
    pub fn align_words(
        &self,
        audio: &AudioBuffer,
        words: &[&str],
        lexicon: &HashMap<String, PhoneSeq>,
        rules: &G2pRules,
        with_silence: bool,
    ) -> Result<UtteranceAlignment, PipelineError> {
        let mut phones: Vec<String> = Vec::new();
        for w in words {
            let seq = match lexicon.get(*w) {
                Some(p) => p.clone(),
                None => rules.g2p(w)?,
            };
            phones.extend(seq.iter().map(|p| p.as_str().to_string()));
        }
        let post = self.posteriors(audio)?;
        let result = viterbi_align(&post, &phones, &self.topology, with_silence)?;
        let shift = self.extractor.config().shift_samples;
        let mut spans: Vec<StateSpan> = Vec::new();
        for (t, (&state, &pos)) in result.state_ids.iter().zip(&result.chain_positions).enumerate() {
            match spans.last_mut() {
                Some(last) if last.chain_position == pos => last.end_frame = t + 1,
                _ => spans.push(StateSpan {
                    chain_position: pos,
                    state,
                    label: self.topology.state_label(state),
                    start_frame: t,
                    end_frame: t + 1,
                }),
            }
        }
        Ok(UtteranceAlignment {
            phones,
            log_score: result.log_score,
            frame_shift_samples: shift,
            state_ids: result.state_ids,
            spans,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StateSpan {
    pub chain_position: usize,
    pub state: usize,
    pub label: String,
    pub start_frame: usize,
    pub end_frame: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UtteranceAlignment {
    pub phones: Vec<String>,
    pub log_score: f64,
    pub frame_shift_samples: usize,
    pub state_ids: Vec<usize>,
    pub spans: Vec<StateSpan>,
}
