//! Peak-amplitude voice activity detection.
//!
//! The buffer is cut into fixed windows; a window is speech when the largest
//! absolute sample inside it exceeds the threshold. Runs of speech windows
//! become segments, each extended by a hangover of trailing windows.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio::AudioBuffer;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VadError {
    #[error("empty input buffer")]
    EmptyInput,
    #[error("voice activity detection needs mono audio, got {0} channels")]
    NotMono(u16),
    #[error("invalid VAD configuration: {0}")]
    InvalidConfig(String),
    #[error("segment [{start}, {end}) is out of range for {len} samples")]
    SegmentOutOfRange { start: usize, end: usize, len: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VadConfig {
    pub window_size_samples: usize,
    pub threshold: f32,
    pub hangover_windows: usize,
}

impl Default for VadConfig {
    /// 25 ms windows at 16 kHz.
    fn default() -> Self {
        Self { window_size_samples: 400, threshold: 0.05, hangover_windows: 4 }
    }
}

impl VadConfig {
    pub fn new(window_size_samples: usize, threshold: f32, hangover_windows: usize) -> Result<Self, VadError> {
        let cfg = Self { window_size_samples, threshold, hangover_windows };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), VadError> {
        if self.window_size_samples == 0 {
            return Err(VadError::InvalidConfig("window size must be at least 1 sample".into()));
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(VadError::InvalidConfig(format!("threshold {} not in (0, 1)", self.threshold)));
        }
        Ok(())
    }
}

/// Half-open `[start_sample, end_sample)` span of speech.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpeechSegment {
    #[serde(rename = "start")]
    pub start_sample: usize,
    #[serde(rename = "end")]
    pub end_sample: usize,
}

impl SpeechSegment {
    pub fn len(&self) -> usize {
        self.end_sample - self.start_sample
    }

    pub fn is_empty(&self) -> bool {
        self.end_sample <= self.start_sample
    }
}

fn require_mono(buffer: &AudioBuffer) -> Result<(), VadError> {
    if !buffer.is_mono() {
        return Err(VadError::NotMono(buffer.channels()));
    }
    if buffer.samples().is_empty() {
        return Err(VadError::EmptyInput);
    }
    Ok(())
}

/// Max `|sample|` for each window; the trailing partial window is included.
pub fn window_peaks(buffer: &AudioBuffer, window_size: usize) -> Result<Vec<f32>, VadError> {
    require_mono(buffer)?;
    if window_size == 0 {
        return Err(VadError::InvalidConfig("window size must be at least 1 sample".into()));
    }
    Ok(buffer
        .samples()
        .chunks(window_size)
        .map(|w| w.iter().fold(0.0f32, |m, s| m.max(s.abs())))
        .collect())
}

/// Per-window speech decision: `peak > threshold`.
pub fn window_decisions(buffer: &AudioBuffer, cfg: &VadConfig) -> Result<Vec<bool>, VadError> {
    cfg.validate()?;
    Ok(window_peaks(buffer, cfg.window_size_samples)?
        .into_iter()
        .map(|p| p > cfg.threshold)
        .collect())
}

pub fn detect_segments(buffer: &AudioBuffer, cfg: &VadConfig) -> Result<Vec<SpeechSegment>, VadError> {
    let speech = window_decisions(buffer, cfg)?;
    let n_windows = speech.len();

    // Runs of speech windows as [first, last+1) window ranges.
    let mut runs: Vec<(usize, usize)> = Vec::new();
    let mut w = 0;
    while w < n_windows {
        if speech[w] {
            let start = w;
            while w < n_windows && speech[w] {
                w += 1;
            }
            runs.push((start, w));
        } else {
            w += 1;
        }
    }

    // Hangover extension, then merge runs that now touch or overlap.
    let mut merged: Vec<(usize, usize)> = Vec::with_capacity(runs.len());
    for (start, end) in runs {
        let end = (end + cfg.hangover_windows).min(n_windows);
        match merged.last_mut() {
            Some(last) if start <= last.1 => last.1 = last.1.max(end),
            _ => merged.push((start, end)),
        }
    }

    let len = buffer.samples().len();
    let win = cfg.window_size_samples;
    Ok(merged
        .into_iter()
        .map(|(s, e)| SpeechSegment { start_sample: s * win, end_sample: (e * win).min(len) })
        .collect())
}

/// Concatenates the segment spans in list order.
pub fn gate_audio(buffer: &AudioBuffer, segments: &[SpeechSegment]) -> Result<AudioBuffer, VadError> {
    let samples = buffer.samples();
    let ch = buffer.channels() as usize;
    let frames = buffer.frames();
    let mut out = Vec::with_capacity(segments.iter().map(|s| s.len().min(frames)).sum::<usize>() * ch);
    for seg in segments {
        if seg.start_sample >= seg.end_sample || seg.end_sample > frames {
            return Err(VadError::SegmentOutOfRange {
                start: seg.start_sample,
                end: seg.end_sample,
                len: frames,
            });
        }
        out.extend_from_slice(&samples[seg.start_sample * ch..seg.end_sample * ch]);
    }
    Ok(AudioBuffer::new(out, buffer.sample_rate_hz(), buffer.channels())
        .expect("slices of a valid buffer form a valid buffer"))
}

pub fn total_speech_samples(segments: &[SpeechSegment]) -> usize {
    segments.iter().map(SpeechSegment::len).sum()
}
