//! PCM16 WAV container I/O, channel mixdown and decimation resampling.
//!
//! Decimation is pure sample omission: `out[j] = in[floor(j * src / dst)]`.
//! No anti-alias filter is applied, so energy above the new Nyquist
//! frequency folds back into the output band.

use thiserror::Error;

const WAVE_FORMAT_PCM: u16 = 1;
const WAVE_FORMAT_EXTENSIBLE: u16 = 0xFFFE;
const HEADER_LEN: usize = 44;

/// Rate every downstream stage expects.
pub const TARGET_RATE_HZ: u32 = 16_000;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AudioError {
    #[error("malformed WAV container: {0}")]
    MalformedContainer(String),
    #[error("unsupported encoding: format tag {format}, {bits} bits per sample (only PCM16 is supported)")]
    UnsupportedEncoding { format: u16, bits: u16 },
    #[error("upsampling from {source_hz} Hz to {target_hz} Hz is not supported")]
    UpsampleUnsupported { source_hz: u32, target_hz: u32 },
    #[error("invalid buffer: {0}")]
    InvalidBuffer(String),
}

/// Interleaved sampled waveform with amplitudes in `[-1.0, 1.0]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioBuffer {
    samples: Vec<f32>,
    sample_rate_hz: u32,
    channels: u16,
}

impl AudioBuffer {
    pub fn new(samples: Vec<f32>, sample_rate_hz: u32, channels: u16) -> Result<Self, AudioError> {
        if sample_rate_hz == 0 {
            return Err(AudioError::InvalidBuffer("sample rate must be positive".into()));
        }
        if channels == 0 {
            return Err(AudioError::InvalidBuffer("channel count must be positive".into()));
        }
        if !samples.len().is_multiple_of(channels as usize) {
            return Err(AudioError::InvalidBuffer(format!(
                "{} samples is not a multiple of {} channels",
                samples.len(),
                channels
            )));
        }
        if let Some(bad) = samples.iter().find(|s| !(-1.0..=1.0).contains(*s)) {
            return Err(AudioError::InvalidBuffer(format!("sample {bad} outside [-1, 1]")));
        }
        Ok(Self { samples, sample_rate_hz, channels })
    }

    pub fn mono(samples: Vec<f32>, sample_rate_hz: u32) -> Result<Self, AudioError> {
        Self::new(samples, sample_rate_hz, 1)
    }

    pub fn samples(&self) -> &[f32] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f32> {
        self.samples
    }

    pub fn sample_rate_hz(&self) -> u32 {
        self.sample_rate_hz
    }

    pub fn channels(&self) -> u16 {
        self.channels
    }

    pub fn is_mono(&self) -> bool {
        self.channels == 1
    }

    /// Number of frames (samples per channel).
    pub fn frames(&self) -> usize {
        self.samples.len() / self.channels as usize
    }

    pub fn duration_secs(&self) -> f64 {
        self.frames() as f64 / self.sample_rate_hz as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Encoding {
    Pcm16,
}

/// Container metadata read from the `fmt ` and `data` chunks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WavInfo {
    pub encoding: Encoding,
    pub sample_rate_hz: u32,
    pub channels: u16,
    pub data_byte_length: u32,
}

fn malformed(msg: impl Into<String>) -> AudioError {
    AudioError::MalformedContainer(msg.into())
}

fn u16_at(bytes: &[u8], at: usize) -> u16 {
    u16::from_le_bytes([bytes[at], bytes[at + 1]])
}

fn u32_at(bytes: &[u8], at: usize) -> u32 {
    u32::from_le_bytes([bytes[at], bytes[at + 1], bytes[at + 2], bytes[at + 3]])
}

/// Walks the RIFF chunk list and returns the format metadata together with
/// the byte range of the `data` chunk payload.
pub fn read_wav_info(bytes: &[u8]) -> Result<(WavInfo, std::ops::Range<usize>), AudioError> {
    if bytes.len() < 12 {
        return Err(malformed(format!("{} bytes is too short for a RIFF header", bytes.len())));
    }
    if &bytes[0..4] != b"RIFF" {
        return Err(malformed("missing RIFF magic"));
    }
    if &bytes[8..12] != b"WAVE" {
        return Err(malformed("missing WAVE form type"));
    }

    let mut fmt: Option<(u16, u16, u32, u16)> = None;
    let mut pos = 12;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = u32_at(bytes, pos + 4) as usize;
        let body = pos + 8;
        match id {
            b"fmt " => {
                if size < 16 || body + 16 > bytes.len() {
                    return Err(malformed("truncated fmt chunk"));
                }
                let mut format = u16_at(bytes, body);
                let channels = u16_at(bytes, body + 2);
                let rate = u32_at(bytes, body + 4);
                let bits = u16_at(bytes, body + 14);
                if format == WAVE_FORMAT_EXTENSIBLE {
                    // The sub-format GUID starts with the plain format tag.
                    if size < 40 || body + 26 > bytes.len() {
                        return Err(malformed("truncated WAVE_FORMAT_EXTENSIBLE chunk"));
                    }
                    format = u16_at(bytes, body + 24);
                }
                fmt = Some((format, channels, rate, bits));
            }
            b"data" => {
                let (format, channels, rate, bits) =
                    fmt.ok_or_else(|| malformed("data chunk precedes fmt chunk"))?;
                if format != WAVE_FORMAT_PCM || bits != 16 {
                    return Err(AudioError::UnsupportedEncoding { format, bits });
                }
                if channels == 0 {
                    return Err(malformed("zero channels"));
                }
                if rate == 0 {
                    return Err(malformed("zero sample rate"));
                }
                if body + size > bytes.len() {
                    return Err(malformed(format!(
                        "data chunk declares {size} bytes but only {} remain",
                        bytes.len() - body
                    )));
                }
                if !size.is_multiple_of(2 * channels as usize) {
                    return Err(malformed(format!(
                        "data length {size} is not a whole number of {channels}-channel frames"
                    )));
                }
                let info = WavInfo {
                    encoding: Encoding::Pcm16,
                    sample_rate_hz: rate,
                    channels,
                    data_byte_length: size as u32,
                };
                return Ok((info, body..body + size));
            }
            _ => {}
        }
        // Chunks are word aligned.
        pos = body.saturating_add(size).saturating_add(size & 1);
    }
    Err(malformed(if fmt.is_some() { "no data chunk" } else { "no fmt chunk" }))
}

/// Decodes a PCM16 WAV file; each sample is scaled by `1/32768`.
pub fn parse_wav(bytes: &[u8]) -> Result<AudioBuffer, AudioError> {
    let (info, range) = read_wav_info(bytes)?;
    let samples = bytes[range]
        .chunks_exact(2)
        .map(|b| decode_sample(i16::from_le_bytes([b[0], b[1]])))
        .collect();
    Ok(AudioBuffer { samples, sample_rate_hz: info.sample_rate_hz, channels: info.channels })
}

pub fn decode_sample(value: i16) -> f32 {
    value as f32 / 32768.0
}

/// `round(sample * 32768)` clamped to the i16 range, the exact inverse of
/// [`decode_sample`] for every decodable value.
pub fn encode_sample(sample: f32) -> i16 {
    (sample as f64 * 32768.0).round().clamp(-32768.0, 32767.0) as i16
}

/// Serializes a buffer as a canonical 44-byte-header PCM16 WAV file.
pub fn write_wav(buffer: &AudioBuffer) -> Vec<u8> {
    let channels = buffer.channels;
    let rate = buffer.sample_rate_hz;
    let data_len = (buffer.samples.len() * 2) as u32;
    let block_align = channels * 2;

    let mut out = Vec::with_capacity(HEADER_LEN + data_len as usize);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + data_len).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&WAVE_FORMAT_PCM.to_le_bytes());
    out.extend_from_slice(&channels.to_le_bytes());
    out.extend_from_slice(&rate.to_le_bytes());
    out.extend_from_slice(&(rate * block_align as u32).to_le_bytes());
    out.extend_from_slice(&block_align.to_le_bytes());
    out.extend_from_slice(&16u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&data_len.to_le_bytes());
    for &s in &buffer.samples {
        out.extend_from_slice(&encode_sample(s).to_le_bytes());
    }
    out
}

/// Averages the channels of every frame into a mono buffer.
pub fn mixdown(buffer: &AudioBuffer) -> AudioBuffer {
    if buffer.is_mono() {
        return buffer.clone();
    }
    let ch = buffer.channels as usize;
    let samples = buffer
        .samples
        .chunks_exact(ch)
        .map(|frame| {
            let sum: f64 = frame.iter().map(|&s| s as f64).sum();
            (sum / ch as f64) as f32
        })
        .collect();
    AudioBuffer { samples, sample_rate_hz: buffer.sample_rate_hz, channels: 1 }
}

/// Output frame count of decimating `frames` frames from `source_hz` to `target_hz`.
pub fn decimated_len(frames: usize, source_hz: u32, target_hz: u32) -> usize {
    ((frames as u128 * target_hz as u128) / source_hz as u128) as usize
}

/// Source frame index kept for output frame `j`.
pub fn decimation_index(j: usize, source_hz: u32, target_hz: u32) -> usize {
    ((j as u128 * source_hz as u128) / target_hz as u128) as usize
}

/// Downsamples by omitting frames. Interleaved buffers keep whole frames,
/// so this commutes with [`mixdown`].
pub fn resample_decimate(buffer: &AudioBuffer, target_rate_hz: u32) -> Result<AudioBuffer, AudioError> {
    let source = buffer.sample_rate_hz;
    if target_rate_hz > source {
        return Err(AudioError::UpsampleUnsupported { source_hz: source, target_hz: target_rate_hz });
    }
    if target_rate_hz == 0 {
        return Err(AudioError::InvalidBuffer("target rate must be positive".into()));
    }
    if target_rate_hz == source {
        return Ok(buffer.clone());
    }
    let ch = buffer.channels as usize;
    let out_frames = decimated_len(buffer.frames(), source, target_rate_hz);
    let mut samples = Vec::with_capacity(out_frames * ch);
    for j in 0..out_frames {
        let src = decimation_index(j, source, target_rate_hz) * ch;
        samples.extend_from_slice(&buffer.samples[src..src + ch]);
    }
    Ok(AudioBuffer { samples, sample_rate_hz: target_rate_hz, channels: buffer.channels })
}

/// Mixdown followed by decimation to [`TARGET_RATE_HZ`].
pub fn to_16k_mono(buffer: &AudioBuffer) -> Result<AudioBuffer, AudioError> {
    resample_decimate(&mixdown(buffer), TARGET_RATE_HZ)
}
