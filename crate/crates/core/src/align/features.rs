//! Log mel-spaced triangular band energies.

use std::sync::Arc;

use nalgebra::DMatrix;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use super::NetError;
use crate::audio::AudioBuffer;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureConfig {
    pub sample_rate_hz: u32,
    pub window_samples: usize,
    pub shift_samples: usize,
    pub bands: usize,
    /// Energies are clamped to this before the log.
    pub log_floor: f64,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self { sample_rate_hz: 16_000, window_samples: 400, shift_samples: 160, bands: 24, log_floor: 1e-10 }
    }
}

impl FeatureConfig {
    /// `1 + floor((n - window) / shift)`, or 0 when fewer than `window` samples.
    pub fn frame_count(&self, n_samples: usize) -> usize {
        if n_samples < self.window_samples {
            0
        } else {
            1 + (n_samples - self.window_samples) / self.shift_samples
        }
    }

    fn validate(&self) -> Result<(), NetError> {
        if self.window_samples < 2 || self.shift_samples == 0 || self.bands == 0 || self.sample_rate_hz == 0 {
            return Err(NetError::InvalidConfig(format!("bad feature configuration {self:?}")));
        }
        if !(self.log_floor > 0.0) {
            return Err(NetError::InvalidConfig("log floor must be positive".into()));
        }
        Ok(())
    }
}

/// `T x B` log band energies, one row per frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub frames: DMatrix<f64>,
    pub frame_shift_samples: usize,
    pub window_samples: usize,
}

impl FeatureMatrix {
    pub fn num_frames(&self) -> usize {
        self.frames.nrows()
    }
}

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular filters with centres equally spaced on the mel scale between
/// 0 Hz and Nyquist. Returns a `bands x (window/2 + 1)` weight matrix over
/// DFT bins.
pub fn mel_filterbank(cfg: &FeatureConfig) -> DMatrix<f64> {
    let n_bins = cfg.window_samples / 2 + 1;
    let nyquist = cfg.sample_rate_hz as f64 / 2.0;
    let mel_max = hz_to_mel(nyquist);
    let edges: Vec<f64> = (0..cfg.bands + 2)
        .map(|i| mel_to_hz(mel_max * i as f64 / (cfg.bands + 1) as f64))
        .collect();
    let bin_hz = cfg.sample_rate_hz as f64 / cfg.window_samples as f64;
    DMatrix::from_fn(cfg.bands, n_bins, |b, k| {
        let f = k as f64 * bin_hz;
        let (lo, mid, hi) = (edges[b], edges[b + 1], edges[b + 2]);
        if f <= lo || f >= hi {
            0.0
        } else if f <= mid {
            (f - lo) / (mid - lo)
        } else {
            (hi - f) / (hi - mid)
        }
    })
}

pub fn hamming(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.54 - 0.46 * (2.0 * std::f64::consts::PI * i as f64 / (n - 1) as f64).cos())
        .collect()
}

/// Reusable extractor holding the FFT plan, window and filterbank.
pub struct FeatureExtractor {
    cfg: FeatureConfig,
    fft: Arc<dyn Fft<f64>>,
    window: Vec<f64>,
    filterbank: DMatrix<f64>,
}

impl FeatureExtractor {
    pub fn new(cfg: FeatureConfig) -> Result<Self, NetError> {
        cfg.validate()?;
        let fft = FftPlanner::new().plan_fft_forward(cfg.window_samples);
        Ok(Self { cfg, fft, window: hamming(cfg.window_samples), filterbank: mel_filterbank(&cfg) })
    }

    pub fn config(&self) -> &FeatureConfig {
        &self.cfg
    }

    pub fn filterbank(&self) -> &DMatrix<f64> {
        &self.filterbank
    }

    /// `|X_k|^2` for `k = 0..=window/2` of a Hamming-windowed frame.
    pub fn power_spectrum(&self, frame: &[f32]) -> Vec<f64> {
        let mut buf: Vec<Complex<f64>> = frame
            .iter()
            .zip(&self.window)
            .map(|(&s, &w)| Complex::new(s as f64 * w, 0.0))
            .collect();
        self.fft.process(&mut buf);
        buf[..self.cfg.window_samples / 2 + 1].iter().map(|c| c.norm_sqr()).collect()
    }

    pub fn extract(&self, buffer: &AudioBuffer) -> Result<FeatureMatrix, NetError> {
        if !buffer.is_mono() {
            return Err(NetError::InvalidInput(format!("features need mono audio, got {} channels", buffer.channels())));
        }
        if buffer.sample_rate_hz() != self.cfg.sample_rate_hz {
            return Err(NetError::InvalidInput(format!(
                "features configured for {} Hz, got {} Hz",
                self.cfg.sample_rate_hz,
                buffer.sample_rate_hz()
            )));
        }
        let samples = buffer.samples();
        if samples.len() < self.cfg.window_samples {
            return Err(NetError::TooShort { samples: samples.len(), window: self.cfg.window_samples });
        }
        let t = self.cfg.frame_count(samples.len());
        let mut frames = DMatrix::zeros(t, self.cfg.bands);
        for i in 0..t {
            let start = i * self.cfg.shift_samples;
            let power = self.power_spectrum(&samples[start..start + self.cfg.window_samples]);
            for b in 0..self.cfg.bands {
                let energy: f64 = self.filterbank.row(b).iter().zip(&power).map(|(w, p)| w * p).sum();
                frames[(i, b)] = energy.max(self.cfg.log_floor).ln();
            }
        }
        Ok(FeatureMatrix { frames, frame_shift_samples: self.cfg.shift_samples, window_samples: self.cfg.window_samples })
    }
}

pub fn extract_features(buffer: &AudioBuffer, cfg: &FeatureConfig) -> Result<FeatureMatrix, NetError> {
    FeatureExtractor::new(*cfg)?.extract(buffer)
}
