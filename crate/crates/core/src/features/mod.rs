//! Log-Mel front-end: WAV decoding, framing, power spectra, Mel filterbank.
//!
//! Conventions (fixed so that every run and every implementation agree):
//! periodic Hamming window `0.54 - 0.46 cos(2 pi n / W)`, power spectrum
//! `|DFT|^2` of the zero-padded frame, HTK Mel scale with peak-normalized
//! triangular filters, natural log with an energy floor.

mod dsp;
mod file;
mod wav;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub use dsp::{frame_and_window, hamming, hz_to_mel, mel_filterbank, mel_to_hz, power_spectrum, PowerSpectrum};
pub use file::{
    decode_features, encode_features, read_feature_file, read_sidecar, sidecar_path, write_feature_file,
    write_feature_file_with_header, FeatureHeader, FEATURE_MAGIC,
};
pub use wav::{load_wav, load_wav_from_reader};

/// Default energy floor applied before the logarithm.
pub const DEFAULT_LOG_FLOOR: f64 = 1e-10;

/// Default sample rate of the named presets.
pub const DEFAULT_SAMPLE_RATE: u32 = 44_100;

#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    samples: Vec<f64>,
    sample_rate: u32,
}

impl AudioClip {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Config("audio clip has no samples".into()));
        }
        if sample_rate == 0 {
            return Err(Error::Config("sample rate must be positive".into()));
        }
        if samples.iter().any(|s| !s.is_finite()) {
            return Err(Error::NonFinite("audio samples".into()));
        }
        Ok(Self { samples, sample_rate })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Returns a copy with every sample multiplied by `gain`.
    pub fn scaled(&self, gain: f64) -> Result<Self> {
        Self::new(self.samples.iter().map(|s| s * gain).collect(), self.sample_rate)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureConfig {
    pub sample_rate: u32,
    pub n_mels: usize,
    pub win_length_samples: usize,
    pub hop_samples: usize,
    pub fft_size: usize,
    pub fmin_hz: f64,
    pub fmax_hz: f64,
    pub log_floor: f64,
}

impl FeatureConfig {
    /// 40 Mel bands, 40 ms Hamming window, 50% overlap.
    pub fn dcase40(sample_rate: u32) -> Self {
        let win = (0.040 * f64::from(sample_rate)).round() as usize;
        Self::with_window(sample_rate, 40, win)
    }

    /// 64 Mel bands, 2048-sample Hamming window, 50% overlap.
    pub fn kaggle64(sample_rate: u32) -> Self {
        Self::with_window(sample_rate, 64, 2048)
    }

    pub fn preset(name: &str, sample_rate: u32) -> Result<Self> {
        match name {
            "dcase40" => Ok(Self::dcase40(sample_rate)),
            "kaggle64" => Ok(Self::kaggle64(sample_rate)),
            other => Err(Error::Config(format!("unknown feature preset '{other}'"))),
        }
    }

    fn with_window(sample_rate: u32, n_mels: usize, win: usize) -> Self {
        Self {
            sample_rate,
            n_mels,
            win_length_samples: win,
            hop_samples: win / 2,
            fft_size: win.next_power_of_two(),
            fmin_hz: 0.0,
            fmax_hz: f64::from(sample_rate) / 2.0,
            log_floor: DEFAULT_LOG_FLOOR,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.sample_rate == 0 {
            return fail("sample_rate must be positive".into());
        }
        if self.n_mels == 0 {
            return fail("n_mels must be at least 1".into());
        }
        if self.win_length_samples == 0 || self.hop_samples == 0 {
            return fail("window and hop lengths must be positive".into());
        }
        if self.fft_size < self.win_length_samples {
            return fail(format!(
                "fft_size {} is smaller than the window length {}",
                self.fft_size, self.win_length_samples
            ));
        }
        let nyquist = f64::from(self.sample_rate) / 2.0;
        if !(self.fmin_hz >= 0.0 && self.fmin_hz < self.fmax_hz && self.fmax_hz <= nyquist) {
            return fail(format!(
                "need 0 <= fmin ({}) < fmax ({}) <= {nyquist}",
                self.fmin_hz, self.fmax_hz
            ));
        }
        if !(self.log_floor > 0.0 && self.log_floor.is_finite()) {
            return fail("log_floor must be positive and finite".into());
        }
        Ok(())
    }

    /// Short content hash identifying this feature representation.
    pub fn fingerprint(&self) -> String {
        let canonical = format!(
            "logmel-v1;sr={};mels={};win={};hop={};fft={};fmin={:016x};fmax={:016x};floor={:016x}",
            self.sample_rate,
            self.n_mels,
            self.win_length_samples,
            self.hop_samples,
            self.fft_size,
            self.fmin_hz.to_bits(),
            self.fmax_hz.to_bits(),
            self.log_floor.to_bits(),
        );
        let digest = Sha256::digest(canonical.as_bytes());
        format!("logmel-{}", &hex::encode(digest)[..16])
    }
}

/// An M x K matrix of log-Mel energies, stored row-major (frame-major).
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    values: Vec<f64>,
    n_frames: usize,
    n_bands: usize,
}

impl Spectrogram {
    pub fn new(values: Vec<f64>, n_frames: usize, n_bands: usize) -> Result<Self> {
        if n_frames == 0 || n_bands == 0 {
            return Err(Error::Dimension("spectrogram needs M >= 1 and K >= 1".into()));
        }
        if values.len() != n_frames * n_bands {
            return Err(Error::Dimension(format!(
                "{} values cannot form a {n_frames}x{n_bands} spectrogram",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("spectrogram".into()));
        }
        Ok(Self {
            values,
            n_frames,
            n_bands,
        })
    }

    pub fn n_frames(&self) -> usize {
        self.n_frames
    }

    pub fn n_bands(&self) -> usize {
        self.n_bands
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn get(&self, frame: usize, band: usize) -> f64 {
        self.values[frame * self.n_bands + band]
    }

    pub fn frame(&self, frame: usize) -> &[f64] {
        &self.values[frame * self.n_bands..(frame + 1) * self.n_bands]
    }
}

/// Log-Mel spectrogram of `clip`: `ln(max(P * W^T, floor))`.
pub fn log_mel(clip: &AudioClip, config: &FeatureConfig) -> Result<Spectrogram> {
    config.validate()?;
    if clip.sample_rate() != config.sample_rate {
        return Err(Error::SampleRateMismatch {
            expected: config.sample_rate,
            actual: clip.sample_rate(),
        });
    }
    let frames = frame_and_window(clip, config)?;
    let filterbank = mel_filterbank(config)?;
    let n_bins = config.fft_size / 2 + 1;
    let k = config.n_mels;
    let mut spectrum = PowerSpectrum::new(config.fft_size);
    let mut values = Vec::with_capacity(frames.len() * k);
    for frame in &frames {
        let power = spectrum.compute(frame)?;
        for row in filterbank.chunks_exact(n_bins) {
            let energy: f64 = row.iter().zip(&power).map(|(w, p)| w * p).sum();
            values.push(energy.max(config.log_floor).ln());
        }
    }
    Spectrogram::new(values, frames.len(), k)
}
