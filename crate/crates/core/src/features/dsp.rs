use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use super::{AudioClip, FeatureConfig};
use crate::error::{Error, Result};

/// Periodic Hamming window of length `len`.
pub fn hamming(len: usize) -> Vec<f64> {
    (0..len)
        .map(|n| 0.54 - 0.46 * (2.0 * PI * n as f64 / len as f64).cos())
        .collect()
}

/// Splits `clip` into `floor((len - W) / H) + 1` Hamming-windowed frames.
pub fn frame_and_window(clip: &AudioClip, config: &FeatureConfig) -> Result<Vec<Vec<f64>>> {
    let win = config.win_length_samples;
    let hop = config.hop_samples;
    if win == 0 || hop == 0 {
        return Err(Error::Config("window and hop lengths must be positive".into()));
    }
    let samples = clip.samples();
    if samples.len() < win {
        return Err(Error::ClipTooShort {
            len: samples.len(),
            window: win,
        });
    }
    let window = hamming(win);
    let n_frames = (samples.len() - win) / hop + 1;
    Ok((0..n_frames)
        .map(|m| {
            samples[m * hop..m * hop + win]
                .iter()
                .zip(&window)
                .map(|(s, w)| s * w)
                .collect()
        })
        .collect())
}

/// Reusable power-spectrum evaluator for a fixed DFT length.
pub struct PowerSpectrum {
    fft_size: usize,
    fft: Arc<dyn Fft<f64>>,
    buffer: Vec<Complex<f64>>,
    scratch: Vec<Complex<f64>>,
}

impl PowerSpectrum {
    pub fn new(fft_size: usize) -> Self {
        let fft = FftPlanner::new().plan_fft_forward(fft_size);
        let scratch = vec![Complex::default(); fft.get_inplace_scratch_len()];
        Self {
            fft_size,
            fft,
            buffer: vec![Complex::default(); fft_size],
            scratch,
        }
    }

    /// `|DFT_b|^2` of the zero-padded frame for bins `0..=fft_size/2`.
    pub fn compute(&mut self, frame: &[f64]) -> Result<Vec<f64>> {
        if frame.len() > self.fft_size {
            return Err(Error::Dimension(format!(
                "frame of {} samples exceeds fft_size {}",
                frame.len(),
                self.fft_size
            )));
        }
        for (slot, i) in self.buffer.iter_mut().zip(0..) {
            *slot = Complex::new(frame.get(i).copied().unwrap_or(0.0), 0.0);
        }
        self.fft.process_with_scratch(&mut self.buffer, &mut self.scratch);
        Ok(self.buffer[..=self.fft_size / 2].iter().map(|c| c.norm_sqr()).collect())
    }
}

pub fn power_spectrum(frame: &[f64], fft_size: usize) -> Result<Vec<f64>> {
    if fft_size == 0 {
        return Err(Error::Config("fft_size must be positive".into()));
    }
    PowerSpectrum::new(fft_size).compute(frame)
}

/// HTK Mel scale.
pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// `n_mels x (fft_size/2 + 1)` row-major matrix of triangular filters,
/// each scaled so its largest weight is exactly 1.
pub fn mel_filterbank(config: &FeatureConfig) -> Result<Vec<f64>> {
    config.validate()?;
    let n_bins = config.fft_size / 2 + 1;
    let bin_hz = f64::from(config.sample_rate) / config.fft_size as f64;
    let mel_lo = hz_to_mel(config.fmin_hz);
    let mel_hi = hz_to_mel(config.fmax_hz);
    let edges: Vec<f64> = (0..config.n_mels + 2)
        .map(|i| mel_to_hz(mel_lo + (mel_hi - mel_lo) * i as f64 / (config.n_mels + 1) as f64))
        .collect();

    let mut weights = vec![0.0; config.n_mels * n_bins];
    for (k, row) in weights.chunks_exact_mut(n_bins).enumerate() {
        let (lo, center, hi) = (edges[k], edges[k + 1], edges[k + 2]);
        for (b, w) in row.iter_mut().enumerate() {
            let f = b as f64 * bin_hz;
            *w = if f > lo && f <= center {
                (f - lo) / (center - lo)
            } else if f > center && f < hi {
                (hi - f) / (hi - center)
            } else {
                0.0
            };
        }
        let peak = row.iter().copied().fold(0.0, f64::max);
        if peak <= 0.0 {
            return Err(Error::Config(format!(
                "{} Mel bands are too many for a {}-point DFT: band {k} covers no frequency bin",
                config.n_mels, config.fft_size
            )));
        }
        row.iter_mut().for_each(|w| *w /= peak);
    }
    Ok(weights)
}
