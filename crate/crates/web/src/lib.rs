//! WebAssembly bindings for the browser demo in `www/`.
//!
//! Each exported function returns a JSON string; the pure Rust functions
//! behind them are usable (and tested) natively.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use bandmatch::experiment::{Benchmark, BenchmarkConfig};
use bandmatch::{
    accuracy, adapt, compute_band_stats, divisors, log_mel, segment_sweep_dda, AudioClip, ChannelSpec, FeatureConfig,
    TrainConfig,
};
use serde::Serialize;
use wasm_bindgen::prelude::*;

/// A benchmark small enough to train in a browser tab in well under a second.
pub fn demo_config(seed: u64, max_offset: f64, max_gain: f64) -> BenchmarkConfig {
    let gain = max_gain.max(1.0);
    let device = ChannelSpec {
        gain_range: [1.0 / gain, gain],
        offset_range: [-max_offset.abs(), max_offset.abs()],
        noise_std: 0.05,
        smoothing: 1,
    };
    BenchmarkConfig {
        n_train_per_class: 20,
        n_source_test_per_class: 12,
        n_target_per_class: 12,
        devices: BTreeMap::from([("B".to_string(), device)]),
        train: TrainConfig {
            epochs: 150,
            ..TrainConfig::default()
        },
        seed,
        ..BenchmarkConfig::default()
    }
}

#[derive(Debug, Serialize)]
pub struct BandProfiles {
    pub source_means: Vec<f64>,
    pub target_means: Vec<f64>,
    pub adapted_means: Vec<f64>,
    pub source_stds: Vec<f64>,
    pub target_stds: Vec<f64>,
    pub adapted_stds: Vec<f64>,
    pub source_accuracy: f64,
    pub target_accuracy: f64,
    pub adapted_accuracy: f64,
}

/// Per-band statistics of source, device-B and adapted device-B data, plus accuracies.
pub fn band_profiles(seed: u64, max_offset: f64, max_gain: f64) -> bandmatch::Result<BandProfiles> {
    let bench = Benchmark::generate(&demo_config(seed, max_offset, max_gain))?;
    let model = bench.train_model()?;
    let source = bench.source_stats()?;
    let target = &bench.targets["B"];
    let adapted = adapt(target, &source)?;
    let t = compute_band_stats(target)?;
    let a = compute_band_stats(&adapted)?;
    Ok(BandProfiles {
        source_means: source.means().to_vec(),
        target_means: t.means().to_vec(),
        adapted_means: a.means().to_vec(),
        source_stds: source.stds().to_vec(),
        target_stds: t.stds().to_vec(),
        adapted_stds: a.stds().to_vec(),
        source_accuracy: accuracy(&model, &bench.source_test)?,
        target_accuracy: accuracy(&model, target)?,
        adapted_accuracy: accuracy(&model, &adapted)?,
    })
}

#[derive(Debug, Serialize)]
pub struct SegmentCurve {
    pub segment_lengths: Vec<usize>,
    pub mean_accuracy: Vec<f64>,
    pub std_accuracy: Vec<f64>,
    pub non_adapted: f64,
    pub fully_adapted: f64,
}

/// Mean accuracy against segment length for the device-B target set.
pub fn segment_curve(seed: u64, max_offset: f64, n_permutations: usize) -> bandmatch::Result<SegmentCurve> {
    let bench = Benchmark::generate(&demo_config(seed, max_offset, 1.5))?;
    let model = bench.train_model()?;
    let source = bench.source_stats()?;
    let target = &bench.targets["B"];
    let lengths = divisors(target.n());
    let result = segment_sweep_dda(&bench.targets, &lengths, n_permutations.max(1), seed, &source, &model)?;
    let summary = result.summary();
    Ok(SegmentCurve {
        segment_lengths: summary.iter().map(|s| s.segment_len).collect(),
        mean_accuracy: summary.iter().map(|s| s.mean_accuracy).collect(),
        std_accuracy: summary.iter().map(|s| s.std_accuracy).collect(),
        non_adapted: accuracy(&model, target)?,
        fully_adapted: accuracy(&model, &adapt(target, &source)?)?,
    })
}

#[derive(Debug, Serialize)]
pub struct LogMelImage {
    pub n_frames: usize,
    pub n_bands: usize,
    /// Frame-major log-Mel energies.
    pub values: Vec<f64>,
}

/// Log-Mel spectrogram of a linear chirp from `f0` to `f1` Hz at 16 kHz.
pub fn chirp_log_mel(f0: f64, f1: f64, seconds: f64, preset: &str) -> bandmatch::Result<LogMelImage> {
    let sample_rate = 16_000u32;
    let config = FeatureConfig::preset(preset, sample_rate)?;
    let n = (seconds.clamp(0.1, 5.0) * f64::from(sample_rate)) as usize;
    let rate = (f1 - f0) / (n as f64 / f64::from(sample_rate));
    let samples = (0..n)
        .map(|i| {
            let t = i as f64 / f64::from(sample_rate);
            0.5 * (2.0 * PI * (f0 * t + 0.5 * rate * t * t)).sin()
        })
        .collect();
    let spec = log_mel(&AudioClip::new(samples, sample_rate)?, &config)?;
    Ok(LogMelImage {
        n_frames: spec.n_frames(),
        n_bands: spec.n_bands(),
        values: spec.into_values(),
    })
}

fn to_js<T: Serialize>(value: bandmatch::Result<T>) -> Result<String, JsError> {
    let value = value.map_err(|e| JsError::new(&e.to_string()))?;
    serde_json::to_string(&value).map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen(js_name = bandProfiles)]
pub fn band_profiles_js(seed: u32, max_offset: f64, max_gain: f64) -> Result<String, JsError> {
    to_js(band_profiles(seed.into(), max_offset, max_gain))
}

#[wasm_bindgen(js_name = segmentCurve)]
pub fn segment_curve_js(seed: u32, max_offset: f64, n_permutations: u32) -> Result<String, JsError> {
    to_js(segment_curve(seed.into(), max_offset, n_permutations as usize))
}

#[wasm_bindgen(js_name = chirpLogMel)]
pub fn chirp_log_mel_js(f0: f64, f1: f64, seconds: f64, preset: &str) -> Result<String, JsError> {
    to_js(chirp_log_mel(f0, f1, seconds, preset))
}
