//! Synthetic recording-device testbed.
//!
//! Source-domain "scenes" are log-Mel-like tensors built from a per-class
//! spectral prototype plus per-sample and per-frame variation. A recording
//! device is modeled as a per-band affine map on log energies,
//! `y = a_k * x + b_k + noise`: a linear frequency response is additive in the
//! log domain, and the gains cover level-dependent coloration.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dataset::FeatureDataset;
use crate::error::{Error, Result};
use crate::numeric::{derive_seed, rng, str_key};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_classes: usize,
    pub n_per_class: usize,
    pub n_frames: usize,
    pub n_bands: usize,
    /// Standard deviation of the class prototype band levels.
    pub class_separation: f64,
    /// Scale of the per-sample, per-band and per-frame perturbations.
    pub within_class_std: f64,
    /// Seeds the class prototypes; splits of one benchmark share it.
    pub prototype_seed: u64,
    /// Seeds the individual samples.
    pub seed: u64,
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_classes == 0 || self.n_per_class == 0 || self.n_frames == 0 || self.n_bands == 0 {
            return Err(Error::Config("synthetic dataset counts must all be at least 1".into()));
        }
        let ok = |v: f64| v.is_finite() && v >= 0.0;
        if !ok(self.class_separation) || !ok(self.within_class_std) {
            return Err(Error::Config("synthetic scales must be finite and non-negative".into()));
        }
        Ok(())
    }

    pub fn fingerprint(&self) -> String {
        synthetic_fingerprint(self.n_frames, self.n_bands)
    }
}

/// Feature fingerprint shared by every synthetic dataset of a given shape.
pub fn synthetic_fingerprint(n_frames: usize, n_bands: usize) -> String {
    format!("synthetic-v1-m{n_frames}-k{n_bands}")
}

fn normal(std: f64) -> Normal<f64> {
    Normal::new(0.0, std).expect("std is finite and non-negative")
}

/// Class prototypes, `n_classes x n_bands`, row-major.
pub fn class_prototypes(config: &SynthConfig) -> Vec<f64> {
    let mut r = rng(derive_seed(config.prototype_seed, &[str_key("prototypes")]));
    let dist = normal(config.class_separation);
    (0..config.n_classes * config.n_bands)
        .map(|_| dist.sample(&mut r))
        .collect()
}

/// Labeled source-domain dataset; sample `i` belongs to class `i % n_classes`.
pub fn generate_source_dataset(config: &SynthConfig) -> Result<FeatureDataset> {
    config.validate()?;
    let (m, k, c) = (config.n_frames, config.n_bands, config.n_classes);
    let n = c * config.n_per_class;
    let prototypes = class_prototypes(config);
    let spread = normal(config.within_class_std);

    let mut values = Vec::with_capacity(n * m * k);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let class = i % c;
        let mut r = rng(derive_seed(config.seed, &[i as u64]));
        let level = spread.sample(&mut r);
        let band_offsets: Vec<f64> = (0..k).map(|_| spread.sample(&mut r)).collect();
        let amplitudes: Vec<f64> = (0..k).map(|_| config.within_class_std * r.random::<f64>()).collect();
        let phases: Vec<f64> = (0..k).map(|_| 2.0 * PI * r.random::<f64>()).collect();
        for frame in 0..m {
            let t = 2.0 * PI * frame as f64 / m as f64;
            for band in 0..k {
                let tilt = -2.0 * band as f64 / k as f64;
                values.push(
                    tilt + prototypes[class * k + band]
                        + level
                        + band_offsets[band]
                        + amplitudes[band] * (t + phases[band]).sin()
                        + spread.sample(&mut r),
                );
            }
        }
        labels.push(class);
    }
    FeatureDataset::new(n, m, k, values, config.fingerprint())?.with_scene_labels(labels)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ChannelFile", into = "ChannelFile")]
pub struct DeviceChannel {
    gains: Vec<f64>,
    offsets: Vec<f64>,
    noise_std: f64,
}

#[derive(Serialize, Deserialize)]
struct ChannelFile {
    version: u32,
    #[serde(rename = "K")]
    k: usize,
    gains: Vec<f64>,
    offsets: Vec<f64>,
    noise_std: f64,
}

impl From<DeviceChannel> for ChannelFile {
    fn from(c: DeviceChannel) -> Self {
        ChannelFile {
            version: 1,
            k: c.gains.len(),
            gains: c.gains,
            offsets: c.offsets,
            noise_std: c.noise_std,
        }
    }
}

impl TryFrom<ChannelFile> for DeviceChannel {
    type Error = Error;

    fn try_from(f: ChannelFile) -> Result<Self> {
        if f.version != 1 || f.k != f.gains.len() {
            return Err(Error::Config("inconsistent device channel file".into()));
        }
        DeviceChannel::new(f.gains, f.offsets, f.noise_std)
    }
}

impl DeviceChannel {
    pub fn new(gains: Vec<f64>, offsets: Vec<f64>, noise_std: f64) -> Result<Self> {
        if gains.is_empty() || gains.len() != offsets.len() {
            return Err(Error::Dimension(format!(
                "{} gains and {} offsets",
                gains.len(),
                offsets.len()
            )));
        }
        if gains.iter().any(|&a| !(a > 0.0 && a.is_finite())) {
            return Err(Error::Config("channel gains must be positive and finite".into()));
        }
        if offsets.iter().any(|b| !b.is_finite()) || !(noise_std >= 0.0 && noise_std.is_finite()) {
            return Err(Error::Config(
                "channel offsets and noise level must be finite, noise >= 0".into(),
            ));
        }
        Ok(Self {
            gains,
            offsets,
            noise_std,
        })
    }

    pub fn identity(n_bands: usize) -> Self {
        Self::new(vec![1.0; n_bands], vec![0.0; n_bands], 0.0).expect("identity channel is valid")
    }

    pub fn k(&self) -> usize {
        self.gains.len()
    }

    pub fn gains(&self) -> &[f64] {
        &self.gains
    }

    pub fn offsets(&self) -> &[f64] {
        &self.offsets
    }

    pub fn noise_std(&self) -> f64 {
        self.noise_std
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("channel serializes")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let json = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&json).map_err(|e| Error::format(path, e.to_string()))
    }
}

/// Parameter ranges for [`sample_channel`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelSpec {
    pub gain_range: [f64; 2],
    pub offset_range: [f64; 2],
    pub noise_std: f64,
    /// Width of the moving average applied across bands (1 = none).
    #[serde(default = "one")]
    pub smoothing: usize,
}

fn one() -> usize {
    1
}

impl ChannelSpec {
    pub fn identity() -> Self {
        Self {
            gain_range: [1.0, 1.0],
            offset_range: [0.0, 0.0],
            noise_std: 0.0,
            smoothing: 1,
        }
    }
}

/// Draws per-band gains and offsets uniformly from the given ranges.
pub fn sample_channel(seed: u64, n_bands: usize, spec: &ChannelSpec) -> Result<DeviceChannel> {
    let [g_lo, g_hi] = spec.gain_range;
    let [o_lo, o_hi] = spec.offset_range;
    if !(g_lo > 0.0 && g_lo <= g_hi && g_hi.is_finite()) {
        return Err(Error::Config(format!("invalid gain range [{g_lo}, {g_hi}]")));
    }
    if !(o_lo <= o_hi && o_lo.is_finite() && o_hi.is_finite()) {
        return Err(Error::Config(format!("invalid offset range [{o_lo}, {o_hi}]")));
    }
    if n_bands == 0 || spec.smoothing == 0 {
        return Err(Error::Config(
            "need at least one band and a smoothing width >= 1".into(),
        ));
    }
    let mut r = rng(derive_seed(seed, &[str_key("channel")]));
    let gains: Vec<f64> = (0..n_bands).map(|_| r.random_range(g_lo..=g_hi)).collect();
    let offsets: Vec<f64> = (0..n_bands).map(|_| r.random_range(o_lo..=o_hi)).collect();
    DeviceChannel::new(
        moving_average(&gains, spec.smoothing),
        moving_average(&offsets, spec.smoothing),
        spec.noise_std,
    )
}

/// Centered moving average; windows are truncated at the edges.
fn moving_average(values: &[f64], width: usize) -> Vec<f64> {
    if width <= 1 {
        return values.to_vec();
    }
    let half = width / 2;
    (0..values.len())
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(values.len());
            values[lo..hi].iter().sum::<f64>() / (hi - lo) as f64
        })
        .collect()
}

/// `a_k * x + b_k + noise` for every entry; device labels are set to `device`.
pub fn apply_channel(x: &FeatureDataset, channel: &DeviceChannel, seed: u64, device: &str) -> Result<FeatureDataset> {
    if channel.k() != x.k() {
        return Err(Error::Dimension(format!(
            "channel has {} bands, data has {}",
            channel.k(),
            x.k()
        )));
    }
    let k = x.k();
    let stride = x.m() * k;
    let noise = normal(channel.noise_std);
    let mut values = Vec::with_capacity(x.values().len());
    for i in 0..x.n() {
        let mut r = rng(derive_seed(seed, &[i as u64]));
        for (j, &v) in x.sample(i).iter().enumerate() {
            let band = j % k;
            let mut y = channel.gains[band] * v + channel.offsets[band];
            if channel.noise_std > 0.0 {
                y += noise.sample(&mut r);
            }
            values.push(y);
        }
        debug_assert_eq!(values.len(), (i + 1) * stride);
    }
    Ok(x.with_values(values)?.with_device(device))
}
