//! Per-band moment matching.
//!
//! Every Mel band `k` of a dataset is summarized by the sample mean and the
//! Bessel-corrected standard deviation of all `N * M` values it takes across
//! every frame of every spectrogram. A target dataset is adapted to a source
//! domain by standardizing each band with its own statistics and rescaling it
//! with the source statistics:
//!
//! ```text
//! Z[n,m,k]    = (X[n,m,k] - mu_T[k]) / sigma_T[k]
//! Xbar[n,m,k] = sigma_S[k] * Z[n,m,k] + mu_S[k]
//! ```
//!
//! so the adapted data carries exactly the source band means and variances.
//! Reductions run band by band in a fixed (sample, frame) order with
//! compensated accumulation, so results are bit-reproducible.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::FeatureDataset;
use crate::error::{Error, Result};
use crate::numeric::CompensatedSum;

/// Lower clamp on the standardization divisor, for bands with (near) zero spread.
pub const SIGMA_MIN: f64 = 1e-6;

const STATS_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "StatsFile", into = "StatsFile")]
pub struct BandStats {
    means: Vec<f64>,
    stds: Vec<f64>,
    n_frames: usize,
    config_fingerprint: String,
}

#[derive(Serialize, Deserialize)]
struct StatsFile {
    version: u32,
    #[serde(rename = "K")]
    k: usize,
    means: Vec<f64>,
    stds: Vec<f64>,
    n_frames: usize,
    config_fingerprint: String,
}

impl From<BandStats> for StatsFile {
    fn from(s: BandStats) -> Self {
        StatsFile {
            version: STATS_VERSION,
            k: s.means.len(),
            means: s.means,
            stds: s.stds,
            n_frames: s.n_frames,
            config_fingerprint: s.config_fingerprint,
        }
    }
}

impl TryFrom<StatsFile> for BandStats {
    type Error = Error;

    fn try_from(f: StatsFile) -> Result<Self> {
        if f.version != STATS_VERSION {
            return Err(Error::Config(format!(
                "unsupported band statistics version {}",
                f.version
            )));
        }
        if f.k != f.means.len() {
            return Err(Error::Dimension(format!("K = {} but {} means", f.k, f.means.len())));
        }
        BandStats::new(f.means, f.stds, f.n_frames, f.config_fingerprint)
    }
}

impl BandStats {
    pub fn new(
        means: Vec<f64>,
        stds: Vec<f64>,
        n_frames: usize,
        config_fingerprint: impl Into<String>,
    ) -> Result<Self> {
        if means.is_empty() || means.len() != stds.len() {
            return Err(Error::Dimension(format!(
                "{} means and {} standard deviations",
                means.len(),
                stds.len()
            )));
        }
        if means.iter().chain(&stds).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("band statistics".into()));
        }
        if stds.iter().any(|&s| s < 0.0) {
            return Err(Error::Config("standard deviations must be non-negative".into()));
        }
        if n_frames < 2 {
            return Err(Error::TooFewFrames(n_frames));
        }
        Ok(Self {
            means,
            stds,
            n_frames,
            config_fingerprint: config_fingerprint.into(),
        })
    }

    pub fn k(&self) -> usize {
        self.means.len()
    }

    pub fn means(&self) -> &[f64] {
        &self.means
    }

    pub fn stds(&self) -> &[f64] {
        &self.stds
    }

    /// Number of values per band that entered the estimate (`N * M`).
    pub fn n_frames(&self) -> usize {
        self.n_frames
    }

    pub fn config_fingerprint(&self) -> &str {
        &self.config_fingerprint
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("band statistics serialize")
    }

    pub fn from_json(json: &str) -> Result<Self> {
        serde_json::from_str(json).map_err(|e| Error::format("<band statistics>", e.to_string()))
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

    fn check_shape(&self, x: &FeatureDataset) -> Result<()> {
        if self.k() != x.k() {
            return Err(Error::Dimension(format!(
                "statistics have {} bands, data has {}",
                self.k(),
                x.k()
            )));
        }
        Ok(())
    }
}

/// Per-band mean and Bessel-corrected standard deviation over all frames of all samples.
pub fn compute_band_stats(x: &FeatureDataset) -> Result<BandStats> {
    let count = x.n() * x.m();
    if count < 2 {
        return Err(Error::TooFewFrames(count));
    }
    if x.values().iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("feature dataset".into()));
    }
    let k = x.k();
    let values = x.values();
    let band = |b: usize| values.iter().skip(b).step_by(k).copied();

    let mut means = Vec::with_capacity(k);
    let mut stds = Vec::with_capacity(k);
    for b in 0..k {
        let mean = band(b).collect::<CompensatedSum>().value() / count as f64;
        let ss = band(b)
            .map(|v| (v - mean) * (v - mean))
            .collect::<CompensatedSum>()
            .value();
        means.push(mean);
        stds.push((ss / (count - 1) as f64).sqrt());
    }
    BandStats::new(means, stds, count, x.fingerprint())
}

/// `(X - mean_k) / max(std_k, SIGMA_MIN)` for every entry.
pub fn standardize(x: &FeatureDataset, stats: &BandStats) -> Result<FeatureDataset> {
    stats.check_shape(x)?;
    let divisors: Vec<f64> = stats
        .stds
        .iter()
        .enumerate()
        .map(|(k, &s)| {
            if s <= SIGMA_MIN {
                log::warn!("band {k} has standard deviation {s:e}; clamping divisor to {SIGMA_MIN:e}");
            }
            s.max(SIGMA_MIN)
        })
        .collect();
    Ok(x.map_bands(|k, v| (v - stats.means[k]) / divisors[k]))
}

/// `std_k * Z + mean_k` for every entry.
pub fn realign(z: &FeatureDataset, source: &BandStats) -> Result<FeatureDataset> {
    source.check_shape(z)?;
    Ok(z.map_bands(|k, v| source.stds[k] * v + source.means[k]))
}

/// Aligns the per-band moments of `target` to `source`.
pub fn adapt(target: &FeatureDataset, source: &BandStats) -> Result<FeatureDataset> {
    if source.config_fingerprint() != target.fingerprint() {
        return Err(Error::FingerprintMismatch {
            stats: source.config_fingerprint().to_owned(),
            data: target.fingerprint().to_owned(),
        });
    }
    source.check_shape(target)?;
    let own = compute_band_stats(target)?;
    realign(&standardize(target, &own)?, source)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn random(n: usize, m: usize, k: usize, seed: u64) -> FeatureDataset {
        let mut rng = crate::numeric::rng(seed);
        let values = (0..n * m * k)
            .map(|i| rng.random_range(-5.0..5.0) + (i % k) as f64)
            .collect();
        FeatureDataset::new(n, m, k, values, "fp").unwrap()
    }

    /// Concatenate every k-th row, then estimate: the textbook two-pass form.
    fn naive_stats(x: &FeatureDataset) -> (Vec<f64>, Vec<f64>) {
        let mut means = vec![];
        let mut stds = vec![];
        for k in 0..x.k() {
            let mut row = vec![];
            for n in 0..x.n() {
                for m in 0..x.m() {
                    row.push(x.get(n, m, k));
                }
            }
            let len = row.len() as f64;
            let mean = row.iter().sum::<f64>() / len;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (len - 1.0);
            means.push(mean);
            stds.push(var.sqrt());
        }
        (means, stds)
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
    }

    #[test]
    fn constant_dataset() {
        let x = FeatureDataset::new(3, 4, 2, vec![2.5; 24], "fp").unwrap();
        let s = compute_band_stats(&x).unwrap();
        assert_eq!(s.means(), &[2.5, 2.5]);
        assert_eq!(s.stds(), &[0.0, 0.0]);
        assert_eq!(s.n_frames(), 12);
    }

    #[test]
    fn two_values() {
        let x = FeatureDataset::new(1, 2, 1, vec![1.0, 3.0], "fp").unwrap();
        let s = compute_band_stats(&x).unwrap();
        assert_eq!(s.means(), &[2.0]);
        assert!((s.stds()[0] - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn matches_naive_oracle() {
        let x = random(4, 8, 3, 11);
        let s = compute_band_stats(&x).unwrap();
        let (m, sd) = naive_stats(&x);
        for k in 0..3 {
            assert!(rel(s.means()[k], m[k]) < 1e-12);
            assert!(rel(s.stds()[k], sd[k]) < 1e-12);
        }
    }

    #[test]
    fn too_few_frames_and_non_finite() {
        let x = FeatureDataset::new(1, 1, 4, vec![0.0; 4], "fp").unwrap();
        assert!(matches!(compute_band_stats(&x), Err(Error::TooFewFrames(1))));
        let x = FeatureDataset::new(1, 2, 1, vec![0.0, f64::NAN], "fp").unwrap();
        assert!(matches!(compute_band_stats(&x), Err(Error::NonFinite(_))));
    }

    #[test]
    fn standardize_examples() {
        let x = FeatureDataset::new(1, 2, 1, vec![5.0, 5.0], "fp").unwrap();
        let s = BandStats::new(vec![5.0], vec![2.0], 2, "fp").unwrap();
        assert_eq!(standardize(&x, &s).unwrap().values(), &[0.0, 0.0]);

        let x = FeatureDataset::new(1, 2, 1, vec![7.0, 3.0], "fp").unwrap();
        let s = BandStats::new(vec![3.0], vec![2.0], 2, "fp").unwrap();
        assert_eq!(standardize(&x, &s).unwrap().values(), &[2.0, 0.0]);

        let bad = BandStats::new(vec![3.0, 1.0], vec![2.0, 1.0], 2, "fp").unwrap();
        assert!(matches!(standardize(&x, &bad), Err(Error::Dimension(_))));
    }

    #[test]
    fn self_standardization_gives_unit_moments() {
        let x = random(5, 7, 4, 2);
        let z = standardize(&x, &compute_band_stats(&x).unwrap()).unwrap();
        let s = compute_band_stats(&z).unwrap();
        for k in 0..4 {
            assert!(s.means()[k].abs() < 1e-9);
            assert!((s.stds()[k] - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn realign_examples_and_roundtrip() {
        let z = FeatureDataset::new(1, 2, 2, vec![0.0, 0.0, 2.0, 0.0], "fp").unwrap();
        let src = BandStats::new(vec![3.0, -1.0], vec![2.0, 0.5], 10, "fp").unwrap();
        assert_eq!(realign(&z, &src).unwrap().values(), &[3.0, -1.0, 7.0, -1.0]);

        let x = random(3, 5, 6, 8);
        let s = compute_band_stats(&x).unwrap();
        let back = realign(&standardize(&x, &s).unwrap(), &s).unwrap();
        for (a, b) in x.values().iter().zip(back.values()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn zero_variance_band_is_clamped_not_fatal() {
        let x = FeatureDataset::new(1, 3, 2, vec![1.0, 4.0, 1.0, 5.0, 1.0, 6.0], "fp").unwrap();
        let src = BandStats::new(vec![0.0, 0.0], vec![1.0, 1.0], 10, "fp").unwrap();
        let y = adapt(&x, &src).unwrap();
        assert!(y.values().iter().all(|v| v.is_finite()));
        // dead band collapses onto the source mean
        assert_eq!(y.get(0, 0, 0), 0.0);
    }

    #[test]
    fn adapt_matches_source_moments() {
        let x = random(6, 9, 5, 4);
        let src = BandStats::new(
            vec![1.0, -2.0, 0.0, 3.5, 10.0],
            vec![0.5, 2.0, 1.0, 3.0, 0.1],
            100,
            "fp",
        )
        .unwrap();
        let y = adapt(&x, &src).unwrap();
        let s = compute_band_stats(&y).unwrap();
        for k in 0..5 {
            assert!((s.means()[k] - src.means()[k]).abs() < 1e-9);
            assert!(rel(s.stds()[k], src.stds()[k]) < 1e-9);
        }
        assert_eq!((y.n(), y.m(), y.k()), (6, 9, 5));
    }

    #[test]
    fn adapt_to_own_stats_is_identity() {
        let x = random(4, 6, 3, 21);
        let y = adapt(&x, &compute_band_stats(&x).unwrap()).unwrap();
        for (a, b) in x.values().iter().zip(y.values()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn negative_gain_flips_band_around_source_mean() {
        let x = random(3, 4, 2, 5);
        let src = BandStats::new(vec![1.0, -1.0], vec![2.0, 3.0], 10, "fp").unwrap();
        let flipped = x.map_bands(|k, v| if k == 0 { -2.0 * v + 1.0 } else { v });
        let a = adapt(&x, &src).unwrap();
        let b = adapt(&flipped, &src).unwrap();
        for (i, (u, v)) in a.values().iter().zip(b.values()).enumerate() {
            if i % 2 == 0 {
                assert!((u - 1.0 + (v - 1.0)).abs() < 1e-9);
            } else {
                assert!((u - v).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn adapt_refuses_foreign_fingerprint() {
        let x = random(2, 3, 2, 1);
        let src = BandStats::new(vec![0.0, 0.0], vec![1.0, 1.0], 4, "other").unwrap();
        assert!(matches!(adapt(&x, &src), Err(Error::FingerprintMismatch { .. })));
    }

    #[test]
    fn json_roundtrip_is_exact() {
        let x = random(3, 3, 4, 77);
        let s = compute_band_stats(&x).unwrap();
        let back = BandStats::from_json(&s.to_json()).unwrap();
        assert_eq!(back, s);
        let json = s.to_json();
        assert!(json.contains("\"K\": 4"));
        assert!(json.contains("\"version\": 1"));
    }

    #[test]
    fn json_rejects_inconsistent_k() {
        let json = r#"{"version":1,"K":3,"means":[0.0],"stds":[1.0],"n_frames":4,"config_fingerprint":"x"}"#;
        assert!(BandStats::from_json(json).is_err());
    }
}
