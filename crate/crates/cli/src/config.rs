use std::fs;
use std::path::Path;

use bandmatch::experiment::BenchmarkConfig;
use bandmatch::features::DEFAULT_SAMPLE_RATE;
use bandmatch::{Error, FeatureConfig, Result, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::args::Mode;

/// Everything a run can be configured with. Every section is optional.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub features: FeatureSection,
    pub adaptation: AdaptationSection,
    pub train: TrainConfig,
    pub sweep: SweepSection,
    pub benchmark: BenchmarkConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureSection {
    pub preset: String,
    pub sample_rate: u32,
    /// Full parameter set, used when `preset` is `custom`.
    pub custom: Option<FeatureConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdaptationSection {
    pub mode: Mode,
    pub segment_len: Option<usize>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub n_permutations: usize,
    /// Defaults to every usable divisor of the per-device target size.
    pub dda_segment_lengths: Option<Vec<usize>>,
    /// Defaults to every usable divisor of the pooled target size.
    pub dia_segment_lengths: Option<Vec<usize>>,
}

impl Default for FeatureSection {
    fn default() -> Self {
        Self {
            preset: "dcase40".into(),
            sample_rate: DEFAULT_SAMPLE_RATE,
            custom: None,
        }
    }
}

impl Default for AdaptationSection {
    fn default() -> Self {
        Self {
            mode: Mode::Dda,
            segment_len: None,
            seed: 0,
        }
    }
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            n_permutations: 50,
            dda_segment_lengths: None,
            dia_segment_lengths: None,
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let json = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&json).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn feature_config(&self, preset: Option<&str>) -> Result<FeatureConfig> {
        let name = preset.unwrap_or(&self.features.preset);
        let config = match name {
            "custom" => self
                .features
                .custom
                .clone()
                .ok_or_else(|| Error::Config("preset 'custom' needs a features.custom section".into()))?,
            other => FeatureConfig::preset(other, self.features.sample_rate)?,
        };
        config.validate()?;
        Ok(config)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_object_is_the_default() {
        let c: RunConfig = serde_json::from_str("{}").unwrap();
        assert_eq!(c, RunConfig::default());
        assert_eq!(c.sweep.n_permutations, 50);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(serde_json::from_str::<RunConfig>(r#"{"sweeep": {}}"#).is_err());
        assert!(serde_json::from_str::<RunConfig>(r#"{"adaptation": {"mode": "dda", "l": 3}}"#).is_err());
    }

    #[test]
    fn presets_resolve() {
        let c = RunConfig::default();
        assert_eq!(c.feature_config(None).unwrap().n_mels, 40);
        assert_eq!(c.feature_config(Some("kaggle64")).unwrap().n_mels, 64);
        assert!(c.feature_config(Some("custom")).is_err());
        assert!(c.feature_config(Some("mfcc")).is_err());
    }
}
