//! End-to-end recipes on the synthetic device benchmark.
//!
//! A source device "A" provides a labeled training split and a test split.
//! Target devices (by default "B" and "C") re-record the first scenes of the
//! source test split through their own per-band channels. A softmax model
//! trained on A is then scored on non-adapted and adapted target data, and
//! on the segment-length sweep.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::adaptation::{adapt_dda, adapt_dia, divisors, segment_sweep, segment_sweep_dda, SweepResult};
use crate::channelsim::{
    apply_channel, generate_source_dataset, sample_channel, ChannelSpec, DeviceChannel, SynthConfig,
};
use crate::classifier::{accuracy, fit, SoftmaxModel, TrainConfig};
use crate::dataset::FeatureDataset;
use crate::error::{Error, Result};
use crate::numeric::{derive_seed, str_key};
use crate::stats_align::{adapt, compute_band_stats, BandStats};

pub const SOURCE_DEVICE: &str = "A";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchmarkConfig {
    pub n_classes: usize,
    pub n_frames: usize,
    pub n_bands: usize,
    pub class_separation: f64,
    pub within_class_std: f64,
    pub n_train_per_class: usize,
    pub n_source_test_per_class: usize,
    pub n_target_per_class: usize,
    pub devices: BTreeMap<String, ChannelSpec>,
    pub train: TrainConfig,
    pub seed: u64,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        let device = |offset: f64| ChannelSpec {
            gain_range: [1.0 / 1.5, 1.5],
            offset_range: [-offset, offset],
            noise_std: 0.05,
            smoothing: 1,
        };
        Self {
            n_classes: 10,
            n_frames: 16,
            n_bands: 40,
            class_separation: 0.5,
            within_class_std: 0.6,
            n_train_per_class: 40,
            n_source_test_per_class: 60,
            n_target_per_class: 18,
            devices: BTreeMap::from([("B".to_string(), device(4.0)), ("C".to_string(), device(4.0))]),
            train: TrainConfig::default(),
            seed: 2020,
        }
    }
}

impl BenchmarkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.devices.is_empty() {
            return Err(Error::Config("the benchmark needs at least one target device".into()));
        }
        if self.devices.contains_key(SOURCE_DEVICE) {
            return Err(Error::Config(format!(
                "device id '{SOURCE_DEVICE}' is reserved for the source"
            )));
        }
        if self.n_target_per_class > self.n_source_test_per_class {
            return Err(Error::Config(
                "target devices re-record source test scenes: need n_target_per_class <= n_source_test_per_class"
                    .into(),
            ));
        }
        if self.n_frames < 2 {
            return Err(Error::Config("need at least 2 frames per spectrogram".into()));
        }
        self.synth(0, 1).validate()?;
        self.train.validate()
    }

    fn synth(&self, seed: u64, n_per_class: usize) -> SynthConfig {
        SynthConfig {
            n_classes: self.n_classes,
            n_per_class,
            n_frames: self.n_frames,
            n_bands: self.n_bands,
            class_separation: self.class_separation,
            within_class_std: self.within_class_std,
            prototype_seed: derive_seed(self.seed, &[str_key("prototypes")]),
            seed,
        }
    }

    pub fn channel_seed(&self, device: &str) -> u64 {
        derive_seed(self.seed, &[str_key("channel"), str_key(device)])
    }

    pub fn noise_seed(&self, device: &str) -> u64 {
        derive_seed(self.seed, &[str_key("noise"), str_key(device)])
    }
}

#[derive(Debug, Clone)]
pub struct Benchmark {
    pub config: BenchmarkConfig,
    pub source_train: FeatureDataset,
    pub source_test: FeatureDataset,
    pub targets: BTreeMap<String, FeatureDataset>,
    pub channels: BTreeMap<String, DeviceChannel>,
}

impl Benchmark {
    /// Generates all splits. Deterministic in `config`.
    pub fn generate(config: &BenchmarkConfig) -> Result<Self> {
        config.validate()?;
        let split = |name: &str, per_class: usize| -> Result<FeatureDataset> {
            let seed = derive_seed(config.seed, &[str_key(name)]);
            Ok(generate_source_dataset(&config.synth(seed, per_class))?.with_device(SOURCE_DEVICE))
        };
        let source_train = split("train", config.n_train_per_class)?;
        let source_test = split("test", config.n_source_test_per_class)?;
        let n_target = config.n_classes * config.n_target_per_class;
        let scenes = source_test.select(&(0..n_target).collect::<Vec<_>>())?;

        let mut targets = BTreeMap::new();
        let mut channels = BTreeMap::new();
        for (device, spec) in &config.devices {
            let channel = sample_channel(config.channel_seed(device), config.n_bands, spec)?;
            targets.insert(
                device.clone(),
                apply_channel(&scenes, &channel, config.noise_seed(device), device)?,
            );
            channels.insert(device.clone(), channel);
        }
        Ok(Self {
            config: config.clone(),
            source_train,
            source_test,
            targets,
            channels,
        })
    }

    pub fn source_stats(&self) -> Result<BandStats> {
        compute_band_stats(&self.source_train)
    }

    pub fn train_model(&self) -> Result<SoftmaxModel> {
        fit(&self.source_train, &self.config.train)
    }

    pub fn targets_pooled(&self) -> Result<FeatureDataset> {
        FeatureDataset::concat(&self.targets.values().collect::<Vec<_>>())
    }

    pub fn n_target(&self) -> usize {
        self.config.n_classes * self.config.n_target_per_class
    }

    /// Joined label for all target devices, e.g. "B+C".
    pub fn target_label(&self) -> String {
        self.targets.keys().cloned().collect::<Vec<_>>().join("+")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TableRow {
    pub split: String,
    pub device: String,
    /// `none`, `self` (adapted with its own statistics), `dda` or `dia`.
    pub adapted: String,
    pub accuracy: f64,
}

impl TableRow {
    fn new(device: &str, adapted: &str, accuracy: f64) -> Self {
        Self {
            split: "test".into(),
            device: device.into(),
            adapted: adapted.into(),
            accuracy,
        }
    }
}

pub fn write_table_csv<W: Write>(rows: &[TableRow], mut w: W) -> std::io::Result<()> {
    writeln!(w, "split,device,adapted,accuracy")?;
    for r in rows {
        writeln!(w, "{},{},{},{}", r.split, r.device, r.adapted, r.accuracy)?;
    }
    Ok(())
}

/// Accuracy before and after adaptation on every test split.
pub fn accuracy_table(bench: &Benchmark, model: &SoftmaxModel, source: &BandStats) -> Result<Vec<TableRow>> {
    let mut rows = vec![
        TableRow::new(SOURCE_DEVICE, "none", accuracy(model, &bench.source_test)?),
        TableRow::new(
            SOURCE_DEVICE,
            "self",
            accuracy(model, &adapt(&bench.source_test, source)?)?,
        ),
    ];
    for (device, data) in &bench.targets {
        rows.push(TableRow::new(device, "none", accuracy(model, data)?));
        rows.push(TableRow::new(device, "dda", accuracy(model, &adapt(data, source)?)?));
    }
    let joined = bench.target_label();
    rows.push(TableRow::new(
        &joined,
        "none",
        accuracy(model, &bench.targets_pooled()?)?,
    ));
    rows.push(TableRow::new(
        &joined,
        "dda",
        accuracy(model, &adapt_dda(&bench.targets, source)?)?,
    ));
    let all: Vec<FeatureDataset> = bench.targets.values().cloned().collect();
    rows.push(TableRow::new(
        &joined,
        "dia",
        accuracy(model, &adapt_dia(&all, source)?)?,
    ));
    Ok(rows)
}

pub fn lookup(rows: &[TableRow], device: &str, adapted: &str) -> Option<f64> {
    rows.iter()
        .find(|r| r.device == device && r.adapted == adapted)
        .map(|r| r.accuracy)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepOutcome {
    pub dda: SweepResult,
    pub dia: SweepResult,
}

/// Segment-length sweeps over every divisor of the per-device (DDA) and pooled (DIA) target size.
pub fn sweep(
    bench: &Benchmark,
    model: &SoftmaxModel,
    source: &BandStats,
    n_permutations: usize,
    seed: u64,
) -> Result<SweepOutcome> {
    sweep_targets(&bench.targets, model, source, n_permutations, seed)
}

/// Same as [`sweep`] for arbitrary per-device target sets (all devices must share a size for DDA).
pub fn sweep_targets(
    targets: &BTreeMap<String, FeatureDataset>,
    model: &SoftmaxModel,
    source: &BandStats,
    n_permutations: usize,
    seed: u64,
) -> Result<SweepOutcome> {
    let lengths = SweepLengths::all_divisors(targets)?;
    sweep_with_lengths(targets, model, source, &lengths, n_permutations, seed)
}

/// Segment lengths to sweep for each adaptation mode.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SweepLengths {
    pub dda: Vec<usize>,
    pub dia: Vec<usize>,
}

impl SweepLengths {
    /// Every divisor of the per-device size (DDA) and of the pooled size (DIA)
    /// that leaves at least two values per band in a segment.
    pub fn all_divisors(targets: &BTreeMap<String, FeatureDataset>) -> Result<Self> {
        let per_device = common_size(targets)?;
        let m = targets.values().next().map_or(1, FeatureDataset::m);
        let usable = |n: usize| divisors(n).into_iter().filter(|l| l * m >= 2).collect::<Vec<_>>();
        Ok(Self {
            dda: usable(per_device),
            dia: usable(per_device * targets.len()),
        })
    }
}

fn common_size(targets: &BTreeMap<String, FeatureDataset>) -> Result<usize> {
    let sizes: Vec<usize> = targets.values().map(FeatureDataset::n).collect();
    let per_device = *sizes.first().ok_or_else(|| Error::Config("no target devices".into()))?;
    if sizes.iter().any(|&n| n != per_device) {
        return Err(Error::Config(
            "device-dependent sweeps need equally sized devices".into(),
        ));
    }
    Ok(per_device)
}

pub fn sweep_with_lengths(
    targets: &BTreeMap<String, FeatureDataset>,
    model: &SoftmaxModel,
    source: &BandStats,
    lengths: &SweepLengths,
    n_permutations: usize,
    seed: u64,
) -> Result<SweepOutcome> {
    common_size(targets)?;
    let dda = segment_sweep_dda(
        targets,
        &lengths.dda,
        n_permutations,
        derive_seed(seed, &[str_key("dda")]),
        source,
        model,
    )?;
    let pooled = FeatureDataset::concat(&targets.values().collect::<Vec<_>>())?;
    let dia = segment_sweep(
        &pooled,
        &lengths.dia,
        n_permutations,
        derive_seed(seed, &[str_key("dia")]),
        source,
        model,
    )?;
    Ok(SweepOutcome { dda, dia })
}

/// Writes `table.csv` and the raw/aggregated sweep CSVs for both modes into `dir`.
pub fn write_outputs(dir: &Path, table: &[TableRow], sweeps: Option<&SweepOutcome>) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let save = |name: &str, bytes: Vec<u8>| -> Result<()> {
        let path = dir.join(name);
        fs::write(&path, bytes).map_err(|e| Error::io(&path, e))
    };
    let mut buf = Vec::new();
    write_table_csv(table, &mut buf).expect("in-memory write");
    save("table.csv", buf)?;
    if let Some(s) = sweeps {
        for (mode, result) in [("dda", &s.dda), ("dia", &s.dia)] {
            let mut raw = Vec::new();
            result.write_raw_csv(&mut raw).expect("in-memory write");
            save(&format!("sweep_{mode}_raw.csv"), raw)?;
            let mut agg = Vec::new();
            result.write_summary_csv(&mut agg).expect("in-memory write");
            save(&format!("sweep_{mode}_summary.csv"), agg)?;
        }
    }
    Ok(())
}
