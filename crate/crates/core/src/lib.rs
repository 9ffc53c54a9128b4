//! Band-wise statistics matching for unsupervised domain adaptation of
//! log-Mel audio features.
//!
//! Target-domain features are standardized with their own per-band mean and
//! standard deviation and then re-scaled to the per-band moments of the
//! source (training) domain. The crate also carries everything needed to
//! exercise the method end to end: a log-Mel front-end, a synthetic
//! recording-device testbed, a small softmax classifier and the experiment
//! recipes that measure accuracy before and after adaptation.

pub mod adaptation;
pub mod channelsim;
pub mod classifier;
pub mod dataset;
pub mod error;
pub mod experiment;
pub mod features;
pub mod numeric;
pub mod stats_align;

pub use adaptation::{
    adapt_dda, adapt_dia, divisors, segment_sweep, segment_sweep_dda, segmented_adapt, Evaluator, RemainderPolicy,
    SegmentPlan, SweepResult, SweepRow, SweepSummary,
};
pub use channelsim::{apply_channel, generate_source_dataset, sample_channel, ChannelSpec, DeviceChannel, SynthConfig};
pub use classifier::{accuracy, pool, predict, train, PooledFeatures, SoftmaxModel, TrainConfig};
pub use dataset::FeatureDataset;
pub use error::{Error, ErrorKind, Result};
pub use features::{log_mel, AudioClip, FeatureConfig, Spectrogram};
pub use stats_align::{adapt, compute_band_stats, realign, standardize, BandStats, SIGMA_MIN};
