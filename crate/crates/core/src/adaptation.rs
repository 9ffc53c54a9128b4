//! Deployment strategies on top of [`adapt`]: device-dependent adaptation
//! (each device aligned on its own), device-independent adaptation (all
//! target devices pooled into one domain), and segmented adaptation where
//! only `L` target samples at a time contribute to the statistics.

use std::collections::BTreeMap;
use std::io::Write;

use rand::seq::SliceRandom;
#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::dataset::FeatureDataset;
use crate::error::{Error, Result};
use crate::numeric::{derive_seed, mean_std, rng};
use crate::stats_align::{adapt, BandStats};

/// Anything that can score a labeled dataset. Must be shareable across threads.
pub trait Evaluator: Sync {
    fn accuracy(&self, data: &FeatureDataset) -> Result<f64>;
}

impl<F> Evaluator for F
where
    F: Fn(&FeatureDataset) -> Result<f64> + Sync,
{
    fn accuracy(&self, data: &FeatureDataset) -> Result<f64> {
        self(data)
    }
}

/// Adapts every device independently, then concatenates in device-id order.
///
/// Samples without device labels are labeled with their map key.
pub fn adapt_dda(targets: &BTreeMap<String, FeatureDataset>, source: &BandStats) -> Result<FeatureDataset> {
    if targets.is_empty() {
        return Err(Error::Config("no target devices given".into()));
    }
    let adapted = targets
        .iter()
        .map(|(device, data)| {
            let labeled;
            let data = if data.device_labels().is_some() {
                data
            } else {
                labeled = data.clone().with_device(device);
                &labeled
            };
            adapt(data, source).map_err(|e| Error::Device {
                device: device.clone(),
                source: Box::new(e),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    FeatureDataset::concat(&adapted.iter().collect::<Vec<_>>())
}

/// Pools all target datasets into one domain, then adapts it as a whole.
pub fn adapt_dia(targets: &[FeatureDataset], source: &BandStats) -> Result<FeatureDataset> {
    let pooled = FeatureDataset::concat(&targets.iter().collect::<Vec<_>>())?;
    adapt(&pooled, source)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RemainderPolicy {
    /// The segment length must divide the dataset size.
    #[default]
    DivisorsOnly,
    /// A final short segment is adapted with its own (smaller) statistics.
    AdaptPartial,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentPlan {
    segment_len: usize,
    permutation: Vec<usize>,
    remainder: RemainderPolicy,
}

impl SegmentPlan {
    pub fn new(segment_len: usize, permutation: Vec<usize>, remainder: RemainderPolicy) -> Result<Self> {
        if segment_len == 0 {
            return Err(Error::Config("segment length must be at least 1".into()));
        }
        let mut seen = vec![false; permutation.len()];
        for &p in &permutation {
            if p >= seen.len() || std::mem::replace(&mut seen[p], true) {
                return Err(Error::Config(format!("not a permutation of 0..{}", permutation.len())));
            }
        }
        Ok(Self {
            segment_len,
            permutation,
            remainder,
        })
    }

    pub fn identity(n: usize, segment_len: usize) -> Result<Self> {
        Self::new(segment_len, (0..n).collect(), RemainderPolicy::DivisorsOnly)
    }

    /// Uniformly random permutation drawn from `seed`.
    pub fn shuffled(n: usize, segment_len: usize, seed: u64) -> Result<Self> {
        let mut permutation: Vec<usize> = (0..n).collect();
        permutation.shuffle(&mut rng(seed));
        Self::new(segment_len, permutation, RemainderPolicy::DivisorsOnly)
    }

    pub fn with_remainder(mut self, remainder: RemainderPolicy) -> Self {
        self.remainder = remainder;
        self
    }

    pub fn segment_len(&self) -> usize {
        self.segment_len
    }

    pub fn permutation(&self) -> &[usize] {
        &self.permutation
    }

    pub fn remainder(&self) -> RemainderPolicy {
        self.remainder
    }

    fn check(&self, n: usize, m: usize) -> Result<()> {
        if self.permutation.len() != n {
            return Err(Error::Dimension(format!(
                "plan permutes {} samples, dataset has {n}",
                self.permutation.len()
            )));
        }
        let len = self.segment_len.min(n);
        if len * m < 2 {
            return Err(Error::TooFewFrames(len * m));
        }
        match (self.remainder, n % self.segment_len) {
            (_, 0) => Ok(()),
            (RemainderPolicy::DivisorsOnly, _) => Err(Error::SegmentRemainder {
                len: self.segment_len,
                n,
            }),
            (RemainderPolicy::AdaptPartial, r) if r * m < 2 => Err(Error::TooFewFrames(r * m)),
            (RemainderPolicy::AdaptPartial, _) => Ok(()),
        }
    }
}

/// Adapts consecutive segments of the permuted dataset independently.
///
/// The output is returned in the original sample order, so labels stay aligned.
pub fn segmented_adapt(x: &FeatureDataset, plan: &SegmentPlan, source: &BandStats) -> Result<FeatureDataset> {
    plan.check(x.n(), x.m())?;
    let stride = x.m() * x.k();
    let mut out = vec![0.0; x.values().len()];
    for chunk in plan.permutation.chunks(plan.segment_len) {
        let adapted = adapt(&x.select(chunk)?, source)?;
        for (j, &orig) in chunk.iter().enumerate() {
            out[orig * stride..(orig + 1) * stride].copy_from_slice(adapted.sample(j));
        }
    }
    x.with_values(out)
}

/// All positive divisors of `n`, ascending.
pub fn divisors(n: usize) -> Vec<usize> {
    (1..=n).filter(|d| n.is_multiple_of(*d)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub segment_len: usize,
    pub perm_seed: u64,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSummary {
    pub segment_len: usize,
    pub mean_accuracy: f64,
    pub std_accuracy: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
}

impl SweepResult {
    /// Mean and sample standard deviation of accuracy per segment length, in first-seen order.
    pub fn summary(&self) -> Vec<SweepSummary> {
        let mut order = Vec::new();
        let mut groups: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
        for row in &self.rows {
            groups
                .entry(row.segment_len)
                .or_insert_with(|| {
                    order.push(row.segment_len);
                    Vec::new()
                })
                .push(row.accuracy);
        }
        order
            .into_iter()
            .map(|len| {
                let accs = &groups[&len];
                let (mean, std) = mean_std(accs);
                SweepSummary {
                    segment_len: len,
                    mean_accuracy: mean,
                    std_accuracy: std,
                    n: accs.len(),
                }
            })
            .collect()
    }

    pub fn mean_at(&self, segment_len: usize) -> Option<f64> {
        self.summary()
            .into_iter()
            .find(|s| s.segment_len == segment_len)
            .map(|s| s.mean_accuracy)
    }

    pub fn write_raw_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "L,perm_seed,accuracy")?;
        for r in &self.rows {
            writeln!(w, "{},{},{}", r.segment_len, r.perm_seed, r.accuracy)?;
        }
        Ok(())
    }

    pub fn write_summary_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "L,mean_accuracy,std_accuracy,n")?;
        for s in self.summary() {
            writeln!(w, "{},{},{},{}", s.segment_len, s.mean_accuracy, s.std_accuracy, s.n)?;
        }
        Ok(())
    }
}

/// Accuracy after segmented adaptation, for each segment length and each of
/// `n_permutations` seeded permutations.
///
/// Permutation `i` at segment length `L` is seeded by `derive_seed(seed, [L, i])`;
/// rows come out ordered by (position of `L` in `l_values`, `i`) whatever the
/// thread schedule.
pub fn segment_sweep(
    x: &FeatureDataset,
    l_values: &[usize],
    n_permutations: usize,
    seed: u64,
    source: &BandStats,
    evaluator: &dyn Evaluator,
) -> Result<SweepResult> {
    sweep_groups(&[x], l_values, n_permutations, seed, source, evaluator)
}

/// Device-dependent variant of [`segment_sweep`]: every device is permuted,
/// segmented and adapted on its own, and accuracy is measured on the
/// concatenation of all adapted devices.
pub fn segment_sweep_dda(
    targets: &BTreeMap<String, FeatureDataset>,
    l_values: &[usize],
    n_permutations: usize,
    seed: u64,
    source: &BandStats,
    evaluator: &dyn Evaluator,
) -> Result<SweepResult> {
    let groups: Vec<&FeatureDataset> = targets.values().collect();
    sweep_groups(&groups, l_values, n_permutations, seed, source, evaluator)
}

fn sweep_groups(
    groups: &[&FeatureDataset],
    l_values: &[usize],
    n_permutations: usize,
    seed: u64,
    source: &BandStats,
    evaluator: &dyn Evaluator,
) -> Result<SweepResult> {
    if groups.is_empty() {
        return Err(Error::Config("no target data to sweep".into()));
    }
    if n_permutations == 0 {
        return Err(Error::Config("need at least one permutation".into()));
    }
    for &len in l_values {
        for g in groups {
            SegmentPlan::identity(g.n(), len)?.check(g.n(), g.m())?;
        }
    }
    let jobs: Vec<(usize, usize)> = l_values
        .iter()
        .flat_map(|&len| (0..n_permutations).map(move |i| (len, i)))
        .collect();
    #[cfg(feature = "parallel")]
    let jobs_iter = jobs.par_iter();
    #[cfg(not(feature = "parallel"))]
    let jobs_iter = jobs.iter();
    let rows = jobs_iter
        .map(|&(len, i)| {
            let perm_seed = derive_seed(seed, &[len as u64, i as u64]);
            let adapted = groups
                .iter()
                .enumerate()
                .map(|(g, data)| {
                    let plan = SegmentPlan::shuffled(data.n(), len, derive_seed(perm_seed, &[g as u64]))?;
                    segmented_adapt(data, &plan, source)
                })
                .collect::<Result<Vec<_>>>()?;
            let joined = FeatureDataset::concat(&adapted.iter().collect::<Vec<_>>())?;
            let accuracy = evaluator.accuracy(&joined)?;
            if !(0.0..=1.0).contains(&accuracy) {
                return Err(Error::Config(format!("evaluator returned accuracy {accuracy}")));
            }
            Ok(SweepRow {
                segment_len: len,
                perm_seed,
                accuracy,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepResult { rows })
}
