//! Acceptance suite. Every criterion prints one PASS/FAIL line (run with
//! `--nocapture` to see them) and asserts its tolerance and runtime budget.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;
use std::time::{Duration, Instant};

use bandmatch::channelsim::DeviceChannel;
use bandmatch::classifier::{objective, pool, Params};
use bandmatch::experiment::{accuracy_table, lookup, sweep, write_outputs, Benchmark, BenchmarkConfig};
use bandmatch::features::power_spectrum;
use bandmatch::numeric::rng;
use bandmatch::{adapt, apply_channel, compute_band_stats, realign, standardize, BandStats, FeatureDataset, SIGMA_MIN};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

const SWEEP_PERMUTATIONS: usize = 50;
const SWEEP_SEED: u64 = 7;

fn report(criterion: &str, pass: bool, detail: String) {
    println!("[{}] {criterion}: {detail}", if pass { "PASS" } else { "FAIL" });
    assert!(pass, "{criterion} failed: {detail}");
}

fn within_budget(start: Instant, budget: Duration) -> (bool, String) {
    let elapsed = start.elapsed();
    (elapsed < budget, format!("{:.2?} (budget {:?})", elapsed, budget))
}

fn random_dataset(r: &mut ChaCha8Rng, n: usize, m: usize, k: usize) -> FeatureDataset {
    let centers: Vec<f64> = (0..k).map(|_| r.random_range(-30.0..5.0)).collect();
    let scales: Vec<f64> = (0..k).map(|_| r.random_range(0.1..5.0)).collect();
    let values = (0..n * m * k)
        .map(|i| centers[i % k] + scales[i % k] * r.random_range(-1.0..1.0))
        .collect();
    FeatureDataset::new(n, m, k, values, "fp").unwrap()
}

fn random_stats(r: &mut ChaCha8Rng, k: usize) -> BandStats {
    BandStats::new(
        (0..k).map(|_| r.random_range(-20.0..5.0)).collect(),
        (0..k).map(|_| r.random_range(0.05..6.0)).collect(),
        1000,
        "fp",
    )
    .unwrap()
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

// ---- independent oracles -------------------------------------------------

fn naive_band_stats(x: &FeatureDataset) -> (Vec<f64>, Vec<f64>) {
    let mut means = Vec::new();
    let mut stds = Vec::new();
    for k in 0..x.k() {
        let mut row = Vec::new();
        for n in 0..x.n() {
            for m in 0..x.m() {
                row.push(x.get(n, m, k));
            }
        }
        let len = row.len() as f64;
        let mean = row.iter().sum::<f64>() / len;
        means.push(mean);
        stds.push((row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (len - 1.0)).sqrt());
    }
    (means, stds)
}

fn naive_dft_power(frame: &[f64], fft_size: usize) -> Vec<f64> {
    (0..=fft_size / 2)
        .map(|b| {
            let (mut re, mut im) = (0.0, 0.0);
            for (n, &x) in frame.iter().enumerate() {
                let angle = -2.0 * PI * (b * n) as f64 / fft_size as f64;
                re += x * angle.cos();
                im += x * angle.sin();
            }
            re * re + im * im
        })
        .collect()
}

fn naive_pool(x: &FeatureDataset, n: usize) -> Vec<f64> {
    let m = x.m() as f64;
    let mut means = Vec::new();
    let mut stds = Vec::new();
    for k in 0..x.k() {
        let vals: Vec<f64> = (0..x.m()).map(|f| x.get(n, f, k)).collect();
        let mean = vals.iter().sum::<f64>() / m;
        means.push(mean);
        stds.push((vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0)).sqrt());
    }
    means.extend(stds);
    means
}

fn spearman(x: &[f64], y: &[f64]) -> f64 {
    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&a, &b| v[a].partial_cmp(&v[b]).unwrap());
        let mut out = vec![0.0; v.len()];
        let mut i = 0;
        while i < idx.len() {
            let mut j = i;
            while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
                j += 1;
            }
            for &t in &idx[i..=j] {
                out[t] = (i + j) as f64 / 2.0 + 1.0;
            }
            i = j + 1;
        }
        out
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let n = rx.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}

#[test]
fn spearman_oracle_sanity() {
    assert!((spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]) - 1.0).abs() < 1e-15);
    assert!((spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]) + 1.0).abs() < 1e-15);
}

// ---- criteria ------------------------------------------------------------

#[test]
fn criterion_1_moment_matching() {
    let start = Instant::now();
    let mut r = rng(101);
    let (mut worst_mean, mut worst_std) = (0.0f64, 0.0f64);
    for _ in 0..100 {
        let (n, m, k) = (r.random_range(2..=64), r.random_range(2..=32), r.random_range(1..=64));
        let x = random_dataset(&mut r, n, m, k);
        let source = random_stats(&mut r, k);
        let own = compute_band_stats(&x).unwrap();
        let got = compute_band_stats(&adapt(&x, &source).unwrap()).unwrap();
        for b in 0..k {
            worst_mean = worst_mean.max((got.means()[b] - source.means()[b]).abs());
            if own.stds()[b] > SIGMA_MIN {
                worst_std = worst_std.max(rel_err(got.stds()[b], source.stds()[b]));
            }
        }
    }
    let (fast, time) = within_budget(start, Duration::from_secs(10));
    report(
        "criterion 1 (moment matching)",
        worst_mean <= 1e-9 && worst_std <= 1e-9 && fast,
        format!("max |mean err| {worst_mean:.2e}, max rel std err {worst_std:.2e}, {time}"),
    );
}

#[test]
fn criterion_2_affine_channel_invariance() {
    let start = Instant::now();
    let mut r = rng(202);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let (n, m, k) = (r.random_range(2..=32), r.random_range(2..=16), r.random_range(1..=40));
        let x = random_dataset(&mut r, n, m, k);
        let source = random_stats(&mut r, k);
        let channel = DeviceChannel::new(
            (0..k).map(|_| r.random_range(0.5..=2.0)).collect(),
            (0..k).map(|_| r.random_range(-3.0..=3.0)).collect(),
            0.0,
        )
        .unwrap();
        let distorted = apply_channel(&x, &channel, 0, "B").unwrap();
        let a = adapt(&distorted, &source).unwrap();
        let b = adapt(&x, &source).unwrap();
        for (u, v) in a.values().iter().zip(b.values()) {
            worst = worst.max((u - v).abs());
        }
    }
    let (fast, time) = within_budget(start, Duration::from_secs(10));
    report(
        "criterion 2 (affine-channel invariance)",
        worst <= 1e-9 && fast,
        format!("max elementwise deviation {worst:.2e}, {time}"),
    );
}

#[test]
fn criterion_3_oracle_equivalence() {
    let start = Instant::now();
    let mut r = rng(303);
    let (mut stats_err, mut std_err, mut realign_err, mut pool_err, mut fft_err) =
        (0.0f64, 0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for _ in 0..50 {
        let (n, m, k) = (r.random_range(1..=8), r.random_range(2..=12), r.random_range(1..=10));
        let x = random_dataset(&mut r, n, m, k);

        let stats = compute_band_stats(&x).unwrap();
        let (means, stds) = naive_band_stats(&x);
        for b in 0..k {
            stats_err = stats_err.max(rel_err(stats.means()[b], means[b]));
            stats_err = stats_err.max(rel_err(stats.stds()[b], stds[b]));
        }

        let target = random_stats(&mut r, k);
        let z = standardize(&x, &target).unwrap();
        let back = realign(&z, &target).unwrap();
        for i in 0..n {
            for f in 0..m {
                for b in 0..k {
                    let expect_z = (x.get(i, f, b) - target.means()[b]) / target.stds()[b].max(SIGMA_MIN);
                    std_err = std_err.max(rel_err(z.get(i, f, b), expect_z));
                    let expect_back = target.stds()[b] * z.get(i, f, b) + target.means()[b];
                    realign_err = realign_err.max(rel_err(back.get(i, f, b), expect_back));
                }
            }
        }

        let pooled = pool(&x).unwrap();
        for (i, p) in pooled.iter().enumerate() {
            for (a, b) in p.values().iter().zip(naive_pool(&x, i)) {
                pool_err = pool_err.max((a - b).abs() / b.abs().max(1.0));
            }
        }

        let fft_size = 1 << r.random_range(3..=9);
        let len = r.random_range(1..=fft_size);
        let frame: Vec<f64> = (0..len).map(|_| r.random_range(-1.0..1.0)).collect();
        let fast = power_spectrum(&frame, fft_size).unwrap();
        let slow = naive_dft_power(&frame, fft_size);
        let scale = slow.iter().copied().fold(0.0, f64::max);
        for (a, b) in fast.iter().zip(&slow) {
            fft_err = fft_err.max((a - b).abs() / scale);
        }
    }
    let (fast, time) = within_budget(start, Duration::from_secs(30));
    report(
        "criterion 3 (oracle equivalence)",
        stats_err <= 1e-12 && std_err <= 1e-12 && realign_err <= 1e-12 && pool_err <= 1e-12 && fft_err <= 1e-9 && fast,
        format!(
            "stats {stats_err:.1e}, standardize {std_err:.1e}, realign {realign_err:.1e}, pool {pool_err:.1e}, power spectrum {fft_err:.1e}, {time}"
        ),
    );
}

#[test]
fn criterion_4_gradient_check() {
    let start = Instant::now();
    let mut r = rng(404);
    let h = 1e-5;
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let (c, d, n) = (r.random_range(2..=5), r.random_range(1..=20), r.random_range(2..=12));
        let mut params = Params::zeros(c, d);
        params.weights.iter_mut().for_each(|w| *w = r.random_range(-1.0..1.0));
        params.bias.iter_mut().for_each(|b| *b = r.random_range(-1.0..1.0));
        let data: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..d).map(|_| r.random_range(-2.0..2.0)).collect())
            .collect();
        let rows: Vec<&[f64]> = data.iter().map(Vec::as_slice).collect();
        let labels: Vec<usize> = (0..n).map(|_| r.random_range(0..c)).collect();
        let l2 = r.random_range(0.0..0.5);
        let (_, gw, gb) = objective(&params, &rows, &labels, l2);

        let mut numeric = Vec::new();
        for i in 0..c * d + c {
            let mut p = params.clone();
            let nudge = |p: &mut Params, delta: f64| {
                if i < c * d {
                    p.weights[i] += delta;
                } else {
                    p.bias[i - c * d] += delta;
                }
            };
            nudge(&mut p, h);
            let up = objective(&p, &rows, &labels, l2).0;
            nudge(&mut p, -2.0 * h);
            let down = objective(&p, &rows, &labels, l2).0;
            numeric.push((up - down) / (2.0 * h));
        }
        let analytic: Vec<f64> = gw.into_iter().chain(gb).collect();
        let diff = analytic
            .iter()
            .zip(&numeric)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt();
        let norm_a = analytic.iter().map(|a| a * a).sum::<f64>().sqrt();
        let norm_n = numeric.iter().map(|a| a * a).sum::<f64>().sqrt();
        worst = worst.max(diff / norm_a.max(norm_n));
    }
    let (fast, time) = within_budget(start, Duration::from_secs(10));
    report(
        "criterion 4 (gradient check)",
        worst <= 1e-4 && fast,
        format!("max relative error {worst:.2e}, {time}"),
    );
}

#[test]
fn criterion_5_accuracy_ordering() {
    let start = Instant::now();
    let bench = Benchmark::generate(&BenchmarkConfig::default()).unwrap();
    let model = bench.train_model().unwrap();
    let source = bench.source_stats().unwrap();
    let rows = accuracy_table(&bench, &model, &source).unwrap();
    let joined = bench.target_label();
    let src = lookup(&rows, "A", "none").unwrap();
    let src_self = lookup(&rows, "A", "self").unwrap();
    let none = lookup(&rows, &joined, "none").unwrap();
    let dda = lookup(&rows, &joined, "dda").unwrap();
    let dia = lookup(&rows, &joined, "dia").unwrap();
    assert_ne!(bench.channels["B"], bench.channels["C"]);
    let (fast, time) = within_budget(start, Duration::from_secs(120));

    report(
        "criterion 5a (source accuracy >= 0.90)",
        src >= 0.90,
        format!("{src:.4}"),
    );
    report(
        "criterion 5b (non-adapted target >= 20 points below source)",
        src - none >= 0.20,
        format!("source {src:.4}, non-adapted {none:.4}"),
    );
    report(
        "criterion 5c (DDA within 5 points of source)",
        (src - dda).abs() <= 0.05,
        format!("source {src:.4}, DDA {dda:.4}"),
    );
    report(
        "criterion 5d (DDA >= DIA)",
        dda >= dia,
        format!("DDA {dda:.4}, DIA {dia:.4}"),
    );
    report(
        "criterion 5e (self-adapted source within 3 points)",
        (src_self - src).abs() <= 0.03,
        format!("source {src:.4}, self-adapted {src_self:.4}"),
    );
    report("criterion 5 runtime", fast, time);
}

fn run_pipeline(out: &Path) -> (f64, bandmatch::experiment::SweepOutcome) {
    let bench = Benchmark::generate(&BenchmarkConfig::default()).unwrap();
    let model = bench.train_model().unwrap();
    let source = bench.source_stats().unwrap();
    let rows = accuracy_table(&bench, &model, &source).unwrap();
    let sweeps = sweep(&bench, &model, &source, SWEEP_PERMUTATIONS, SWEEP_SEED).unwrap();
    write_outputs(out, &rows, Some(&sweeps)).unwrap();
    (lookup(&rows, &bench.target_label(), "none").unwrap(), sweeps)
}

#[test]
fn criterion_6_segment_length_trend() {
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let (baseline, sweeps) = run_pipeline(dir.path());
    let summary = sweeps.dda.summary();
    let lengths: Vec<usize> = summary.iter().map(|s| s.segment_len).collect();
    assert_eq!(lengths, bandmatch::divisors(180));
    assert!(summary.iter().all(|s| s.n == SWEEP_PERMUTATIONS));
    let xs: Vec<f64> = lengths.iter().map(|&l| l as f64).collect();
    let ys: Vec<f64> = summary.iter().map(|s| s.mean_accuracy).collect();
    let rho = spearman(&xs, &ys);
    let at_1 = sweeps.dda.mean_at(1).unwrap();
    let at_10 = sweeps.dda.mean_at(10).unwrap();
    let (fast, time) = within_budget(start, Duration::from_secs(300));

    report(
        "criterion 6a (Spearman(L, accuracy) >= 0.9)",
        rho >= 0.9,
        format!("rho = {rho:.4}"),
    );
    report(
        "criterion 6b (L = 1 below non-adapted)",
        at_1 < baseline,
        format!("L=1 {at_1:.4}, non-adapted {baseline:.4}"),
    );
    report(
        "criterion 6c (L = 10 beats non-adapted by >= 10 points)",
        at_10 - baseline >= 0.10,
        format!("L=10 {at_10:.4}, non-adapted {baseline:.4}"),
    );
    report("criterion 6 runtime", fast, time);
}

#[test]
fn criterion_7_determinism() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    run_pipeline(a.path());
    run_pipeline(b.path());
    let mut names: Vec<_> = fs::read_dir(a.path())
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    names.sort();
    let identical = names
        .iter()
        .all(|name| fs::read(a.path().join(name)).unwrap() == fs::read(b.path().join(name)).unwrap());
    report(
        "criterion 7 (byte-identical CSV outputs)",
        identical && names.len() == 5,
        format!("{} files compared", names.len()),
    );
}
