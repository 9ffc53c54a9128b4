use std::f64::consts::PI;

use bandmatch::features::{frame_and_window, mel_filterbank, power_spectrum, DEFAULT_LOG_FLOOR};
use bandmatch::numeric::rng;
use bandmatch::{log_mel, AudioClip, FeatureConfig};
use proptest::prelude::*;
use rand::Rng;

fn naive_power(frame: &[f64], fft_size: usize) -> Vec<f64> {
    (0..=fft_size / 2)
        .map(|b| {
            let (re, im) = frame.iter().enumerate().fold((0.0, 0.0), |(re, im), (n, &x)| {
                let a = -2.0 * PI * (b * n) as f64 / fft_size as f64;
                (re + x * a.cos(), im + x * a.sin())
            });
            re * re + im * im
        })
        .collect()
}

fn small_config() -> FeatureConfig {
    FeatureConfig {
        sample_rate: 8000,
        n_mels: 12,
        win_length_samples: 200,
        hop_samples: 80,
        fft_size: 256,
        fmin_hz: 50.0,
        fmax_hz: 3800.0,
        log_floor: DEFAULT_LOG_FLOOR,
    }
}

/// Frame, window, DFT, triangle-weight and log, written out longhand.
fn naive_log_mel(samples: &[f64], c: &FeatureConfig) -> Vec<Vec<f64>> {
    let mel = |f: f64| 2595.0 * (1.0 + f / 700.0).log10();
    let hz = |m: f64| 700.0 * (10f64.powf(m / 2595.0) - 1.0);
    let edges: Vec<f64> = (0..c.n_mels + 2)
        .map(|i| hz(mel(c.fmin_hz) + i as f64 * (mel(c.fmax_hz) - mel(c.fmin_hz)) / (c.n_mels + 1) as f64))
        .collect();
    let n_bins = c.fft_size / 2 + 1;
    let mut bank = vec![vec![0.0; n_bins]; c.n_mels];
    for (k, row) in bank.iter_mut().enumerate() {
        for (b, w) in row.iter_mut().enumerate() {
            let f = b as f64 * c.sample_rate as f64 / c.fft_size as f64;
            if f > edges[k] && f <= edges[k + 1] {
                *w = (f - edges[k]) / (edges[k + 1] - edges[k]);
            } else if f > edges[k + 1] && f < edges[k + 2] {
                *w = (edges[k + 2] - f) / (edges[k + 2] - edges[k + 1]);
            }
        }
        let peak = row.iter().cloned().fold(0.0, f64::max);
        row.iter_mut().for_each(|w| *w /= peak);
    }

    let w = c.win_length_samples;
    let n_frames = (samples.len() - w) / c.hop_samples + 1;
    (0..n_frames)
        .map(|m| {
            let frame: Vec<f64> = (0..w)
                .map(|n| samples[m * c.hop_samples + n] * (0.54 - 0.46 * (2.0 * PI * n as f64 / w as f64).cos()))
                .collect();
            let p = naive_power(&frame, c.fft_size);
            bank.iter()
                .map(|row| {
                    row.iter()
                        .zip(&p)
                        .map(|(a, b)| a * b)
                        .sum::<f64>()
                        .max(c.log_floor)
                        .ln()
                })
                .collect()
        })
        .collect()
}

#[test]
fn cosine_on_a_bin_concentrates_its_energy() {
    for b0 in [1usize, 5, 17, 31] {
        let frame: Vec<f64> = (0..64).map(|n| (2.0 * PI * (b0 * n) as f64 / 64.0).cos()).collect();
        let p = power_spectrum(&frame, 64).unwrap();
        assert_eq!(p.len(), 33);
        for (b, v) in p.iter().enumerate() {
            let expect = if b == b0 { 1024.0 } else { 0.0 };
            assert!((v - expect).abs() < 1e-9, "bin {b}: {v}");
        }
    }
}

#[test]
fn parseval_on_random_frames() {
    let mut r = rng(11);
    for _ in 0..30 {
        let fft_size = 1usize << r.random_range(2..=10);
        let len = r.random_range(1..=fft_size);
        let frame: Vec<f64> = (0..len).map(|_| r.random_range(-1.0..1.0)).collect();
        let p = power_spectrum(&frame, fft_size).unwrap();
        // Fold the one-sided spectrum back into the full DFT.
        let full: f64 = p[0] + p[fft_size / 2] + 2.0 * p[1..fft_size / 2].iter().sum::<f64>();
        let full = if fft_size == 1 { p[0] } else { full };
        let energy: f64 = frame.iter().map(|x| x * x).sum();
        let expect = fft_size as f64 * energy;
        assert!((full - expect).abs() <= 1e-9 * expect, "{full} vs {expect}");
    }
}

#[test]
fn log_mel_matches_longhand_pipeline() {
    let c = small_config();
    let mut r = rng(12);
    for _ in 0..5 {
        let len = r.random_range(200..2000);
        let samples: Vec<f64> = (0..len).map(|_| r.random_range(-0.5..0.5)).collect();
        let clip = AudioClip::new(samples.clone(), c.sample_rate).unwrap();
        let got = log_mel(&clip, &c).unwrap();
        let want = naive_log_mel(&samples, &c);
        assert_eq!(got.n_frames(), want.len());
        for (m, row) in want.iter().enumerate() {
            for (k, v) in row.iter().enumerate() {
                assert!((got.get(m, k) - v).abs() < 1e-9, "frame {m} band {k}");
            }
        }
    }
}

#[test]
fn louder_clip_shifts_by_ln_100() {
    let c = small_config();
    let samples: Vec<f64> = (0..1600)
        .map(|n| (0.07 * n as f64).sin() * 0.1 + (0.3 * n as f64).cos() * 0.05)
        .collect();
    let quiet = log_mel(&AudioClip::new(samples.clone(), 8000).unwrap(), &c).unwrap();
    let loud = log_mel(
        &AudioClip::new(samples.iter().map(|s| s * 10.0).collect(), 8000).unwrap(),
        &c,
    )
    .unwrap();
    let floor = c.log_floor.ln();
    for (q, l) in quiet.values().iter().zip(loud.values()) {
        assert!(l >= q);
        if *q > floor + 1e-9 {
            assert!((l - q - 100f64.ln()).abs() < 1e-9);
        }
    }
}

#[test]
fn presets_build_valid_filterbanks() {
    for name in ["dcase40", "kaggle64"] {
        let c = FeatureConfig::preset(name, 44_100).unwrap();
        let bank = mel_filterbank(&c).unwrap();
        let n_bins = c.fft_size / 2 + 1;
        assert_eq!(bank.len(), c.n_mels * n_bins);
        for row in bank.chunks_exact(n_bins) {
            assert!(row.iter().all(|w| *w >= 0.0));
            assert!((row.iter().cloned().fold(0.0, f64::max) - 1.0).abs() < 1e-12);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn frame_count_law(len in 1usize..5000, win in 1usize..600, hop in 1usize..600) {
        prop_assume!(len >= win && win <= 512);
        let c = FeatureConfig { win_length_samples: win, hop_samples: hop, fft_size: 512, ..small_config() };
        let clip = AudioClip::new(vec![0.25; len], c.sample_rate).unwrap();
        let frames = frame_and_window(&clip, &c).unwrap();
        prop_assert_eq!(frames.len(), (len - win) / hop + 1);
        prop_assert!(frames.iter().all(|f| f.len() == win));
    }

    #[test]
    fn log_mel_never_goes_below_the_floor(seed in any::<u64>(), gain in 0.0f64..2.0) {
        let c = small_config();
        let mut r = rng(seed);
        let samples: Vec<f64> = (0..800).map(|_| gain * r.random_range(-1.0..1.0)).collect();
        let s = log_mel(&AudioClip::new(samples, 8000).unwrap(), &c).unwrap();
        prop_assert!(s.values().iter().all(|v| v.is_finite() && *v >= c.log_floor.ln()));
    }
}
