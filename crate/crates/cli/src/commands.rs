use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::io::Cursor;
use std::path::{Path, PathBuf};

use bandmatch::experiment::{
    accuracy_table, sweep_with_lengths, write_outputs, write_table_csv, Benchmark, SweepLengths, TableRow,
};
use bandmatch::features::{
    load_wav_from_reader, read_feature_file, read_sidecar, write_feature_file, write_feature_file_with_header,
    FeatureHeader,
};
use bandmatch::numeric::{derive_seed, str_key};
use bandmatch::{
    accuracy, adapt, adapt_dia, compute_band_stats, log_mel, segmented_adapt, BandStats, Error, ErrorKind,
    FeatureDataset, Result, SegmentPlan, SoftmaxModel,
};
use log::{info, warn};
use rayon::prelude::*;
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::args::{Filter, Mode};
use crate::config::RunConfig;
use crate::index::{read_manifest, scene_labels, vocabulary, write_if_changed, write_index, Index, IndexEntry};
use crate::Failure;

pub struct Context {
    pub config: RunConfig,
    pub seed: Option<u64>,
    pub out: PathBuf,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn file_sha256(path: &Path) -> Result<String> {
    Ok(sha256_hex(&fs::read(path).map_err(|e| Error::io(path, e))?))
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("json serializes") + "\n";
    write_if_changed(path, text.as_bytes()).map(|_| ())
}

fn with_default_split(filter: &Filter, split: &str) -> Filter {
    Filter {
        split: Some(filter.split.clone().unwrap_or_else(|| split.to_string())),
        device: filter.device.clone(),
    }
}

enum Extracted {
    Written(IndexEntry),
    Skipped(IndexEntry),
}

pub fn extract(ctx: &Context, manifest: &Path, preset: Option<&str>) -> std::result::Result<(), Failure> {
    let config = ctx.config.feature_config(preset)?;
    let fingerprint = config.fingerprint();
    let (base, rows) = read_manifest(manifest)?;
    let feature_dir = ctx.out.join("features");
    fs::create_dir_all(&feature_dir).map_err(|e| Error::io(&feature_dir, e))?;

    let results: Vec<Result<Extracted>> = rows
        .par_iter()
        .map(|row| {
            let audio = base.join(&row.path);
            let stem = Path::new(&row.path)
                .file_stem()
                .map_or("clip".into(), |s| s.to_string_lossy());
            let name = format!("{stem}-{}.feat", &sha256_hex(row.path.as_bytes())[..8]);
            let target = feature_dir.join(&name);
            let entry = IndexEntry {
                path: format!("features/{name}"),
                scene: row.scene.clone(),
                device: row.device.clone(),
                split: row.split.clone(),
                adapted: "none".into(),
                fingerprint: fingerprint.clone(),
            };

            let bytes = fs::read(&audio).map_err(|e| Error::io(&audio, e))?;
            let digest = sha256_hex(&bytes);
            let up_to_date = read_sidecar(&target)
                .is_ok_and(|h| h.fingerprint == fingerprint && h.source_sha256.as_deref() == Some(&digest))
                && read_feature_file(&target).is_ok();
            if up_to_date {
                return Ok(Extracted::Skipped(entry));
            }
            let clip = load_wav_from_reader(Cursor::new(bytes), &audio)?;
            let spec = log_mel(&clip, &config)?;
            let header = FeatureHeader {
                version: 1,
                m: spec.n_frames(),
                k: spec.n_bands(),
                fingerprint: fingerprint.clone(),
                config: Some(config.clone()),
                source_path: Some(row.path.clone()),
                source_sha256: Some(digest),
            };
            write_feature_file_with_header(&target, &spec, &header)?;
            Ok(Extracted::Written(entry))
        })
        .collect();

    let (mut entries, mut written, mut failed) = (Vec::new(), 0, Vec::new());
    for (row, result) in rows.iter().zip(results) {
        match result {
            Ok(Extracted::Written(e)) => {
                written += 1;
                entries.push(e);
            }
            Ok(Extracted::Skipped(e)) => entries.push(e),
            Err(e) => {
                eprintln!("error: {}: {e}", row.path);
                failed.push(e.kind());
            }
        }
    }
    write_index(&ctx.out.join("index.csv"), &entries)?;
    info!(
        "extracted {written}, up to date {}, failed {} of {} entries ({fingerprint})",
        entries.len() - written,
        failed.len(),
        rows.len()
    );
    match failed.first() {
        None => Ok(()),
        Some(&kind) => Err(Failure {
            kind,
            message: format!("{} of {} manifest entries failed", failed.len(), rows.len()),
        }),
    }
}

pub fn stats(ctx: &Context, index_path: &Path, filter: &Filter) -> Result<()> {
    let index = Index::read(index_path)?;
    let selected = index.select(&with_default_split(filter, "train"))?;
    let stats = compute_band_stats(&index.load(&selected)?)?;
    let path = ctx.out.join("stats.json");
    write_if_changed(&path, stats.to_json().as_bytes())?;
    info!(
        "band statistics over {} spectrograms written to {}",
        selected.len(),
        path.display()
    );
    Ok(())
}

fn adapt_segmented(x: &FeatureDataset, len: Option<usize>, seed: u64, source: &BandStats) -> Result<FeatureDataset> {
    match len {
        Some(len) => segmented_adapt(x, &SegmentPlan::shuffled(x.n(), len, seed)?, source),
        None => adapt(x, source),
    }
}

fn adapt_by_device(x: &FeatureDataset, len: Option<usize>, seed: u64, source: &BandStats) -> Result<FeatureDataset> {
    let devices = x.device_labels().ok_or(Error::MissingLabels("device"))?;
    let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, d) in devices.iter().enumerate() {
        if d.is_empty() {
            return Err(Error::MissingLabels("device"));
        }
        groups.entry(d).or_default().push(i);
    }
    let stride = x.m() * x.k();
    let mut values = vec![0.0; x.values().len()];
    for (device, rows) in groups {
        let wrap = |e| Error::Device {
            device: device.to_string(),
            source: Box::new(e),
        };
        let part = x.select(&rows).map_err(wrap)?;
        let adapted = adapt_segmented(&part, len, derive_seed(seed, &[str_key(device)]), source).map_err(wrap)?;
        for (j, &i) in rows.iter().enumerate() {
            values[i * stride..(i + 1) * stride].copy_from_slice(adapted.sample(j));
        }
    }
    x.with_values(values)
}

pub fn adapt_cmd(
    ctx: &Context,
    index_path: &Path,
    stats_path: &Path,
    mode: Option<Mode>,
    segment_len: Option<usize>,
    filter: &Filter,
) -> Result<()> {
    let out_index = ctx.out.join("index.csv");
    if out_index
        .canonicalize()
        .ok()
        .is_some_and(|p| Some(p) == index_path.canonicalize().ok())
    {
        return Err(Error::Config(
            "--out would overwrite the input index; choose another directory".into(),
        ));
    }
    let settings = &ctx.config.adaptation;
    let mode = mode.unwrap_or(settings.mode);
    let segment_len = segment_len.or(settings.segment_len);
    let seed = ctx.seed.unwrap_or(settings.seed);

    let source = BandStats::load(stats_path)?;
    let index = Index::read(index_path)?;
    let selected = index.select(filter)?;
    let x = index.load(&selected)?;
    if source.config_fingerprint() != x.fingerprint() {
        return Err(Error::FingerprintMismatch {
            stats: source.config_fingerprint().into(),
            data: x.fingerprint().into(),
        });
    }
    let adapted = match mode {
        Mode::None => x.clone(),
        Mode::Dda => adapt_by_device(&x, segment_len, seed, &source)?,
        Mode::Dia if segment_len.is_some() => adapt_segmented(&x, segment_len, seed, &source)?,
        Mode::Dia => adapt_dia(std::slice::from_ref(&x), &source)?,
    };

    let feature_dir = ctx.out.join("features");
    fs::create_dir_all(&feature_dir).map_err(|e| Error::io(&feature_dir, e))?;
    let mut names = HashSet::new();
    let mut entries = Vec::with_capacity(selected.len());
    for (i, entry) in selected.iter().enumerate() {
        let original = index.resolve(entry);
        let name = original
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        if !names.insert(name.clone()) {
            return Err(Error::Config(format!(
                "two selected feature files are both named '{name}'"
            )));
        }
        let config = read_sidecar(&original).ok().and_then(|h| h.config);
        write_feature_file(
            feature_dir.join(&name),
            &adapted.spectrogram(i),
            adapted.fingerprint(),
            config.as_ref(),
            Some(&original.to_string_lossy()),
        )?;
        entries.push(IndexEntry {
            path: format!("features/{name}"),
            adapted: mode.as_str().into(),
            ..(*entry).clone()
        });
    }
    write_index(&out_index, &entries)?;
    write_json(
        &ctx.out.join("provenance.json"),
        &json!({
            "command": "adapt",
            "mode": mode.as_str(),
            "segment_len": segment_len,
            "seed": seed,
            "stats": stats_path.to_string_lossy(),
            "stats_sha256": file_sha256(stats_path)?,
            "index": index_path.to_string_lossy(),
            "index_sha256": file_sha256(index_path)?,
            "n_samples": entries.len(),
            "feature_fingerprint": adapted.fingerprint(),
        }),
    )?;
    info!(
        "{} adapted {} spectrograms into {}",
        mode.as_str(),
        entries.len(),
        ctx.out.display()
    );
    Ok(())
}

pub fn train(ctx: &Context, index_path: &Path, filter: &Filter) -> Result<()> {
    let index = Index::read(index_path)?;
    let selected = index.select(&with_default_split(filter, "train"))?;
    let classes = vocabulary(selected.iter().copied());
    let labels = scene_labels(&selected, &classes)?;
    let x = index.load(&selected)?.with_scene_labels(labels)?;
    let mut config = ctx.config.train.clone();
    if let Some(seed) = ctx.seed {
        config.seed = seed;
    }
    let model = bandmatch::classifier::fit(&x, &config)?.with_classes(classes)?;
    let path = ctx.out.join("model.json");
    write_if_changed(&path, model.to_json().as_bytes())?;
    if let Some(report) = model.report() {
        info!(
            "trained on {} spectrograms: loss {:.4}, training accuracy {:.4}",
            x.n(),
            report.final_loss,
            report.train_accuracy
        );
    }
    Ok(())
}

pub fn evaluate(ctx: &Context, model_path: &Path, index_paths: &[PathBuf]) -> Result<()> {
    let model = SoftmaxModel::load(model_path)?;
    let classes = model
        .classes()
        .ok_or_else(|| Error::Config(format!("{} has no scene names", model_path.display())))?
        .to_vec();

    let mut rows = Vec::new();
    let mut fingerprint = model.feature_fingerprint().map(str::to_owned);
    for path in index_paths {
        let index = Index::read(path)?;
        let mut groups: BTreeMap<(&str, &str, &str), Vec<&IndexEntry>> = BTreeMap::new();
        for e in &index.entries {
            groups.entry((&e.split, &e.device, &e.adapted)).or_default().push(e);
        }
        for ((split, device, adapted), entries) in groups {
            let x = index
                .load(&entries)?
                .with_scene_labels(scene_labels(&entries, &classes)?)?;
            match &fingerprint {
                Some(fp) if fp != x.fingerprint() => {
                    return Err(Error::FingerprintMismatch {
                        stats: fp.clone(),
                        data: format!("{} in {}", x.fingerprint(), path.display()),
                    })
                }
                _ => fingerprint = Some(x.fingerprint().to_owned()),
            }
            rows.push(TableRow {
                split: split.into(),
                device: device.into(),
                adapted: adapted.into(),
                accuracy: accuracy(&model, &x)?,
            });
        }
    }
    let mut csv = Vec::new();
    write_table_csv(&rows, &mut csv).expect("in-memory write");
    write_if_changed(&ctx.out.join("metrics.csv"), &csv)?;
    print!("{}", String::from_utf8_lossy(&csv));
    Ok(())
}

fn benchmark(ctx: &Context) -> Result<Benchmark> {
    let mut config = ctx.config.benchmark.clone();
    if let Some(seed) = ctx.seed {
        config.seed = seed;
    }
    Benchmark::generate(&config)
}

pub fn sweep(ctx: &Context) -> Result<()> {
    let bench = benchmark(ctx)?;
    let model = bench.train_model()?;
    let source = bench.source_stats()?;
    let table = accuracy_table(&bench, &model, &source)?;

    let settings = &ctx.config.sweep;
    let defaults = SweepLengths::all_divisors(&bench.targets)?;
    let lengths = SweepLengths {
        dda: settings.dda_segment_lengths.clone().unwrap_or(defaults.dda),
        dia: settings.dia_segment_lengths.clone().unwrap_or(defaults.dia),
    };
    let sweep_seed = derive_seed(bench.config.seed, &[str_key("sweep")]);
    let outcome = sweep_with_lengths(
        &bench.targets,
        &model,
        &source,
        &lengths,
        settings.n_permutations,
        sweep_seed,
    )?;
    write_outputs(&ctx.out, &table, Some(&outcome))?;

    let mut resolved = ctx.config.clone();
    resolved.benchmark = bench.config.clone();
    write_json(
        &ctx.out.join("provenance.json"),
        &json!({
            "command": "sweep",
            "config": resolved,
            "sweep_seed": sweep_seed,
            "dda_segment_lengths": lengths.dda,
            "dia_segment_lengths": lengths.dia,
        }),
    )?;
    let mut text = Vec::new();
    write_table_csv(&table, &mut text).expect("in-memory write");
    print!("{}", String::from_utf8_lossy(&text));
    for (mode, result) in [("dda", &outcome.dda), ("dia", &outcome.dia)] {
        for s in result.summary() {
            info!(
                "{mode} L={:<4} mean accuracy {:.4} (std {:.4})",
                s.segment_len, s.mean_accuracy, s.std_accuracy
            );
        }
    }
    Ok(())
}

pub fn synth(ctx: &Context) -> Result<()> {
    let bench = benchmark(ctx)?;
    let feature_dir = ctx.out.join("features");
    fs::create_dir_all(&feature_dir).map_err(|e| Error::io(&feature_dir, e))?;
    let scene = |c: usize| format!("scene{c:02}");

    let mut splits: Vec<(&str, &str, &FeatureDataset)> = vec![
        (bandmatch::experiment::SOURCE_DEVICE, "train", &bench.source_train),
        (bandmatch::experiment::SOURCE_DEVICE, "test", &bench.source_test),
    ];
    splits.extend(bench.targets.iter().map(|(d, x)| (d.as_str(), "test", x)));

    let mut entries = Vec::new();
    let mut counts = BTreeMap::new();
    for (device, split, x) in splits {
        let labels = x.scene_labels().ok_or(Error::MissingLabels("scene"))?;
        for (i, &label) in labels.iter().enumerate() {
            let name = format!("{device}-{split}-{i:05}.feat");
            write_feature_file(feature_dir.join(&name), &x.spectrogram(i), x.fingerprint(), None, None)?;
            entries.push(IndexEntry {
                path: format!("features/{name}"),
                scene: scene(label),
                device: device.into(),
                split: split.into(),
                adapted: "none".into(),
                fingerprint: x.fingerprint().into(),
            });
        }
        counts.insert(format!("{device}/{split}"), x.n());
    }
    write_index(&ctx.out.join("index.csv"), &entries)?;

    let channel_dir = ctx.out.join("channels");
    fs::create_dir_all(&channel_dir).map_err(|e| Error::io(&channel_dir, e))?;
    for (device, channel) in &bench.channels {
        channel.save(channel_dir.join(format!("{device}.json")))?;
    }
    let config = &bench.config;
    write_json(
        &ctx.out.join("provenance.json"),
        &json!({
            "command": "synth",
            "benchmark": config,
            "channel_seeds": config.devices.keys().map(|d| (d.clone(), config.channel_seed(d))).collect::<BTreeMap<_, _>>(),
            "noise_seeds": config.devices.keys().map(|d| (d.clone(), config.noise_seed(d))).collect::<BTreeMap<_, _>>(),
            "counts": counts,
            "note": "target devices re-record the first scenes of the source test split",
        }),
    )?;
    info!(
        "wrote {} synthetic spectrograms to {}",
        entries.len(),
        ctx.out.display()
    );
    Ok(())
}

pub fn exit_status(kind: ErrorKind) -> u8 {
    match kind {
        ErrorKind::Config => 2,
        ErrorKind::Data => 3,
        ErrorKind::Numerical => 4,
    }
}

pub fn warn_unused_seed(ctx: &Context, command: &str) {
    if ctx.seed.is_some() {
        warn!("--seed has no effect on `{command}`");
    }
}
