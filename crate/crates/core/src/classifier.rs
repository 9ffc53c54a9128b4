//! Multinomial logistic regression over pooled band statistics.
//!
//! Each spectrogram is summarized by its per-band temporal mean and standard
//! deviation (a `2K` vector). Features are standardized with training-set
//! statistics stored in the model, then fed to a linear softmax classifier
//! trained by (mini-)batch gradient descent on the L2-regularized mean
//! cross-entropy.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::adaptation::Evaluator;
use crate::dataset::FeatureDataset;
use crate::error::{Error, Result};
use crate::numeric::{derive_seed, mean_std, rng};

const MODEL_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct PooledFeatures(Vec<f64>);

impl PooledFeatures {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() || !values.len().is_multiple_of(2) {
            return Err(Error::Dimension(format!(
                "pooled features need an even length, got {}",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("pooled features".into()));
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn n_bands(&self) -> usize {
        self.0.len() / 2
    }
}

/// Per-band temporal mean (first K entries) and Bessel-corrected std (last K).
pub fn pool(x: &FeatureDataset) -> Result<Vec<PooledFeatures>> {
    if x.m() < 2 {
        return Err(Error::TooFewFrames(x.m()));
    }
    let (m, k) = (x.m(), x.k());
    (0..x.n())
        .map(|i| {
            let sample = x.sample(i);
            let mut means = Vec::with_capacity(2 * k);
            let mut stds = Vec::with_capacity(k);
            let mut band = Vec::with_capacity(m);
            for b in 0..k {
                band.clear();
                band.extend(sample.iter().skip(b).step_by(k));
                let (mu, sd) = mean_std(&band);
                means.push(mu);
                stds.push(sd);
            }
            means.extend(stds);
            PooledFeatures::new(means)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
}

impl Standardizer {
    fn fit(rows: &[&[f64]]) -> Self {
        let d = rows[0].len();
        let (means, stds) = (0..d)
            .map(|j| {
                let col: Vec<f64> = rows.iter().map(|r| r[j]).collect();
                let (mu, sd) = mean_std(&col);
                (mu, if sd > 1e-12 { sd } else { 1.0 })
            })
            .unzip();
        Self { means, stds }
    }

    fn apply(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(self.means.iter().zip(&self.stds))
            .map(|(v, (mu, sd))| (v - mu) / sd)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub l2_penalty: f64,
    /// Mini-batch size; 0 means full-batch descent.
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    /// Full-batch descent with a step that is stable on standardized pooled features.
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            epochs: 300,
            l2_penalty: 1e-3,
            batch_size: 0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if !(self.l2_penalty >= 0.0 && self.l2_penalty.is_finite()) {
            return Err(Error::Config("l2_penalty must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: usize,
    pub learning_rate: f64,
    pub final_loss: f64,
    pub train_accuracy: f64,
    /// Full-training-set objective after each epoch.
    pub loss_history: Vec<f64>,
}

/// Linear softmax parameters: `weights` is `C x D` row-major, `bias` has `C` entries.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    pub n_classes: usize,
    pub dim: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Params {
    pub fn zeros(n_classes: usize, dim: usize) -> Self {
        Self {
            n_classes,
            dim,
            weights: vec![0.0; n_classes * dim],
            bias: vec![0.0; n_classes],
        }
    }

    pub fn logits(&self, x: &[f64]) -> Vec<f64> {
        self.weights
            .chunks_exact(self.dim)
            .zip(&self.bias)
            .map(|(w, b)| w.iter().zip(x).map(|(a, v)| a * v).sum::<f64>() + b)
            .collect()
    }
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exp: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let total: f64 = exp.iter().sum();
    exp.into_iter().map(|e| e / total).collect()
}

/// Mean cross-entropy plus `l2/2 * |W|^2` (bias unpenalized), and its gradient
/// with respect to weights and bias.
pub fn objective(params: &Params, rows: &[&[f64]], labels: &[usize], l2: f64) -> (f64, Vec<f64>, Vec<f64>) {
    let (c, d) = (params.n_classes, params.dim);
    let n = rows.len() as f64;
    let mut loss = 0.0;
    let mut grad_w = vec![0.0; c * d];
    let mut grad_b = vec![0.0; c];
    for (x, &y) in rows.iter().zip(labels) {
        let logits = params.logits(x);
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let log_total = logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln() + max;
        loss += log_total - logits[y];
        for (j, z) in logits.iter().enumerate() {
            let residual = (z - log_total).exp() - if j == y { 1.0 } else { 0.0 };
            grad_b[j] += residual / n;
            for (g, v) in grad_w[j * d..(j + 1) * d].iter_mut().zip(x.iter()) {
                *g += residual * v / n;
            }
        }
    }
    loss /= n;
    loss += 0.5 * l2 * params.weights.iter().map(|w| w * w).sum::<f64>();
    for (g, w) in grad_w.iter_mut().zip(&params.weights) {
        *g += l2 * w;
    }
    (loss, grad_w, grad_b)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ModelFile", into = "ModelFile")]
pub struct SoftmaxModel {
    params: Params,
    standardizer: Standardizer,
    train_config: TrainConfig,
    report: Option<TrainReport>,
    feature_fingerprint: Option<String>,
    classes: Option<Vec<String>>,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    version: u32,
    #[serde(rename = "C")]
    c: usize,
    #[serde(rename = "K")]
    k: usize,
    weights: Vec<f64>,
    bias: Vec<f64>,
    feature_standardizer: Standardizer,
    train_config: TrainConfig,
    #[serde(default)]
    training: Option<TrainReport>,
    #[serde(default)]
    feature_fingerprint: Option<String>,
    /// Scene name of every class index, when known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    classes: Option<Vec<String>>,
}

impl From<SoftmaxModel> for ModelFile {
    fn from(m: SoftmaxModel) -> Self {
        ModelFile {
            version: MODEL_VERSION,
            c: m.params.n_classes,
            k: m.params.dim / 2,
            weights: m.params.weights,
            bias: m.params.bias,
            feature_standardizer: m.standardizer,
            train_config: m.train_config,
            training: m.report,
            feature_fingerprint: m.feature_fingerprint,
            classes: m.classes,
        }
    }
}

impl TryFrom<ModelFile> for SoftmaxModel {
    type Error = Error;

    fn try_from(f: ModelFile) -> Result<Self> {
        if f.version != MODEL_VERSION {
            return Err(Error::Config(format!("unsupported model version {}", f.version)));
        }
        let dim = 2 * f.k;
        if f.weights.len() != f.c * dim
            || f.bias.len() != f.c
            || f.feature_standardizer.means.len() != dim
            || f.feature_standardizer.stds.len() != dim
        {
            return Err(Error::Dimension("model file arrays disagree with C and K".into()));
        }
        let model = SoftmaxModel {
            params: Params {
                n_classes: f.c,
                dim,
                weights: f.weights,
                bias: f.bias,
            },
            standardizer: f.feature_standardizer,
            train_config: f.train_config,
            report: f.training,
            feature_fingerprint: f.feature_fingerprint,
            classes: f.classes,
        };
        model.check()?;
        Ok(model)
    }
}

impl SoftmaxModel {
    /// A model from explicit parameters with an identity feature standardizer.
    pub fn from_params(params: Params) -> Result<Self> {
        if params.dim == 0 || !params.dim.is_multiple_of(2) {
            return Err(Error::Dimension("model input dimension must be 2K".into()));
        }
        if params.weights.len() != params.n_classes * params.dim || params.bias.len() != params.n_classes {
            return Err(Error::Dimension("parameter arrays disagree with C and dim".into()));
        }
        let model = Self {
            standardizer: Standardizer {
                means: vec![0.0; params.dim],
                stds: vec![1.0; params.dim],
            },
            params,
            train_config: TrainConfig::default(),
            report: None,
            feature_fingerprint: None,
            classes: None,
        };
        model.check()?;
        Ok(model)
    }

    fn check(&self) -> Result<()> {
        if self.params.n_classes < 2 {
            return Err(Error::Config("a classifier needs at least 2 classes".into()));
        }
        if self.classes.as_ref().is_some_and(|c| c.len() != self.params.n_classes) {
            return Err(Error::Dimension("class names disagree with C".into()));
        }
        if self
            .params
            .weights
            .iter()
            .chain(&self.params.bias)
            .any(|v| !v.is_finite())
        {
            return Err(Error::NonFinite("model parameters".into()));
        }
        Ok(())
    }

    pub fn n_classes(&self) -> usize {
        self.params.n_classes
    }

    pub fn n_bands(&self) -> usize {
        self.params.dim / 2
    }

    pub fn params(&self) -> &Params {
        &self.params
    }

    pub fn report(&self) -> Option<&TrainReport> {
        self.report.as_ref()
    }

    pub fn train_config(&self) -> &TrainConfig {
        &self.train_config
    }

    pub fn feature_fingerprint(&self) -> Option<&str> {
        self.feature_fingerprint.as_deref()
    }

    pub fn with_feature_fingerprint(mut self, fingerprint: impl Into<String>) -> Self {
        self.feature_fingerprint = Some(fingerprint.into());
        self
    }

    pub fn classes(&self) -> Option<&[String]> {
        self.classes.as_deref()
    }

    /// Attaches scene names, one per class index.
    pub fn with_classes(mut self, classes: Vec<String>) -> Result<Self> {
        self.classes = Some(classes);
        self.check()?;
        Ok(self)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
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

/// Trains on pooled features. Labels are class indices `0..C`, `C = max label + 1`.
pub fn train(features: &[PooledFeatures], labels: &[usize], config: &TrainConfig) -> Result<SoftmaxModel> {
    config.validate()?;
    if features.len() != labels.len() {
        return Err(Error::Dimension(format!(
            "{} feature rows, {} labels",
            features.len(),
            labels.len()
        )));
    }
    let first = labels.first().ok_or_else(|| Error::Config("no training data".into()))?;
    if labels.iter().all(|l| l == first) {
        return Err(Error::Config("training data contains a single class".into()));
    }
    let dim = features[0].values().len();
    if features.iter().any(|f| f.values().len() != dim) {
        return Err(Error::Dimension("pooled feature rows differ in length".into()));
    }
    let n_classes = labels.iter().max().unwrap() + 1;
    let raw: Vec<&[f64]> = features.iter().map(PooledFeatures::values).collect();
    let standardizer = Standardizer::fit(&raw);
    let scaled: Vec<Vec<f64>> = raw.iter().map(|r| standardizer.apply(r)).collect();
    let rows: Vec<&[f64]> = scaled.iter().map(Vec::as_slice).collect();

    let mut params = Params::zeros(n_classes, dim);
    let mut order: Vec<usize> = (0..rows.len()).collect();
    let batch = if config.batch_size == 0 {
        rows.len()
    } else {
        config.batch_size.min(rows.len())
    };
    let mut history = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        if batch < rows.len() {
            order.shuffle(&mut rng(derive_seed(config.seed, &[epoch as u64])));
        }
        for chunk in order.chunks(batch) {
            let (batch_rows, batch_labels): (Vec<&[f64]>, Vec<usize>) =
                chunk.iter().map(|&i| (rows[i], labels[i])).unzip();
            let (_, gw, gb) = objective(&params, &batch_rows, &batch_labels, config.l2_penalty);
            for (w, g) in params.weights.iter_mut().zip(&gw) {
                *w -= config.learning_rate * g;
            }
            for (b, g) in params.bias.iter_mut().zip(&gb) {
                *b -= config.learning_rate * g;
            }
        }
        let (loss, _, _) = objective(&params, &rows, labels, config.l2_penalty);
        if !loss.is_finite() {
            return Err(Error::Diverged { epoch: epoch + 1, loss });
        }
        history.push(loss);
    }

    let mut model = SoftmaxModel {
        params,
        standardizer,
        train_config: config.clone(),
        report: None,
        feature_fingerprint: None,
        classes: None,
    };
    let predictions = predict(&model, features)?;
    let correct = predictions.iter().zip(labels).filter(|(p, &l)| p.label == l).count();
    model.report = Some(TrainReport {
        epochs: config.epochs,
        learning_rate: config.learning_rate,
        final_loss: *history.last().expect("epochs >= 1"),
        train_accuracy: correct as f64 / labels.len() as f64,
        loss_history: history,
    });
    Ok(model)
}

/// Pools a labeled dataset and trains on it; the model remembers the feature fingerprint.
pub fn fit(x: &FeatureDataset, config: &TrainConfig) -> Result<SoftmaxModel> {
    let labels = x.scene_labels().ok_or(Error::MissingLabels("scene"))?;
    Ok(train(&pool(x)?, labels, config)?.with_feature_fingerprint(x.fingerprint()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub label: usize,
    pub probabilities: Vec<f64>,
}

/// Class probabilities and arg-max label (ties go to the lowest index).
pub fn predict(model: &SoftmaxModel, features: &[PooledFeatures]) -> Result<Vec<Prediction>> {
    features
        .iter()
        .map(|f| {
            if f.values().len() != model.params.dim {
                return Err(Error::Dimension(format!(
                    "model expects {} features, got {}",
                    model.params.dim,
                    f.values().len()
                )));
            }
            let probabilities = softmax(&model.params.logits(&model.standardizer.apply(f.values())));
            let label = argmax(&probabilities);
            Ok(Prediction { label, probabilities })
        })
        .collect()
}

fn argmax(values: &[f64]) -> usize {
    values
        .iter()
        .enumerate()
        .fold(
            (0, f64::NEG_INFINITY),
            |best, (i, &v)| if v > best.1 { (i, v) } else { best },
        )
        .0
}

/// Fraction of samples whose predicted label equals the scene label.
pub fn accuracy(model: &SoftmaxModel, x: &FeatureDataset) -> Result<f64> {
    let labels = x.scene_labels().ok_or(Error::MissingLabels("scene"))?;
    if let Some(fp) = model.feature_fingerprint() {
        if fp != x.fingerprint() {
            return Err(Error::FingerprintMismatch {
                stats: fp.to_owned(),
                data: x.fingerprint().to_owned(),
            });
        }
    }
    if x.is_empty() {
        return Err(Error::Dimension("cannot score an empty dataset".into()));
    }
    let predictions = predict(model, &pool(x)?)?;
    let correct = predictions.iter().zip(labels).filter(|(p, &l)| p.label == l).count();
    Ok(correct as f64 / labels.len() as f64)
}

impl Evaluator for SoftmaxModel {
    fn accuracy(&self, data: &FeatureDataset) -> Result<f64> {
        accuracy(self, data)
    }
}
