use crate::error::{Error, Result};
use crate::features::Spectrogram;

/// N spectrograms of identical shape M x K, stored contiguously as `[n][m][k]`,
/// with optional per-sample scene and device labels.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureDataset {
    n: usize,
    m: usize,
    k: usize,
    values: Vec<f64>,
    scene_labels: Option<Vec<usize>>,
    device_labels: Option<Vec<String>>,
    fingerprint: String,
}

impl FeatureDataset {
    pub fn new(n: usize, m: usize, k: usize, values: Vec<f64>, fingerprint: impl Into<String>) -> Result<Self> {
        if m == 0 || k == 0 {
            return Err(Error::Dimension("datasets need M >= 1 and K >= 1".into()));
        }
        if values.len() != n * m * k {
            return Err(Error::Dimension(format!(
                "{} values do not form a {n}x{m}x{k} tensor",
                values.len()
            )));
        }
        Ok(Self {
            n,
            m,
            k,
            values,
            scene_labels: None,
            device_labels: None,
            fingerprint: fingerprint.into(),
        })
    }

    pub fn from_spectrograms(spectrograms: &[Spectrogram], fingerprint: impl Into<String>) -> Result<Self> {
        let first = spectrograms
            .first()
            .ok_or_else(|| Error::Dimension("cannot build a dataset from zero spectrograms".into()))?;
        let (m, k) = (first.n_frames(), first.n_bands());
        let mut values = Vec::with_capacity(spectrograms.len() * m * k);
        for (i, s) in spectrograms.iter().enumerate() {
            if (s.n_frames(), s.n_bands()) != (m, k) {
                return Err(Error::Dimension(format!(
                    "spectrogram {i} is {}x{}, expected {m}x{k}",
                    s.n_frames(),
                    s.n_bands()
                )));
            }
            values.extend_from_slice(s.values());
        }
        Self::new(spectrograms.len(), m, k, values, fingerprint)
    }

    pub fn with_scene_labels(mut self, labels: Vec<usize>) -> Result<Self> {
        if labels.len() != self.n {
            return Err(Error::Dimension(format!(
                "{} scene labels for {} samples",
                labels.len(),
                self.n
            )));
        }
        self.scene_labels = Some(labels);
        Ok(self)
    }

    pub fn with_device_labels(mut self, labels: Vec<String>) -> Result<Self> {
        if labels.len() != self.n {
            return Err(Error::Dimension(format!(
                "{} device labels for {} samples",
                labels.len(),
                self.n
            )));
        }
        self.device_labels = Some(labels);
        Ok(self)
    }

    /// Sets every sample's device label to `device`.
    pub fn with_device(self, device: &str) -> Self {
        let n = self.n;
        self.with_device_labels(vec![device.to_owned(); n])
            .expect("length matches")
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    pub fn scene_labels(&self) -> Option<&[usize]> {
        self.scene_labels.as_deref()
    }

    pub fn device_labels(&self) -> Option<&[String]> {
        self.device_labels.as_deref()
    }

    pub fn get(&self, n: usize, m: usize, k: usize) -> f64 {
        self.values[(n * self.m + m) * self.k + k]
    }

    /// The `index`-th spectrogram as a row-major M x K slice.
    pub fn sample(&self, index: usize) -> &[f64] {
        let len = self.m * self.k;
        &self.values[index * len..(index + 1) * len]
    }

    pub fn spectrogram(&self, index: usize) -> Spectrogram {
        Spectrogram::new(self.sample(index).to_vec(), self.m, self.k).expect("dataset values are valid")
    }

    /// Same shape and labels, new values.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        if values.len() != self.values.len() {
            return Err(Error::Dimension(format!(
                "{} replacement values for a tensor of {}",
                values.len(),
                self.values.len()
            )));
        }
        Ok(Self {
            values,
            ..self.clone_meta()
        })
    }

    fn clone_meta(&self) -> Self {
        Self {
            n: self.n,
            m: self.m,
            k: self.k,
            values: Vec::new(),
            scene_labels: self.scene_labels.clone(),
            device_labels: self.device_labels.clone(),
            fingerprint: self.fingerprint.clone(),
        }
    }

    /// Applies `f(k, value)` to every entry.
    pub fn map_bands(&self, f: impl Fn(usize, f64) -> f64) -> Self {
        let k = self.k;
        let values = self.values.iter().enumerate().map(|(i, &v)| f(i % k, v)).collect();
        Self {
            values,
            ..self.clone_meta()
        }
    }

    /// Samples in the given order (indices may repeat).
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.n) {
            return Err(Error::Dimension(format!(
                "index {bad} out of range for {} samples",
                self.n
            )));
        }
        let mut values = Vec::with_capacity(indices.len() * self.m * self.k);
        for &i in indices {
            values.extend_from_slice(self.sample(i));
        }
        Ok(Self {
            n: indices.len(),
            values,
            scene_labels: self
                .scene_labels
                .as_ref()
                .map(|l| indices.iter().map(|&i| l[i]).collect()),
            device_labels: self
                .device_labels
                .as_ref()
                .map(|l| indices.iter().map(|&i| l[i].clone()).collect()),
            ..self.clone_meta()
        })
    }

    /// Stacks datasets along the sample axis. Labels survive only if every part has them.
    pub fn concat(parts: &[&FeatureDataset]) -> Result<Self> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Dimension("cannot concatenate zero datasets".into()))?;
        for p in parts {
            if (p.m, p.k) != (first.m, first.k) {
                return Err(Error::Dimension(format!(
                    "cannot concatenate {}x{} spectrograms with {}x{}",
                    p.m, p.k, first.m, first.k
                )));
            }
            if p.fingerprint != first.fingerprint {
                return Err(Error::FingerprintMismatch {
                    stats: first.fingerprint.clone(),
                    data: p.fingerprint.clone(),
                });
            }
        }
        let values = parts.iter().flat_map(|p| p.values.iter().copied()).collect();
        let scene_labels = parts
            .iter()
            .map(|p| p.scene_labels.clone())
            .collect::<Option<Vec<_>>>()
            .map(|v| v.concat());
        let device_labels = parts
            .iter()
            .map(|p| p.device_labels.clone())
            .collect::<Option<Vec<_>>>()
            .map(|v| v.concat());
        Ok(Self {
            n: parts.iter().map(|p| p.n).sum(),
            m: first.m,
            k: first.k,
            values,
            scene_labels,
            device_labels,
            fingerprint: first.fingerprint.clone(),
        })
    }
}
