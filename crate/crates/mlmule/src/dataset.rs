//! Labeled feature datasets and their text interchange format.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// Dense row-major feature matrix with integer class labels and an
/// optional subclass-to-superclass hierarchy.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    features: Vec<f64>,
    n_features: usize,
    labels: Vec<usize>,
    n_classes: usize,
    /// `hierarchy[subclass] = superclass`
    hierarchy: Option<Vec<usize>>,
}

impl LabeledDataset {
    pub fn new(
        features: Vec<f64>,
        n_features: usize,
        labels: Vec<usize>,
        n_classes: usize,
        hierarchy: Option<Vec<usize>>,
    ) -> Result<Self> {
        if n_features == 0 && !labels.is_empty() {
            return Err(Error::validation("dataset with samples needs features"));
        }
        if !labels.is_empty() && features.len() != labels.len() * n_features {
            return Err(Error::validation(format!(
                "feature matrix size {} does not match {} samples x {} features",
                features.len(),
                labels.len(),
                n_features
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= n_classes) {
            return Err(Error::validation(format!(
                "label {bad} out of range for {n_classes} classes"
            )));
        }
        if let Some(h) = &hierarchy {
            if h.len() != n_classes {
                return Err(Error::validation(
                    "hierarchy must map every subclass to exactly one superclass",
                ));
            }
        }
        Ok(LabeledDataset {
            features,
            n_features,
            labels,
            n_classes,
            hierarchy,
        })
    }

    pub fn empty(n_features: usize, n_classes: usize) -> Self {
        LabeledDataset {
            features: Vec::new(),
            n_features,
            labels: Vec::new(),
            n_classes,
            hierarchy: None,
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn feature_row(&self, i: usize) -> &[f64] {
        &self.features[i * self.n_features..(i + 1) * self.n_features]
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn hierarchy(&self) -> Option<&[usize]> {
        self.hierarchy.as_deref()
    }

    pub fn superclass_of(&self, subclass: usize) -> Option<usize> {
        self.hierarchy.as_ref().map(|h| h[subclass])
    }

    pub fn push_row(&mut self, row: &[f64], label: usize) {
        debug_assert_eq!(row.len(), self.n_features);
        debug_assert!(label < self.n_classes);
        self.features.extend_from_slice(row);
        self.labels.push(label);
    }

    /// New dataset holding the given sample indices, in order.
    pub fn subset(&self, indices: &[usize]) -> LabeledDataset {
        let mut features = Vec::with_capacity(indices.len() * self.n_features);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            features.extend_from_slice(self.feature_row(i));
            labels.push(self.labels[i]);
        }
        LabeledDataset {
            features,
            n_features: self.n_features,
            labels,
            n_classes: self.n_classes,
            hierarchy: self.hierarchy.clone(),
        }
    }

    /// Per-class sample counts, indexed by label.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.n_classes];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    /// One sample per line: `label,f1,...,fd`.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for i in 0..self.len() {
            out.push_str(&self.labels[i].to_string());
            for v in self.feature_row(i) {
                out.push(',');
                out.push_str(&format!("{v}"));
            }
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str, path_label: &str) -> Result<LabeledDataset> {
        let mut features = Vec::new();
        let mut labels = Vec::new();
        let mut n_features = 0usize;
        for (idx, raw) in text.lines().enumerate() {
            let lineno = idx + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut parts = line.split(',');
            let label: usize = parts
                .next()
                .unwrap()
                .trim()
                .parse()
                .map_err(|_| Error::Parse {
                    path: path_label.to_string(),
                    line: lineno,
                    msg: "bad label".to_string(),
                })?;
            let row: Vec<f64> = parts
                .map(|p| p.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| Error::Parse {
                    path: path_label.to_string(),
                    line: lineno,
                    msg: "bad feature value".to_string(),
                })?;
            if labels.is_empty() {
                n_features = row.len();
            } else if row.len() != n_features {
                return Err(Error::Parse {
                    path: path_label.to_string(),
                    line: lineno,
                    msg: format!("expected {n_features} features, got {}", row.len()),
                });
            }
            features.extend(row);
            labels.push(label);
        }
        let n_classes = labels.iter().copied().max().map_or(0, |m| m + 1);
        LabeledDataset::new(features, n_features, labels, n_classes, None)
    }

    pub fn write_file(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn read_file(path: &Path) -> Result<LabeledDataset> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        LabeledDataset::from_text(&text, &path.display().to_string())
    }
}
