use crate::error::{Error, Result};
use crate::image::GrayImage;

/// Flattened normalized pixels, one row per sample.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMatrix {
    n_samples: usize,
    n_features: usize,
    values: Vec<f64>,
    labels: Vec<usize>,
}

impl FeatureMatrix {
    /// Rows from raw feature vectors; all values must lie in `[0, 1]`.
    pub fn new(rows: Vec<Vec<f64>>, labels: Vec<usize>) -> Result<Self> {
        if rows.len() != labels.len() {
            return Err(Error::LengthMismatch(rows.len(), labels.len()));
        }
        let n_features = rows.first().map_or(0, Vec::len);
        let mut values = Vec::with_capacity(rows.len() * n_features);
        for r in &rows {
            if r.len() != n_features {
                return Err(Error::ShapeMismatch(format!(
                    "row of {} features, expected {n_features}",
                    r.len()
                )));
            }
            if let Some(v) = r.iter().find(|v| !(0.0..=1.0).contains(*v)) {
                return Err(Error::ShapeMismatch(format!("feature value {v} outside [0, 1]")));
            }
            values.extend_from_slice(r);
        }
        Ok(Self {
            n_samples: rows.len(),
            n_features,
            values,
            labels,
        })
    }

    /// `pixel / 255` for every patch; all patches must share one size.
    pub fn from_images(samples: &[(GrayImage, usize)]) -> Result<Self> {
        let Some((first, _)) = samples.first() else {
            return Ok(Self {
                n_samples: 0,
                n_features: 0,
                values: Vec::new(),
                labels: Vec::new(),
            });
        };
        let (w, h) = (first.width(), first.height());
        let mut values = Vec::with_capacity(samples.len() * w * h);
        for (img, _) in samples {
            if (img.width(), img.height()) != (w, h) {
                return Err(Error::ShapeMismatch(format!(
                    "patch {}x{} in a {w}x{h} feature set",
                    img.width(),
                    img.height()
                )));
            }
            values.extend(img.pixels().iter().map(|&p| p as f64 / 255.0));
        }
        Ok(Self {
            n_samples: samples.len(),
            n_features: w * h,
            values,
            labels: samples.iter().map(|(_, l)| *l).collect(),
        })
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n_features..(i + 1) * self.n_features]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// One more than the largest label.
    pub fn n_classes(&self) -> usize {
        self.labels.iter().max().map_or(0, |m| m + 1)
    }

    /// Population variance of all values.
    pub fn variance(&self) -> f64 {
        if self.values.is_empty() {
            return 0.0;
        }
        let n = self.values.len() as f64;
        let mean = self.values.iter().sum::<f64>() / n;
        self.values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n
    }

    pub fn subset(&self, idx: &[usize]) -> Self {
        let mut values = Vec::with_capacity(idx.len() * self.n_features);
        for &i in idx {
            values.extend_from_slice(self.row(i));
        }
        Self {
            n_samples: idx.len(),
            n_features: self.n_features,
            values,
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
        }
    }
}
