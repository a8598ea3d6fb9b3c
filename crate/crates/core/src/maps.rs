//! Centered per-frequency maps and their summaries.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::spectral::FrequencyIndex;

/// An `h x w` real map in centered frequency layout.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralMap {
    height: usize,
    width: usize,
    values: Vec<f64>,
}

impl SpectralMap {
    pub fn new(height: usize, width: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != height * width {
            return Err(Error::shape(format!(
                "map {height}x{width} needs {} values, got {}",
                height * width,
                values.len()
            )));
        }
        Ok(Self {
            height,
            width,
            values,
        })
    }

    pub fn constant(height: usize, width: usize, value: f64) -> Self {
        Self {
            height,
            width,
            values: vec![value; height * width],
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn at(&self, idx: FrequencyIndex) -> f64 {
        self.values[idx.centered_offset(self.height, self.width)]
    }

    /// Mean absolute entry (the averaged l1 norm).
    pub fn mean_l1(&self) -> f64 {
        self.values.iter().map(|v| v.abs()).sum::<f64>() / self.values.len() as f64
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }

    /// Largest `|M(f) - M(conj f)|` over all frequencies.
    pub fn hermitian_defect(&self) -> f64 {
        let (h, w) = (self.height, self.width);
        (0..h * w)
            .map(|k| {
                let f = FrequencyIndex::from_centered(k / w, k % w, h, w);
                (self.values[k] - self.at(f.conjugate(h, w))).abs()
            })
            .fold(0.0, f64::max)
    }
}

/// Per-frequency 1-Wasserstein distances between two corpora.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMap {
    pub map: SpectralMap,
    pub source_id: String,
    pub target_id: String,
    pub source_samples: usize,
    pub target_samples: usize,
}

impl DistanceMap {
    pub fn metadata(&self) -> BTreeMap<String, String> {
        BTreeMap::from([
            ("source".to_string(), self.source_id.clone()),
            ("target".to_string(), self.target_id.clone()),
            ("source_samples".to_string(), self.source_samples.to_string()),
            ("target_samples".to_string(), self.target_samples.to_string()),
        ])
    }
}

/// Per-frequency error rates of a model under basis perturbations.
#[derive(Debug, Clone, PartialEq)]
pub struct SensitivityMap {
    pub map: SpectralMap,
    pub oracle_id: String,
    pub dataset_size: usize,
    pub seed: u64,
    pub clean_error: f64,
}

impl SensitivityMap {
    /// Map with every entry set to `value`, e.g. for ablations.
    pub fn uniform(height: usize, width: usize, value: f64) -> Self {
        Self {
            map: SpectralMap::constant(height, width, value),
            oracle_id: "uniform".into(),
            dataset_size: 0,
            seed: 0,
            clean_error: value,
        }
    }

    pub fn metadata(&self) -> BTreeMap<String, String> {
        BTreeMap::from([
            ("oracle".to_string(), self.oracle_id.clone()),
            ("dataset_size".to_string(), self.dataset_size.to_string()),
            ("seed".to_string(), self.seed.to_string()),
            ("clean_error".to_string(), format!("{:?}", self.clean_error)),
        ])
    }
}
