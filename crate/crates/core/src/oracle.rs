//! The prediction contract shared by in-process and external models.

use crate::corpus::LabeledCorpus;
use crate::error::{Error, Result};
use crate::image::Image;

/// Row sums must land within this distance of 1.
pub const PROBABILITY_TOLERANCE: f64 = 1e-6;

/// A deterministic model mapping image batches to class probabilities.
pub trait PredictionOracle: Send + Sync {
    /// Identifier recorded in map metadata.
    fn id(&self) -> String;

    /// One probability vector per image.
    fn predict(&self, batch: &[Image]) -> Result<Vec<Vec<f64>>>;

    /// Mean task loss of the batch. Defaults to cross-entropy of [`predict`].
    ///
    /// [`predict`]: PredictionOracle::predict
    fn loss(&self, batch: &[Image], labels: &[usize]) -> Result<f64> {
        let probs = self.predict(batch)?;
        cross_entropy(&probs, labels)
    }

    /// Whether `predict` may be called from several threads at once.
    fn supports_concurrency(&self) -> bool {
        true
    }
}

impl<O: PredictionOracle + ?Sized> PredictionOracle for &O {
    fn id(&self) -> String {
        (**self).id()
    }

    fn predict(&self, batch: &[Image]) -> Result<Vec<Vec<f64>>> {
        (**self).predict(batch)
    }

    fn loss(&self, batch: &[Image], labels: &[usize]) -> Result<f64> {
        (**self).loss(batch, labels)
    }

    fn supports_concurrency(&self) -> bool {
        (**self).supports_concurrency()
    }
}

/// Mean negative log-likelihood of `labels` under `probs`.
pub fn cross_entropy(probs: &[Vec<f64>], labels: &[usize]) -> Result<f64> {
    if probs.len() != labels.len() || probs.is_empty() {
        return Err(Error::invalid(format!(
            "{} predictions for {} labels",
            probs.len(),
            labels.len()
        )));
    }
    let mut total = 0.0;
    for (p, &y) in probs.iter().zip(labels) {
        let py = *p
            .get(y)
            .ok_or_else(|| Error::invalid(format!("label {y} outside {} classes", p.len())))?;
        total -= py.max(f64::MIN_POSITIVE).ln();
    }
    Ok(total / probs.len() as f64)
}

/// Index of the largest probability; ties go to the lowest index.
pub fn argmax(p: &[f64]) -> usize {
    let mut best = 0;
    for (k, &v) in p.iter().enumerate() {
        if v > p[best] {
            best = k;
        }
    }
    best
}

/// Checks shape and normalization of an oracle response.
pub fn validate_probabilities(probs: &[Vec<f64>], expected_rows: usize) -> Result<()> {
    if probs.len() != expected_rows {
        return Err(Error::invalid(format!(
            "oracle returned {} rows for {expected_rows} images",
            probs.len()
        )));
    }
    let classes = probs.first().map_or(0, Vec::len);
    for (k, row) in probs.iter().enumerate() {
        if row.len() != classes || classes == 0 {
            return Err(Error::invalid(format!("row {k} has {} classes", row.len())));
        }
        if row.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::invalid(format!("row {k} has invalid probabilities")));
        }
        let s: f64 = row.iter().sum();
        if (s - 1.0).abs() > PROBABILITY_TOLERANCE {
            return Err(Error::invalid(format!("row {k} sums to {s}")));
        }
    }
    Ok(())
}

/// Number of misclassified items, evaluating in batches of `batch_size`.
///
/// Oracle failures are reported with the index of the failing batch.
pub fn count_errors<O: PredictionOracle + ?Sized>(
    oracle: &O,
    images: &[Image],
    labels: &[usize],
    batch_size: usize,
) -> Result<usize> {
    let mut errors = 0;
    for (b, (imgs, ys)) in images
        .chunks(batch_size.max(1))
        .zip(labels.chunks(batch_size.max(1)))
        .enumerate()
    {
        let probs = oracle
            .predict(imgs)
            .and_then(|p| validate_probabilities(&p, imgs.len()).map(|_| p))
            .map_err(|e| Error::Oracle {
                batch: b,
                message: e.to_string(),
            })?;
        errors += probs
            .iter()
            .zip(ys)
            .filter(|(p, &y)| argmax(p) != y)
            .count();
    }
    Ok(errors)
}

/// Fraction of correctly classified items.
pub fn accuracy<O: PredictionOracle + ?Sized>(
    oracle: &O,
    corpus: &LabeledCorpus,
    batch_size: usize,
) -> Result<f64> {
    if corpus.is_empty() {
        return Err(Error::invalid("accuracy of an empty corpus"));
    }
    let errors = count_errors(oracle, corpus.images(), corpus.labels(), batch_size)?;
    Ok(1.0 - errors as f64 / corpus.len() as f64)
}

/// Predicts class 0 (or any fixed class) for every input.
#[derive(Debug, Clone)]
pub struct ConstantOracle {
    pub classes: usize,
    pub class: usize,
}

impl PredictionOracle for ConstantOracle {
    fn id(&self) -> String {
        format!("constant-{}", self.class)
    }

    fn predict(&self, batch: &[Image]) -> Result<Vec<Vec<f64>>> {
        let mut row = vec![0.0; self.classes];
        row[self.class] = 1.0;
        Ok(vec![row; batch.len()])
    }
}
