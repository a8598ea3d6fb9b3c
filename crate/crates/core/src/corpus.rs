use crate::error::{Error, Result};
use crate::image::{check_uniform, Image};

/// Labeled images, e.g. the source domain.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledCorpus {
    images: Vec<Image>,
    labels: Vec<usize>,
    num_classes: usize,
}

impl LabeledCorpus {
    pub fn new(images: Vec<Image>, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        if images.len() != labels.len() {
            return Err(Error::invalid(format!(
                "{} images but {} labels",
                images.len(),
                labels.len()
            )));
        }
        if !images.is_empty() {
            check_uniform(&images)?;
        }
        if let Some(k) = labels.iter().position(|&l| l >= num_classes) {
            return Err(Error::invalid(format!(
                "label {} of item {k} outside [0, {num_classes})",
                labels[k]
            )));
        }
        Ok(Self {
            images,
            labels,
            num_classes,
        })
    }

    pub fn images(&self) -> &[Image] {
        &self.images
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn dims(&self) -> Option<(usize, usize, usize)> {
        self.images.first().map(Image::dims)
    }

    /// Items at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> LabeledCorpus {
        LabeledCorpus {
            images: indices.iter().map(|&k| self.images[k].clone()).collect(),
            labels: indices.iter().map(|&k| self.labels[k]).collect(),
            num_classes: self.num_classes,
        }
    }

    pub fn into_parts(self) -> (Vec<Image>, Vec<usize>) {
        (self.images, self.labels)
    }
}
