//! Spectral domain-distance maps, model spectral sensitivity, and
//! sensitivity-guided adversarial amplitude mixup for few-shot domain
//! adaptation, with a small in-repo classifier to exercise the whole loop.

pub mod augment;
pub mod cli;
pub mod corpus;
pub mod distance;
pub mod dodiss;
pub mod error;
pub mod image;
pub mod io;
pub mod maps;
pub mod model;
pub mod oracle;
pub mod pipeline;
pub mod samix;
pub mod spectral;
pub mod synth;
pub mod train;

pub use corpus::LabeledCorpus;
pub use error::{Error, Result};
pub use image::Image;
pub use maps::{DistanceMap, SensitivityMap, SpectralMap};
pub use oracle::PredictionOracle;
