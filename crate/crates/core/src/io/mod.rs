//! File formats, corpora on disk, configuration and the external-model protocol.

pub mod checkpoint;
pub mod config;
pub mod dataset;
pub mod heatmap;
pub mod mapfile;
pub mod protocol;
