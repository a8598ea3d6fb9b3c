//! Grayscale PNG rendering of spectral maps.

use std::fs;
use std::path::{Path, PathBuf};

use image::GrayImage;

use crate::error::{Error, Result};
use crate::image::check_finite;
use crate::maps::SpectralMap;

/// The value range that was stretched onto `0..=255`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeatmapRange {
    pub min: f64,
    pub max: f64,
}

/// Pixel values: linear from min (0) to max (255); a constant map is 128.
pub fn heatmap_pixels(map: &SpectralMap) -> Result<(Vec<u8>, HeatmapRange)> {
    check_finite(map.values())?;
    let (min, max) = map.min_max();
    let pixels = if max > min {
        map.values()
            .iter()
            .map(|v| ((v - min) / (max - min) * 255.0).round() as u8)
            .collect()
    } else {
        vec![128; map.values().len()]
    };
    Ok((pixels, HeatmapRange { min, max }))
}

/// Sidecar path recording the range: `heat.png` becomes `heat.range.txt`.
pub fn sidecar_path(out: &Path) -> PathBuf {
    out.with_extension("range.txt")
}

/// Writes the PNG and its `min=`/`max=` sidecar.
pub fn export_heatmap(map: &SpectralMap, out: &Path) -> Result<HeatmapRange> {
    let (pixels, range) = heatmap_pixels(map)?;
    GrayImage::from_raw(map.width() as u32, map.height() as u32, pixels)
        .expect("buffer matches dims")
        .save(out)
        .map_err(|e| Error::data(out, e.to_string()))?;
    fs::write(
        sidecar_path(out),
        format!("min={:?}\nmax={:?}\n", range.min, range.max),
    )?;
    Ok(range)
}
