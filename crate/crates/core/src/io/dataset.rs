//! PNG corpora on disk.
//!
//! A corpus is a directory of 8-bit grayscale or RGB PNG files read in
//! lexicographic filename order, with an optional `filename,label` CSV.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use image::{DynamicImage, GrayImage, RgbImage};

use crate::corpus::LabeledCorpus;
use crate::error::{Error, Result};
use crate::image::Image;

/// Images of one directory together with their file names.
#[derive(Debug, Clone)]
pub struct ImageSet {
    pub names: Vec<String>,
    pub images: Vec<Image>,
}

fn png_names(dir: &Path) -> Result<Vec<String>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::data(dir, e.to_string()))?;
    let mut names = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::data(dir, e.to_string()))?;
        let path = entry.path();
        let is_png = path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| e.eq_ignore_ascii_case("png"));
        if is_png && path.is_file() {
            let name = entry
                .file_name()
                .into_string()
                .map_err(|n| Error::data(dir, format!("non UTF-8 file name {n:?}")))?;
            names.push(name);
        }
    }
    names.sort();
    Ok(names)
}

pub fn decode_png(path: &Path) -> Result<Image> {
    let img = image::open(path).map_err(|e| Error::data(path, e.to_string()))?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let planes = match img {
        DynamicImage::ImageLuma8(g) => vec![g.into_raw()],
        DynamicImage::ImageLumaA8(_) => vec![img.to_luma8().into_raw()],
        DynamicImage::ImageRgb8(_) | DynamicImage::ImageRgba8(_) => {
            let rgb = img.to_rgb8().into_raw();
            (0..3).map(|c| rgb.iter().skip(c).step_by(3).copied().collect()).collect()
        }
        other => {
            return Err(Error::data(
                path,
                format!("unsupported pixel format {:?}, expected 8-bit gray or RGB", other.color()),
            ))
        }
    };
    let planes = planes
        .into_iter()
        .map(|p: Vec<u8>| p.into_iter().map(|v| v as f64 / 255.0).collect())
        .collect();
    Image::from_planes(h, w, planes).map_err(|e| Error::data(path, e.to_string()))
}

/// Reads every PNG in `dir`; all must share one shape.
pub fn load_images(dir: &Path) -> Result<ImageSet> {
    let names = png_names(dir)?;
    if names.is_empty() {
        return Err(Error::data(dir, "no PNG images found"));
    }
    let mut images: Vec<Image> = Vec::with_capacity(names.len());
    for name in &names {
        let path = dir.join(name);
        let img = decode_png(&path)?;
        if let Some(first) = images.first() {
            if first.dims() != img.dims() {
                return Err(Error::data(
                    &path,
                    format!("dims {:?} differ from {:?} of {}", img.dims(), first.dims(), names[0]),
                ));
            }
        }
        images.push(img);
    }
    Ok(ImageSet { names, images })
}

/// Reads a `filename,label` CSV. A first row whose label is not an integer
/// is taken as a header.
pub fn read_labels(path: &Path) -> Result<Vec<(String, usize)>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::data(path, e.to_string()))?;
    let mut out = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::data(path, e.to_string()))?;
        if record.len() != 2 {
            return Err(Error::data(path, format!("row {}: expected filename,label", row + 1)));
        }
        match record[1].parse::<usize>() {
            Ok(label) => out.push((record[0].to_string(), label)),
            Err(_) if row == 0 => continue,
            Err(_) => {
                return Err(Error::data(
                    path,
                    format!("row {}: label {:?} is not a class index", row + 1, &record[1]),
                ))
            }
        }
    }
    Ok(out)
}

/// Images of `dir` labeled by `labels_csv`. The class count is the largest
/// label plus one, at least 2.
pub fn load_corpus(dir: &Path, labels_csv: &Path) -> Result<(Vec<String>, LabeledCorpus)> {
    let set = load_images(dir)?;
    let mut table: HashMap<String, usize> = HashMap::new();
    for (name, label) in read_labels(labels_csv)? {
        if !set.names.contains(&name) {
            return Err(Error::data(
                labels_csv,
                format!("label given for {name}, which is not an image in {}", dir.display()),
            ));
        }
        if table.insert(name.clone(), label).is_some() {
            return Err(Error::data(labels_csv, format!("{name} is labeled twice")));
        }
    }
    let labels = set
        .names
        .iter()
        .map(|n| {
            table
                .get(n)
                .copied()
                .ok_or_else(|| Error::data(dir.join(n), "image has no label"))
        })
        .collect::<Result<Vec<_>>>()?;
    let classes = labels.iter().max().map_or(2, |m| (m + 1).max(2));
    let corpus = LabeledCorpus::new(set.images, labels, classes)?;
    Ok((set.names, corpus))
}

fn to_u8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Writes `img` as an 8-bit PNG, clamping into `[0, 1]`.
pub fn save_png(img: &Image, path: &Path) -> Result<()> {
    let (h, w, c) = img.dims();
    let result = if c == 1 {
        GrayImage::from_raw(w as u32, h as u32, img.data().iter().map(|&v| to_u8(v)).collect())
            .expect("buffer matches dims")
            .save(path)
    } else {
        let n = h * w;
        let buf = (0..n * 3).map(|k| to_u8(img.data()[(k % 3) * n + k / 3])).collect();
        RgbImage::from_raw(w as u32, h as u32, buf)
            .expect("buffer matches dims")
            .save(path)
    };
    result.map_err(|e| Error::data(path, e.to_string()))
}

/// Writes `images` as `<prefix>_00000.png`, ... into `dir` and returns the
/// file names.
pub fn save_images(images: &[Image], dir: &Path, prefix: &str) -> Result<Vec<String>> {
    fs::create_dir_all(dir)?;
    images
        .iter()
        .enumerate()
        .map(|(k, img)| {
            let name = format!("{prefix}_{k:05}.png");
            save_png(img, &dir.join(&name))?;
            Ok(name)
        })
        .collect()
}

/// Writes a corpus plus `labels.csv`; returns the CSV path.
pub fn save_corpus(corpus: &LabeledCorpus, dir: &Path, prefix: &str) -> Result<PathBuf> {
    let names = save_images(corpus.images(), dir, prefix)?;
    let path = dir.join("labels.csv");
    let mut w = csv::Writer::from_path(&path).map_err(|e| Error::data(&path, e.to_string()))?;
    let mut write = |a: &str, b: &str| w.write_record([a, b]).map_err(|e| Error::data(&path, e.to_string()));
    write("filename", "label")?;
    for (name, label) in names.iter().zip(corpus.labels()) {
        write(name, &label.to_string())?;
    }
    w.flush()?;
    Ok(path)
}
