//! Intensity-preserving geometric augmentation of the few-shot target set.
//!
//! Every transform here only moves pixels around: crops are resized with
//! nearest-neighbor sampling, rotations are quarter turns and jigsaw tiles are
//! permuted without blending, so the output contains only intensities present
//! in the input.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{check_uniform, Image};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Flip {
    Horizontal,
    Vertical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AugmentPlan {
    /// Side fraction of the random crop, `[lo, hi]` within `(0, 1]`.
    pub crop_fraction: [f64; 2],
    /// Allowed rotations in quarter turns (0..=3).
    pub quarter_turns: Vec<u8>,
    pub flips: Vec<Flip>,
    pub jigsaw_grid: usize,
    pub samples_per_image: usize,
    /// Probability with which each transform is included in a sample.
    pub include_probability: f64,
    pub seed: u64,
}

impl Default for AugmentPlan {
    fn default() -> Self {
        Self {
            crop_fraction: [0.7, 1.0],
            quarter_turns: vec![1, 2, 3],
            flips: vec![Flip::Horizontal, Flip::Vertical],
            jigsaw_grid: 3,
            samples_per_image: 64,
            include_probability: 0.5,
            seed: 0,
        }
    }
}

impl AugmentPlan {
    pub fn validate(&self) -> Result<()> {
        let [lo, hi] = self.crop_fraction;
        if !(lo > 0.0 && lo <= hi && hi <= 1.0) {
            return Err(Error::invalid(format!(
                "crop fraction range [{lo}, {hi}] must satisfy 0 < lo <= hi <= 1"
            )));
        }
        if self.quarter_turns.iter().any(|&q| q > 3) {
            return Err(Error::invalid("quarter turns must be in 0..=3"));
        }
        if self.jigsaw_grid < 2 {
            return Err(Error::invalid(format!(
                "jigsaw grid must be >= 2, got {}",
                self.jigsaw_grid
            )));
        }
        if !(0.0..=1.0).contains(&self.include_probability) {
            return Err(Error::invalid("include probability must be in [0, 1]"));
        }
        Ok(())
    }
}

/// Tile boundaries along one axis; the last tile absorbs the remainder.
fn tile_bounds(n: usize, g: usize) -> Vec<(usize, usize)> {
    let base = n / g;
    (0..g)
        .map(|t| {
            let start = t * base;
            let end = if t + 1 == g { n } else { start + base };
            (start, end)
        })
        .collect()
}

/// Shuffles `g x g` tiles uniformly at random.
pub fn jigsaw<R: Rng + ?Sized>(image: &Image, grid: usize, rng: &mut R) -> Result<Image> {
    if grid < 2 {
        return Err(Error::invalid(format!("jigsaw grid must be >= 2, got {grid}")));
    }
    let mut perm: Vec<usize> = (0..grid * grid).collect();
    perm.shuffle(rng);
    jigsaw_with_permutation(image, grid, &perm)
}

/// Places source tile `perm[slot]` into each destination `slot` (row-major).
///
/// Tiles of unequal size are truncated to the destination slot, or padded by
/// repeating their last row/column.
pub fn jigsaw_with_permutation(image: &Image, grid: usize, perm: &[usize]) -> Result<Image> {
    let (h, w, ch) = image.dims();
    if grid < 2 {
        return Err(Error::invalid(format!("jigsaw grid must be >= 2, got {grid}")));
    }
    if h < grid || w < grid {
        return Err(Error::invalid(format!(
            "image {h}x{w} too small for a {grid}x{grid} jigsaw"
        )));
    }
    let mut sorted = perm.to_vec();
    sorted.sort_unstable();
    if sorted != (0..grid * grid).collect::<Vec<_>>() {
        return Err(Error::invalid("not a permutation of the tiles"));
    }
    let rows = tile_bounds(h, grid);
    let cols = tile_bounds(w, grid);
    let mut out = image.clone();
    for (slot, &src) in perm.iter().enumerate() {
        let (dr, dc) = (rows[slot / grid], cols[slot % grid]);
        let (sr, sc) = (rows[src / grid], cols[src % grid]);
        for c in 0..ch {
            let plane = out.channel_mut(c);
            for y in dr.0..dr.1 {
                let sy = (sr.0 + (y - dr.0)).min(sr.1 - 1);
                for x in dc.0..dc.1 {
                    let sx = (sc.0 + (x - dc.0)).min(sc.1 - 1);
                    plane[y * w + x] = image.get(c, sy, sx);
                }
            }
        }
    }
    Ok(out)
}

/// Maps every output pixel to a source pixel through `f(row, col) -> (row, col)`.
fn remap(image: &Image, f: impl Fn(usize, usize) -> (usize, usize)) -> Image {
    let (h, w, ch) = image.dims();
    let mut out = image.clone();
    for c in 0..ch {
        let plane = out.channel_mut(c);
        for y in 0..h {
            for x in 0..w {
                let (sy, sx) = f(y, x);
                plane[y * w + x] = image.get(c, sy, sx);
            }
        }
    }
    out
}

/// Crops the `ch x cw` window at `(top, left)` and resizes it back to full
/// size with nearest-neighbor sampling.
pub fn crop_resize(image: &Image, top: usize, left: usize, ch: usize, cw: usize) -> Result<Image> {
    let (h, w, _) = image.dims();
    if ch == 0 || cw == 0 || top + ch > h || left + cw > w {
        return Err(Error::invalid(format!(
            "crop {ch}x{cw} at ({top}, {left}) outside {h}x{w}"
        )));
    }
    Ok(remap(image, |y, x| (top + y * ch / h, left + x * cw / w)))
}

/// Rotates counter-clockwise by `quarter_turns * 90` degrees. Odd turns need a
/// square image.
pub fn rotate(image: &Image, quarter_turns: u8) -> Result<Image> {
    let (h, w, _) = image.dims();
    let q = quarter_turns % 4;
    if q % 2 == 1 && h != w {
        return Err(Error::invalid(format!(
            "odd quarter turns need a square image, got {h}x{w}"
        )));
    }
    Ok(match q {
        0 => image.clone(),
        1 => remap(image, |y, x| (x, w - 1 - y)),
        2 => remap(image, |y, x| (h - 1 - y, w - 1 - x)),
        _ => remap(image, |y, x| (h - 1 - x, y)),
    })
}

pub fn flip(image: &Image, axis: Flip) -> Image {
    let (h, w, _) = image.dims();
    match axis {
        Flip::Horizontal => remap(image, |y, x| (y, w - 1 - x)),
        Flip::Vertical => remap(image, |y, x| (h - 1 - y, x)),
    }
}

/// One random combination of crop, rotate, flip, jigsaw, applied in that order.
pub fn random_geometric<R: Rng + ?Sized>(
    image: &Image,
    plan: &AugmentPlan,
    rng: &mut R,
) -> Result<Image> {
    let (h, w, _) = image.dims();
    let p = plan.include_probability;
    let mut out = image.clone();
    if rng.random_bool(p) {
        let [lo, hi] = plan.crop_fraction;
        let frac = if lo == hi { lo } else { rng.random_range(lo..=hi) };
        let ch = ((frac * h as f64).round() as usize).clamp(1, h);
        let cw = ((frac * w as f64).round() as usize).clamp(1, w);
        let top = rng.random_range(0..=h - ch);
        let left = rng.random_range(0..=w - cw);
        out = crop_resize(&out, top, left, ch, cw)?;
    }
    if rng.random_bool(p) {
        let allowed: Vec<u8> = plan
            .quarter_turns
            .iter()
            .copied()
            .filter(|q| h == w || q % 2 == 0)
            .collect();
        if let Some(&q) = allowed.choose(rng) {
            out = rotate(&out, q)?;
        }
    }
    if rng.random_bool(p) {
        if let Some(&axis) = plan.flips.choose(rng) {
            out = flip(&out, axis);
        }
    }
    if rng.random_bool(p) && h >= plan.jigsaw_grid && w >= plan.jigsaw_grid {
        out = jigsaw(&out, plan.jigsaw_grid, rng)?;
    }
    Ok(out)
}

/// Expands `few_shot` into `K * samples_per_image` geometric variants.
///
/// Output `k * samples_per_image + s` is drawn from ChaCha stream `k *
/// samples_per_image + s` of the plan seed, so results do not depend on the
/// order in which samples are generated.
pub fn augment_target(few_shot: &[Image], plan: &AugmentPlan) -> Result<Vec<Image>> {
    if few_shot.is_empty() {
        return Err(Error::invalid("few-shot target set is empty"));
    }
    check_uniform(few_shot)?;
    plan.validate()?;
    let n = plan.samples_per_image;
    let mut out = Vec::with_capacity(few_shot.len() * n);
    for (k, img) in few_shot.iter().enumerate() {
        for s in 0..n {
            let mut rng = ChaCha8Rng::seed_from_u64(plan.seed);
            rng.set_stream((k * n + s) as u64);
            out.push(random_geometric(img, plan, &mut rng)?);
        }
    }
    Ok(out)
}
