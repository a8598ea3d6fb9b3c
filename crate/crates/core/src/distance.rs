//! Per-frequency amplitude distributions and the domain-distance map.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::image::{check_uniform, Image};
use crate::maps::{DistanceMap, SpectralMap};
use crate::spectral::{fft2, half_plane};

/// Amplitude samples of a corpus, grouped by frequency.
///
/// Channels are pooled: each frequency holds `images * channels` values.
#[derive(Debug, Clone, PartialEq)]
pub struct AmplitudeSamples {
    height: usize,
    width: usize,
    count: usize,
    /// Frequency-major: `values[f * count + n]`, `f` a centered offset.
    values: Vec<f64>,
}

impl AmplitudeSamples {
    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// Samples per frequency.
    pub fn count(&self) -> usize {
        self.count
    }

    /// Samples at centered offset `f`.
    pub fn at_offset(&self, f: usize) -> &[f64] {
        &self.values[f * self.count..(f + 1) * self.count]
    }
}

pub fn collect_amplitudes(corpus: &[Image]) -> Result<AmplitudeSamples> {
    let (h, w, ch) = check_uniform(corpus)?;
    let count = corpus.len() * ch;
    let mut values = vec![0.0; h * w * count];
    let mut n = 0;
    for img in corpus {
        for c in 0..ch {
            let spec = fft2(img.channel(c), h, w)?;
            for (f, &a) in spec.amplitude().iter().enumerate() {
                values[f * count + n] = a;
            }
            n += 1;
        }
    }
    Ok(AmplitudeSamples {
        height: h,
        width: w,
        count,
        values,
    })
}

fn validate_samples(v: &[f64], name: &str) -> Result<()> {
    if v.is_empty() {
        return Err(Error::invalid(format!("{name} sample vector is empty")));
    }
    if let Some(k) = v.iter().position(|x| !x.is_finite() || *x < 0.0) {
        return Err(Error::invalid(format!(
            "{name} sample {k} = {} is not a finite non-negative value",
            v[k]
        )));
    }
    Ok(())
}

fn sorted(v: &[f64]) -> Vec<f64> {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    s
}

/// Empirical quantile `Q(u) = s[ceil(u n) - 1]` of a sorted sample.
fn quantile(sorted: &[f64], u: f64) -> f64 {
    let n = sorted.len();
    let k = ((u * n as f64).ceil() as usize).clamp(1, n);
    sorted[k - 1]
}

/// 1-Wasserstein distance on a grid of `max(|a|, |b|)` quantile levels.
pub fn wasserstein1(a: &[f64], b: &[f64]) -> Result<f64> {
    wasserstein1_on_grid(a, b, a.len().max(b.len()))
}

/// 1-Wasserstein distance between the empirical distributions of `a` and `b`,
/// averaging `|Qa(u) - Qb(u)|` over the midpoints `u = (k + 1/2) / levels`.
///
/// With `|a| = |b| = levels` this is exactly the mean absolute difference of
/// the sorted samples.
pub fn wasserstein1_on_grid(a: &[f64], b: &[f64], levels: usize) -> Result<f64> {
    validate_samples(a, "first")?;
    validate_samples(b, "second")?;
    if levels == 0 {
        return Err(Error::invalid("quantile grid needs at least one level"));
    }
    let (sa, sb) = (sorted(a), sorted(b));
    if sa.len() == levels && sb.len() == levels {
        let total: f64 = sa.iter().zip(&sb).map(|(x, y)| (x - y).abs()).sum();
        return Ok(total / levels as f64);
    }
    let total: f64 = (0..levels)
        .map(|k| {
            let u = (k as f64 + 0.5) / levels as f64;
            (quantile(&sa, u) - quantile(&sb, u)).abs()
        })
        .sum();
    Ok(total / levels as f64)
}

/// `D_W(i, j) = W1(p_S(i, j), p_T(i, j))` over every frequency.
///
/// Computed once per conjugate pair and mirrored, so the map is exactly
/// Hermitian-symmetric. Each entry is computed by a single task.
pub fn distance_map(source: &AmplitudeSamples, target: &AmplitudeSamples) -> Result<DistanceMap> {
    let (h, w) = (source.height, source.width);
    if (target.height, target.width) != (h, w) {
        return Err(Error::shape(format!(
            "source spectra are {h}x{w} but target spectra are {}x{}",
            target.height, target.width
        )));
    }
    let pairs = half_plane(h, w);
    let entries: Vec<f64> = pairs
        .par_iter()
        .map(|f| {
            let off = f.centered_offset(h, w);
            wasserstein1(source.at_offset(off), target.at_offset(off))
        })
        .collect::<Result<_>>()?;
    let mut values = vec![0.0; h * w];
    for (f, d) in pairs.iter().zip(entries) {
        values[f.centered_offset(h, w)] = d;
        values[f.conjugate(h, w).centered_offset(h, w)] = d;
    }
    Ok(DistanceMap {
        map: SpectralMap::new(h, w, values)?,
        source_id: String::new(),
        target_id: String::new(),
        source_samples: source.count,
        target_samples: target.count,
    })
}
