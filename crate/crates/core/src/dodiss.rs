//! Domain-distance-modulated spectral sensitivity.
//!
//! `M(i, j) = 1 - Acc(F(x + r * D_W(i, j) * U_ij), y)` over the labeled
//! source corpus, with `r` drawn uniformly from `{-1, +1}`.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::LabeledCorpus;
use crate::error::{Error, Result};
use crate::image::Image;
use crate::maps::{DistanceMap, SensitivityMap, SpectralMap};
use crate::oracle::{count_errors, PredictionOracle};
use crate::spectral::{add_basis, fourier_basis, half_plane, FrequencyIndex, Sign};

/// How the sign `r` is shared across the channels of one image.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SignMode {
    #[default]
    PerChannel,
    Shared,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DodissConfig {
    pub seed: u64,
    pub sign_mode: SignMode,
    /// Average the error rates of `r` and `-r` instead of a single draw.
    pub both_signs: bool,
    pub batch_size: usize,
    /// Evaluate on a seeded random subset of at most this many items.
    pub max_samples: Option<usize>,
    /// Clamp perturbed images into `[0, 1]` before prediction.
    pub clamp: bool,
    /// Divide every distance by `sqrt(h*w)` before perturbing, so a distance
    /// measured on raw FFT amplitudes becomes a pixel-space l2 norm.
    pub parseval_units: bool,
}

impl Default for DodissConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            sign_mode: SignMode::PerChannel,
            both_signs: false,
            batch_size: 128,
            max_samples: None,
            clamp: false,
            parseval_units: false,
        }
    }
}

fn draw_signs<R: Rng + ?Sized>(n: usize, channels: usize, mode: SignMode, rng: &mut R) -> Vec<Vec<Sign>> {
    (0..n)
        .map(|_| match mode {
            SignMode::PerChannel => (0..channels).map(|_| Sign::random(rng)).collect(),
            SignMode::Shared => vec![Sign::random(rng); channels],
        })
        .collect()
}

fn error_rate_with_signs<O: PredictionOracle + ?Sized>(
    oracle: &O,
    corpus: &LabeledCorpus,
    basis: &[f64],
    magnitude: f64,
    signs: &[Vec<Sign>],
    cfg: &DodissConfig,
) -> Result<f64> {
    let mut perturbed: Vec<Image> = Vec::with_capacity(corpus.len());
    for (img, s) in corpus.images().iter().zip(signs) {
        let p = add_basis(img, basis, magnitude, s)?;
        perturbed.push(if cfg.clamp { p.clamped() } else { p });
    }
    let errors = count_errors(oracle, &perturbed, corpus.labels(), cfg.batch_size)?;
    Ok(errors as f64 / corpus.len() as f64)
}

/// Error rate of `oracle` on `corpus` perturbed at `idx` with `magnitude`.
pub fn sensitivity_at<O, R>(
    oracle: &O,
    corpus: &LabeledCorpus,
    idx: FrequencyIndex,
    magnitude: f64,
    rng: &mut R,
    cfg: &DodissConfig,
) -> Result<f64>
where
    O: PredictionOracle + ?Sized,
    R: Rng + ?Sized,
{
    let (h, w, ch) = corpus
        .dims()
        .ok_or_else(|| Error::invalid("sensitivity of an empty corpus"))?;
    let basis = fourier_basis(idx, h, w)?;
    let signs = draw_signs(corpus.len(), ch, cfg.sign_mode, rng);
    let rate = error_rate_with_signs(oracle, corpus, &basis, magnitude, &signs, cfg)?;
    if !cfg.both_signs {
        return Ok(rate);
    }
    let flipped: Vec<Vec<Sign>> = signs
        .iter()
        .map(|s| s.iter().map(|x| x.flip()).collect())
        .collect();
    let other = error_rate_with_signs(oracle, corpus, &basis, magnitude, &flipped, cfg)?;
    Ok(0.5 * (rate + other))
}

/// Items the map is evaluated on: the whole corpus, or a seeded subset.
pub fn evaluation_subset(corpus: &LabeledCorpus, cfg: &DodissConfig) -> LabeledCorpus {
    match cfg.max_samples {
        Some(cap) if cap < corpus.len() => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(u64::MAX);
            let mut idx = sample(&mut rng, corpus.len(), cap).into_vec();
            idx.sort_unstable();
            corpus.select(&idx)
        }
        _ => corpus.clone(),
    }
}

/// Sensitivity at every frequency, each perturbed by its domain distance.
///
/// Frequency `f` draws its signs from ChaCha stream `offset(f)` of the seed,
/// so the map is independent of evaluation order. Conjugate pairs share one
/// evaluation and the result is mirrored.
pub fn dodiss_map<O: PredictionOracle + ?Sized>(
    oracle: &O,
    corpus: &LabeledCorpus,
    dmap: &DistanceMap,
    cfg: &DodissConfig,
) -> Result<SensitivityMap> {
    let (h, w, _) = corpus
        .dims()
        .ok_or_else(|| Error::invalid("sensitivity of an empty corpus"))?;
    if (dmap.map.height(), dmap.map.width()) != (h, w) {
        return Err(Error::shape(format!(
            "distance map is {}x{} but images are {h}x{w}",
            dmap.map.height(),
            dmap.map.width()
        )));
    }
    let eval = evaluation_subset(corpus, cfg);
    let clean = count_errors(oracle, eval.images(), eval.labels(), cfg.batch_size)? as f64
        / eval.len() as f64;

    let scale = if cfg.parseval_units { 1.0 / ((h * w) as f64).sqrt() } else { 1.0 };
    let freqs = half_plane(h, w);
    let eval_one = |f: &FrequencyIndex| {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(f.centered_offset(h, w) as u64);
        sensitivity_at(oracle, &eval, *f, dmap.map.at(*f) * scale, &mut rng, cfg)
    };
    let rates: Vec<f64> = if oracle.supports_concurrency() {
        freqs.par_iter().map(eval_one).collect::<Result<_>>()?
    } else {
        freqs.iter().map(eval_one).collect::<Result<_>>()?
    };
    let mut values = vec![0.0; h * w];
    for (f, r) in freqs.iter().zip(rates) {
        values[f.centered_offset(h, w)] = r;
        values[f.conjugate(h, w).centered_offset(h, w)] = r;
    }
    Ok(SensitivityMap {
        map: SpectralMap::new(h, w, values)?,
        oracle_id: oracle.id(),
        dataset_size: eval.len(),
        seed: cfg.seed,
        clean_error: clean,
    })
}
