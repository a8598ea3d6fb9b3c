//! Paired synthetic two-domain classification benchmark.
//!
//! Both domains share one generative process: a gray background, a random
//! smooth low-frequency field, a horizontal grating riding on a constant
//! offset, and pixel noise. The class flips the sign of grating and offset
//! together, so class 0 is brighter on average and a model can lean on mean
//! brightness as well as on the grating itself. Target images additionally have every frequency within `low_radius` of DC
//! (including DC) scaled by `target_gain`, plus band-limited noise. All
//! values are clamped to `[0, 1]` and quantized to 8 bits, so a PNG round
//! trip is lossless.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::corpus::LabeledCorpus;
use crate::error::{Error, Result};
use crate::image::Image;
use crate::spectral::{fft2_natural, ifft2_natural, FrequencyIndex};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub size: usize,
    pub source_train: usize,
    pub source_val: usize,
    pub target_train: usize,
    pub target_test: usize,
    pub seed: u64,
    pub background: f64,
    /// Amplitude range of each low-frequency nuisance component.
    pub nuisance_amplitude: f64,
    /// Radius (cycles per image) of the nuisance field.
    pub nuisance_radius: f64,
    pub grating_amplitude: f64,
    /// Grating frequencies, cycles per image.
    pub grating_frequencies: Vec<usize>,
    /// Constant added to the unit grating before the class sign is applied,
    /// so class 1 is darker on average than class 0 when positive.
    pub grating_offset: f64,
    /// Grating phase is drawn uniformly from `[-jitter, jitter]` radians.
    pub phase_jitter: f64,
    pub pixel_noise: f64,
    pub low_radius: f64,
    pub target_gain: f64,
    /// `[lo, hi]` radius band of the target-only noise.
    pub band: [f64; 2],
    pub band_noise: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            size: 32,
            source_train: 2000,
            source_val: 500,
            target_train: 1,
            target_test: 500,
            seed: 0,
            background: 0.3,
            nuisance_amplitude: 0.05,
            nuisance_radius: 2.0,
            grating_amplitude: 0.05,
            grating_frequencies: vec![3],
            phase_jitter: PI / 4.0,
            grating_offset: 2.0,
            pixel_noise: 0.05,
            low_radius: 2.0,
            target_gain: 2.0,
            band: [3.0, 6.0],
            band_noise: 0.02,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SynthDataset {
    pub source_train: LabeledCorpus,
    pub source_val: LabeledCorpus,
    /// Unlabeled few-shot target images.
    pub target_train: Vec<Image>,
    pub target_test: LabeledCorpus,
}

fn quantize(v: f64) -> f64 {
    (v.clamp(0.0, 1.0) * 255.0).round() / 255.0
}

/// Frequencies with `0 < radius <= r`, one per conjugate pair.
fn low_pairs(n: usize, r: f64) -> Vec<(i64, i64)> {
    let r_int = r.floor() as i64;
    let mut out = Vec::new();
    for i in 0..=r_int {
        for j in -r_int..=r_int {
            if (i == 0 && j <= 0) || (i * i + j * j) as f64 > r * r {
                continue;
            }
            if (i as usize) < n / 2 && (j.unsigned_abs() as usize) < n / 2 {
                out.push((i, j));
            }
        }
    }
    out
}

struct Generator<'a> {
    cfg: &'a SynthConfig,
    nuisance: Vec<(i64, i64)>,
    noise: Normal<f64>,
    unit: Normal<f64>,
}

impl<'a> Generator<'a> {
    fn new(cfg: &'a SynthConfig) -> Result<Self> {
        Ok(Self {
            cfg,
            nuisance: low_pairs(cfg.size, cfg.nuisance_radius),
            noise: Normal::new(0.0, cfg.pixel_noise.max(0.0))
                .map_err(|e| Error::invalid(e.to_string()))?,
            unit: Normal::new(0.0, 1.0).expect("unit normal"),
        })
    }

    /// Unquantized source-style image of `class`.
    fn source_like<R: Rng>(&self, class: usize, rng: &mut R) -> Vec<f64> {
        let n = self.cfg.size;
        let mut x = vec![self.cfg.background; n * n];
        let wave = |fi: f64, fj: f64, amp: f64, phase: f64, x: &mut Vec<f64>| {
            for r in 0..n {
                for c in 0..n {
                    let t = 2.0 * PI * (fi * r as f64 + fj * c as f64) / n as f64 + phase;
                    x[r * n + c] += amp * t.cos();
                }
            }
        };
        for &(i, j) in &self.nuisance {
            let amp = rng.random_range(0.0..self.cfg.nuisance_amplitude);
            let ph = rng.random_range(0.0..2.0 * PI);
            wave(i as f64, j as f64, amp, ph, &mut x);
        }
        let freqs = &self.cfg.grating_frequencies;
        let f = freqs[rng.random_range(0..freqs.len())] as f64;
        let ph = rng.random_range(-self.cfg.phase_jitter..=self.cfg.phase_jitter);
        let amp = self.cfg.grating_amplitude * rng.random_range(0.75..1.25);
        let sign = if class == 0 { 1.0 } else { -1.0 };
        wave(f, 0.0, sign * amp, ph, &mut x);
        for v in &mut x {
            *v += sign * amp * self.cfg.grating_offset;
        }
        for v in &mut x {
            *v += self.noise.sample(rng);
        }
        x
    }

    /// Scales the low band (DC included) and adds band-limited noise.
    fn to_target<R: Rng>(&self, x: &[f64], rng: &mut R) -> Result<Vec<f64>> {
        let n = self.cfg.size;
        let mut spec = fft2_natural(x, n, n)?;
        let noise: Vec<f64> = (0..n * n).map(|_| self.unit.sample(rng)).collect();
        let mut noise_spec = fft2_natural(&noise, n, n)?;
        let [lo, hi] = self.cfg.band;
        for k in 0..n {
            for l in 0..n {
                let f = FrequencyIndex::new(
                    if k <= n / 2 { k as i64 } else { k as i64 - n as i64 },
                    if l <= n / 2 { l as i64 } else { l as i64 - n as i64 },
                );
                let r = f.radius();
                if r <= self.cfg.low_radius {
                    spec[k * n + l] *= self.cfg.target_gain;
                }
                if !(lo..=hi).contains(&r) {
                    noise_spec[k * n + l] = Default::default();
                }
            }
        }
        let noise = ifft2_natural(noise_spec, n, n)?;
        // white noise of unit variance keeps a band fraction of its energy
        let kept = noise.iter().map(|z| z.re * z.re).sum::<f64>() / (n * n) as f64;
        let scale = if kept > 0.0 { self.cfg.band_noise / kept.sqrt() } else { 0.0 };
        Ok(ifft2_natural(spec, n, n)?
            .iter()
            .zip(&noise)
            .map(|(a, b)| a.re + scale * b.re)
            .collect())
    }

    fn image(&self, values: Vec<f64>) -> Result<Image> {
        let n = self.cfg.size;
        Image::new(n, n, 1, values.into_iter().map(quantize).collect())
    }
}

/// Builds the four splits. Each split draws from its own ChaCha stream.
pub fn generate(cfg: &SynthConfig) -> Result<SynthDataset> {
    if cfg.size < 8 || cfg.grating_frequencies.is_empty() {
        return Err(Error::invalid("synthetic images need size >= 8 and a grating frequency"));
    }
    let generator = Generator::new(cfg)?;
    let split = |stream: u64, count: usize, target: bool| -> Result<(Vec<Image>, Vec<usize>)> {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(stream);
        let mut images = Vec::with_capacity(count);
        let mut labels = Vec::with_capacity(count);
        for k in 0..count {
            let class = k % 2;
            let mut x = generator.source_like(class, &mut rng);
            if target {
                x = generator.to_target(&x, &mut rng)?;
            }
            images.push(generator.image(x)?);
            labels.push(class);
        }
        Ok((images, labels))
    };
    let (a, b) = split(0, cfg.source_train, false)?;
    let source_train = LabeledCorpus::new(a, b, 2)?;
    let (a, b) = split(1, cfg.source_val, false)?;
    let source_val = LabeledCorpus::new(a, b, 2)?;
    let (target_train, _) = split(2, cfg.target_train, true)?;
    let (a, b) = split(3, cfg.target_test, true)?;
    let target_test = LabeledCorpus::new(a, b, 2)?;
    Ok(SynthDataset {
        source_train,
        source_val,
        target_train,
        target_test,
    })
}
