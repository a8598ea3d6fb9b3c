//! Sensitivity-guided amplitude mixup with an adversarial mixing weight.
//!
//! The mixed amplitude is `lambda * M * A_t + (1 - lambda) * (1 - M) * A_s`,
//! recombined with the source phase. Note that at `lambda = 0` this gives
//! `(1 - M) * A_s`, not `A_s`: the unmodified source image is only in the
//! mixing family where `M = 0`. [`MixVariant::FaithfulEndpoints`] swaps in the
//! convex blend `lambda * M * A_t + (1 - lambda * M) * A_s` for ablations.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::maps::{SensitivityMap, SpectralMap};
use crate::oracle::PredictionOracle;
use rustfft::num_complex::Complex64;

use crate::spectral::{fft2, ifft2_natural, ifft2_parts, to_natural, Inverse};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MixVariant {
    /// The sensitivity-weighted mix as written.
    #[default]
    Literal,
    /// Convex blend whose `lambda = 0` endpoint is the source amplitude.
    /// Deviates from the literal mix; ablation only.
    FaithfulEndpoints,
}

/// Whether `lambda*` is searched per image or shared by a batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LambdaScope {
    #[default]
    PerImage,
    PerBatch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MixConfig {
    pub iterations: usize,
    pub step: f64,
    pub lambda_init: f64,
    /// Half-width of the central difference.
    pub fd_step: f64,
    pub variant: MixVariant,
    pub scope: LambdaScope,
}

impl Default for MixConfig {
    fn default() -> Self {
        Self {
            iterations: 10,
            step: 0.1,
            lambda_init: 0.5,
            fd_step: 0.01,
            variant: MixVariant::Literal,
            scope: LambdaScope::PerImage,
        }
    }
}

impl MixConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations < 1 {
            return Err(Error::invalid("mix iterations must be >= 1"));
        }
        if !(self.step > 0.0 && self.step.is_finite()) {
            return Err(Error::invalid(format!("mix step must be > 0, got {}", self.step)));
        }
        if !(0.0..=1.0).contains(&self.lambda_init) {
            return Err(Error::invalid(format!(
                "lambda_init must be in [0, 1], got {}",
                self.lambda_init
            )));
        }
        if !(self.fd_step > 0.0 && self.fd_step < 0.5) {
            return Err(Error::invalid(format!(
                "fd_step must be in (0, 0.5), got {}",
                self.fd_step
            )));
        }
        Ok(())
    }
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::invalid(format!("lambda must be in [0, 1], got {lambda}")));
    }
    Ok(())
}

fn check_mix_shapes(a_s: &[f64], a_t: &[f64], m: &[f64]) -> Result<()> {
    if a_s.len() != a_t.len() || a_s.len() != m.len() {
        return Err(Error::shape(format!(
            "amplitude maps {} / {} and sensitivity map {} differ in size",
            a_s.len(),
            a_t.len(),
            m.len()
        )));
    }
    Ok(())
}

/// `lambda * M * A_t + (1 - lambda) * (1 - M) * A_s`, elementwise.
pub fn mix_amplitude(a_s: &[f64], a_t: &[f64], m: &[f64], lambda: f64) -> Result<Vec<f64>> {
    check_mix_shapes(a_s, a_t, m)?;
    check_lambda(lambda)?;
    Ok(a_s
        .iter()
        .zip(a_t)
        .zip(m)
        .map(|((&s, &t), &m)| lambda * m * t + (1.0 - lambda) * (1.0 - m) * s)
        .collect())
}

/// `lambda * M * A_t + (1 - lambda * M) * A_s`, elementwise.
pub fn mix_amplitude_faithful(a_s: &[f64], a_t: &[f64], m: &[f64], lambda: f64) -> Result<Vec<f64>> {
    check_mix_shapes(a_s, a_t, m)?;
    check_lambda(lambda)?;
    Ok(a_s
        .iter()
        .zip(a_t)
        .zip(m)
        .map(|((&s, &t), &m)| lambda * m * t + (1.0 - lambda * m) * s)
        .collect())
}

/// Real image from a mixed amplitude and the source phase.
pub fn reconstruct(a_mixed: &[f64], phase_source: &[f64], h: usize, w: usize) -> Result<Inverse> {
    ifft2_parts(a_mixed, phase_source, h, w)
}

/// Precomputed spectra of one source/target pair.
#[derive(Debug, Clone)]
pub struct MixPair {
    height: usize,
    width: usize,
    source_amp: Vec<Vec<f64>>,
    source_phase: Vec<Vec<f64>>,
    /// `exp(i * phase)` of the source, natural order.
    source_phasor: Vec<Vec<Complex64>>,
    target_amp: Vec<Vec<f64>>,
}

impl MixPair {
    pub fn new(source: &Image, target: &Image) -> Result<Self> {
        if source.dims() != target.dims() {
            return Err(Error::shape(format!(
                "source {:?} and target {:?} differ",
                source.dims(),
                target.dims()
            )));
        }
        let (h, w, ch) = source.dims();
        let mut pair = MixPair {
            height: h,
            width: w,
            source_amp: Vec::with_capacity(ch),
            source_phase: Vec::with_capacity(ch),
            source_phasor: Vec::with_capacity(ch),
            target_amp: Vec::with_capacity(ch),
        };
        for c in 0..ch {
            let (a, p) = fft2(source.channel(c), h, w)?.into_parts();
            let phasor: Vec<Complex64> = p.iter().map(|&t| Complex64::from_polar(1.0, t)).collect();
            pair.source_phasor.push(to_natural(&phasor, h, w));
            pair.source_amp.push(a);
            pair.source_phase.push(p);
            pair.target_amp.push(fft2(target.channel(c), h, w)?.into_parts().0);
        }
        Ok(pair)
    }

    pub fn source_phase(&self, channel: usize) -> &[f64] {
        &self.source_phase[channel]
    }

    /// Mixed image at `lambda`; every channel shares `lambda` and `m`.
    pub fn render(&self, m: &SpectralMap, lambda: f64, variant: MixVariant) -> Result<Image> {
        let (h, w) = (self.height, self.width);
        if (m.height(), m.width()) != (h, w) {
            return Err(Error::shape(format!(
                "sensitivity map is {}x{} but images are {h}x{w}",
                m.height(),
                m.width()
            )));
        }
        let mut planes = Vec::with_capacity(self.source_amp.len());
        for c in 0..self.source_amp.len() {
            let mixed = match variant {
                MixVariant::Literal => {
                    mix_amplitude(&self.source_amp[c], &self.target_amp[c], m.values(), lambda)?
                }
                MixVariant::FaithfulEndpoints => mix_amplitude_faithful(
                    &self.source_amp[c],
                    &self.target_amp[c],
                    m.values(),
                    lambda,
                )?,
            };
            let coeffs: Vec<Complex64> = to_natural(&mixed, h, w)
                .into_iter()
                .zip(&self.source_phasor[c])
                .map(|(a, z)| z * a)
                .collect();
            planes.push(ifft2_natural(coeffs, h, w)?.into_iter().map(|z| z.re).collect());
        }
        Image::from_planes(h, w, planes)
    }
}

/// Outcome of the adversarial search for one image (or batch).
#[derive(Debug, Clone, PartialEq)]
pub struct MixResult {
    pub lambda_star: f64,
    pub image: Image,
    /// Loss at the initial lambda followed by the loss after each step.
    pub loss_trace: Vec<f64>,
}

/// Projected gradient ascent of `loss` over `lambda in [0, 1]`.
///
/// The derivative is a central difference over `lambda +- fd_step` (clipped
/// into `[0, 1]`). Each step is `step * g / n`, where `n` is the largest
/// `|g|` seen so far: the first move has length `step` and later moves shrink
/// as the slope flattens. A derivative of exactly zero leaves `lambda` alone.
/// Returns `lambda` after all iterations and the loss trace.
pub fn projected_ascent<F>(mut loss: F, cfg: &MixConfig) -> Result<(f64, Vec<f64>)>
where
    F: FnMut(f64) -> Result<f64>,
{
    cfg.validate()?;
    let mut eval = |lambda: f64| -> Result<f64> {
        let v = loss(lambda)?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::NonFiniteLoss { lambda })
        }
    };
    let mut lambda = cfg.lambda_init;
    let mut current = eval(lambda)?;
    let mut trace = Vec::with_capacity(cfg.iterations + 1);
    trace.push(current);
    let mut scale = 0.0f64;
    for _ in 0..cfg.iterations {
        let lo = (lambda - cfg.fd_step).max(0.0);
        let hi = (lambda + cfg.fd_step).min(1.0);
        let g = (eval(hi)? - eval(lo)?) / (hi - lo);
        if g != 0.0 {
            scale = scale.max(g.abs());
            let next = (lambda + cfg.step * g / (scale + 1e-12)).clamp(0.0, 1.0);
            if next != lambda {
                lambda = next;
                current = eval(lambda)?;
            }
        }
        trace.push(current);
    }
    Ok((lambda, trace))
}

/// Searches the mixing weight that maximizes the task loss of the mixed image.
pub fn adversarial_lambda<O: PredictionOracle + ?Sized>(
    oracle: &O,
    x_s: &Image,
    y_s: usize,
    x_t: &Image,
    sensitivity: &SensitivityMap,
    cfg: &MixConfig,
) -> Result<MixResult> {
    let pair = MixPair::new(x_s, x_t)?;
    let m = &sensitivity.map;
    let (lambda_star, loss_trace) = projected_ascent(
        |lambda| {
            let img = pair.render(m, lambda, cfg.variant)?;
            oracle.loss(std::slice::from_ref(&img), &[y_s])
        },
        cfg,
    )?;
    Ok(MixResult {
        lambda_star,
        image: pair.render(m, lambda_star, cfg.variant)?,
        loss_trace,
    })
}

/// One augmented sample produced by [`generate_batch`].
#[derive(Debug, Clone, PartialEq)]
pub struct MixedSample {
    pub source_index: usize,
    pub target_index: usize,
    pub lambda_star: f64,
    pub image: Image,
    pub final_loss: f64,
}

/// Pairs every source image with a uniformly drawn target and mixes them
/// adversarially.
///
/// Item `k` draws its target from a ChaCha stream seeded by the `k`-th value
/// taken from `rng`, so results do not depend on scheduling.
pub fn generate_batch<O, R>(
    oracle: &O,
    sources: &[Image],
    labels: &[usize],
    target_pool: &[Image],
    sensitivity: &SensitivityMap,
    cfg: &MixConfig,
    rng: &mut R,
) -> Result<Vec<MixedSample>>
where
    O: PredictionOracle + ?Sized,
    R: RngCore + ?Sized,
{
    if target_pool.is_empty() {
        return Err(Error::invalid("target pool is empty"));
    }
    if sources.len() != labels.len() {
        return Err(Error::invalid(format!(
            "{} source images but {} labels",
            sources.len(),
            labels.len()
        )));
    }
    cfg.validate()?;
    let targets: Vec<usize> = (0..sources.len())
        .map(|_| {
            let mut item = ChaCha8Rng::seed_from_u64(rng.next_u64());
            item.random_range(0..target_pool.len())
        })
        .collect();

    if cfg.scope == LambdaScope::PerBatch {
        return mix_shared_lambda(oracle, sources, labels, target_pool, &targets, sensitivity, cfg);
    }

    let one = |k: usize| -> Result<MixedSample> {
        let t = targets[k];
        let r = adversarial_lambda(oracle, &sources[k], labels[k], &target_pool[t], sensitivity, cfg)?;
        Ok(MixedSample {
            source_index: k,
            target_index: t,
            lambda_star: r.lambda_star,
            image: r.image,
            final_loss: *r.loss_trace.last().expect("trace is never empty"),
        })
    };
    if oracle.supports_concurrency() {
        (0..sources.len()).into_par_iter().map(one).collect()
    } else {
        (0..sources.len()).map(one).collect()
    }
}

fn mix_shared_lambda<O: PredictionOracle + ?Sized>(
    oracle: &O,
    sources: &[Image],
    labels: &[usize],
    target_pool: &[Image],
    targets: &[usize],
    sensitivity: &SensitivityMap,
    cfg: &MixConfig,
) -> Result<Vec<MixedSample>> {
    let pairs: Vec<MixPair> = sources
        .iter()
        .zip(targets)
        .map(|(s, &t)| MixPair::new(s, &target_pool[t]))
        .collect::<Result<_>>()?;
    let m = &sensitivity.map;
    let render_all = |lambda: f64| -> Result<Vec<Image>> {
        pairs.iter().map(|p| p.render(m, lambda, cfg.variant)).collect()
    };
    let (lambda_star, trace) = projected_ascent(|l| oracle.loss(&render_all(l)?, labels), cfg)?;
    let final_loss = *trace.last().expect("trace is never empty");
    Ok(render_all(lambda_star)?
        .into_iter()
        .enumerate()
        .map(|(k, image)| MixedSample {
            source_index: k,
            target_index: targets[k],
            lambda_star,
            image,
            final_loss,
        })
        .collect())
}
