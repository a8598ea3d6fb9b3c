//! Minibatch SGD on `L_T(x_s) + mu * JS(F(x_s), F(x_st)) + L_UDA`.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::LabeledCorpus;
use crate::dodiss::{dodiss_map, DodissConfig};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::maps::{DistanceMap, SensitivityMap};
use crate::model::ToyModel;
use crate::oracle::accuracy;
use crate::samix::{generate_batch, MixConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    /// Weight of the consistency term.
    pub mu: f64,
    pub epochs: usize,
    pub learning_rate: f64,
    /// Multiply the learning rate by `decay_factor` every this many epochs.
    /// `None` decays every third of the run.
    pub decay_every: Option<usize>,
    pub decay_factor: f64,
    pub batch_size: usize,
    pub seed: u64,
    /// Also apply the task loss to the mixed images (not part of the default objective).
    pub supervise_mixed: bool,
    /// Recompute the sensitivity map from the current model every N epochs.
    pub refresh_every: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            mu: 0.01,
            epochs: 30,
            learning_rate: 0.05,
            decay_every: None,
            decay_factor: 0.1,
            batch_size: 32,
            seed: 0,
            supervise_mixed: false,
            refresh_every: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.mu >= 0.0 && self.mu.is_finite()) {
            return Err(Error::invalid(format!("mu must be >= 0, got {}", self.mu)));
        }
        if self.batch_size == 0 || !(self.learning_rate > 0.0) {
            return Err(Error::invalid("batch size and learning rate must be positive"));
        }
        if self.decay_every == Some(0) || self.refresh_every == Some(0) {
            return Err(Error::invalid("decay_every and refresh_every must be >= 1"));
        }
        Ok(())
    }

    pub fn learning_rate_at(&self, epoch: usize) -> f64 {
        let every = self.decay_every.unwrap_or((self.epochs / 3).max(1));
        self.learning_rate * self.decay_factor.powi((epoch / every) as i32)
    }
}

/// Extension point for the adaptation loss of a host UDA method.
pub trait UdaLoss: Sync {
    /// Loss value and parameter gradient on one source batch and the target pool.
    fn loss_and_grad(
        &self,
        model: &ToyModel,
        source: &[Image],
        target_pool: &[Image],
    ) -> Result<(f64, Vec<f64>)>;
}

/// Recomputes the sensitivity map mid-training.
#[derive(Clone, Copy)]
pub struct Refresh<'a> {
    pub distance: &'a DistanceMap,
    pub corpus: &'a LabeledCorpus,
    pub config: &'a DodissConfig,
}

/// Optional evaluation sets and hooks.
#[derive(Default, Clone, Copy)]
pub struct TrainContext<'a> {
    pub source_val: Option<&'a LabeledCorpus>,
    pub target_test: Option<&'a LabeledCorpus>,
    pub uda: Option<&'a dyn UdaLoss>,
    pub refresh: Option<Refresh<'a>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub learning_rate: f64,
    pub train_loss: f64,
    pub consistency: f64,
    pub source_val_accuracy: Option<f64>,
    pub target_accuracy: Option<f64>,
    pub mean_lambda: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub epochs: Vec<EpochMetrics>,
}

const EVAL_BATCH: usize = 256;

/// Plain supervised training on the source corpus.
pub fn train_source_only(
    model: &mut ToyModel,
    source: &LabeledCorpus,
    cfg: &TrainConfig,
    ctx: &TrainContext,
) -> Result<TrainLog> {
    run(model, source, None, cfg, ctx)
}

/// Training with sensitivity-guided adversarial mixup and the consistency term.
///
/// An empty target pool or `mu = 0` without `supervise_mixed` reduces to
/// [`train_source_only`].
pub fn train_samix(
    model: &mut ToyModel,
    source: &LabeledCorpus,
    target_pool: &[Image],
    sensitivity: &SensitivityMap,
    mix_cfg: &MixConfig,
    cfg: &TrainConfig,
    ctx: &TrainContext,
) -> Result<TrainLog> {
    let mixing = !target_pool.is_empty() && (cfg.mu > 0.0 || cfg.supervise_mixed);
    if mixing {
        mix_cfg.validate()?;
        run(model, source, Some((target_pool, sensitivity, mix_cfg)), cfg, ctx)
    } else {
        run(model, source, None, cfg, ctx)
    }
}

type Mixing<'a> = (&'a [Image], &'a SensitivityMap, &'a MixConfig);

fn run(
    model: &mut ToyModel,
    source: &LabeledCorpus,
    mixing: Option<Mixing>,
    cfg: &TrainConfig,
    ctx: &TrainContext,
) -> Result<TrainLog> {
    cfg.validate()?;
    if source.is_empty() {
        return Err(Error::invalid("source corpus is empty"));
    }
    let mut sensitivity = mixing.map(|(_, s, _)| s.clone());
    let mut order: Vec<usize> = (0..source.len()).collect();
    let mut log = TrainLog::default();

    for epoch in 0..cfg.epochs {
        if let (Some(r), Some(every)) = (ctx.refresh, cfg.refresh_every) {
            if epoch > 0 && epoch % every == 0 && sensitivity.is_some() {
                sensitivity = Some(dodiss_map(&*model, r.corpus, r.distance, r.config)?);
            }
        }
        let lr = cfg.learning_rate_at(epoch);
        let mut shuffle = ChaCha8Rng::seed_from_u64(cfg.seed);
        shuffle.set_stream(2 * epoch as u64);
        order.shuffle(&mut shuffle);
        let mut mix_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        mix_rng.set_stream(2 * epoch as u64 + 1);

        let (mut loss_sum, mut js_sum, mut lambda_sum, mut lambda_n) = (0.0, 0.0, 0.0, 0usize);
        let batches = order.chunks(cfg.batch_size);
        let n_batches = batches.len();
        for (b, idx) in batches.enumerate() {
            let batch = source.select(idx);
            let mixed: Option<Vec<Image>> = match (mixing, sensitivity.as_ref()) {
                (Some((pool, _, mix_cfg)), Some(sens)) => {
                    let samples = generate_batch(
                        &*model,
                        batch.images(),
                        batch.labels(),
                        pool,
                        sens,
                        mix_cfg,
                        &mut mix_rng,
                    )?;
                    lambda_sum += samples.iter().map(|s| s.lambda_star).sum::<f64>();
                    lambda_n += samples.len();
                    Some(samples.into_iter().map(|s| s.image).collect())
                }
                _ => None,
            };
            let mut obj = model.objective(
                batch.images(),
                batch.labels(),
                mixed.as_deref(),
                cfg.mu,
                cfg.supervise_mixed,
            )?;
            if let (Some(uda), Some((pool, _, _))) = (ctx.uda, mixing) {
                let (l, g) = uda.loss_and_grad(model, batch.images(), pool)?;
                obj.total += l;
                obj.grad.iter_mut().zip(g).for_each(|(a, b)| *a += b);
            }
            if !obj.total.is_finite() || obj.grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::Diverged { epoch, batch: b });
            }
            for (p, g) in model.params_mut().iter_mut().zip(&obj.grad) {
                *p -= lr * g;
            }
            loss_sum += obj.total;
            js_sum += obj.consistency;
        }

        log.epochs.push(EpochMetrics {
            epoch,
            learning_rate: lr,
            train_loss: loss_sum / n_batches as f64,
            consistency: js_sum / n_batches as f64,
            source_val_accuracy: ctx
                .source_val
                .map(|c| accuracy(&*model, c, EVAL_BATCH))
                .transpose()?,
            target_accuracy: ctx
                .target_test
                .map(|c| accuracy(&*model, c, EVAL_BATCH))
                .transpose()?,
            mean_lambda: (lambda_n > 0).then(|| lambda_sum / lambda_n as f64),
        });
    }
    Ok(log)
}
