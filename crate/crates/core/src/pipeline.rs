//! The end-to-end loop on the synthetic benchmark: source-only baseline,
//! target augmentation, distance map, sensitivity map, mixup training and the
//! post-training sensitivity map.

use serde::{Deserialize, Serialize};

use crate::augment::{augment_target, AugmentPlan};
use crate::distance::{collect_amplitudes, distance_map};
use crate::dodiss::{dodiss_map, DodissConfig};
use crate::error::Result;
use crate::maps::{DistanceMap, SensitivityMap};
use crate::model::{ModelSpec, ToyModel};
use crate::oracle::accuracy;
use crate::samix::MixConfig;
use crate::synth::{generate, SynthConfig, SynthDataset};
use crate::train::{train_samix, train_source_only, TrainConfig, TrainContext, TrainLog};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchmarkConfig {
    pub synth: SynthConfig,
    pub model: ModelSpec,
    pub augment: AugmentPlan,
    pub dodiss: DodissConfig,
    pub mix: MixConfig,
    pub train: TrainConfig,
    /// Start mixup training from the source-only weights instead of the
    /// shared initialization.
    pub warm_start: bool,
    /// Schedule for the mixup stage; `None` reuses `train`.
    pub samix_train: Option<TrainConfig>,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self {
            synth: SynthConfig::default(),
            model: ModelSpec {
                height: 32,
                width: 32,
                channels: 1,
                pool_grid: Some(8),
                hidden: 64,
                classes: 2,
            },
            augment: AugmentPlan::default(),
            dodiss: DodissConfig {
                max_samples: Some(200),
                parseval_units: true,
                ..Default::default()
            },
            mix: MixConfig::default(),
            train: TrainConfig {
                epochs: 20,
                learning_rate: 0.1,
                supervise_mixed: true,
                ..Default::default()
            },
            warm_start: false,
            samix_train: None,
        }
    }
}

impl BenchmarkConfig {
    /// Copy with every seed derived from `seed`.
    pub fn with_seed(&self, seed: u64) -> Self {
        let mut c = self.clone();
        c.synth.seed = seed;
        c.augment.seed = seed.wrapping_add(1);
        c.dodiss.seed = seed.wrapping_add(2);
        c.train.seed = seed.wrapping_add(3);
        if let Some(t) = c.samix_train.as_mut() {
            t.seed = seed.wrapping_add(4);
        }
        c
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub seed: u64,
    pub source_only_val_accuracy: f64,
    pub source_only_target_accuracy: f64,
    pub samix_val_accuracy: f64,
    pub samix_target_accuracy: f64,
    pub dodiss_l1_before: f64,
    pub dodiss_l1_after: f64,
    pub clean_error_before: f64,
    pub clean_error_after: f64,
}

/// Every artifact of one benchmark run.
pub struct BenchmarkRun {
    pub report: BenchmarkReport,
    pub data: SynthDataset,
    pub target_pool: Vec<crate::image::Image>,
    pub distance: DistanceMap,
    pub sensitivity_before: SensitivityMap,
    pub sensitivity_after: SensitivityMap,
    pub source_only: ToyModel,
    pub samix: ToyModel,
    pub source_only_log: TrainLog,
    pub samix_log: TrainLog,
}

const EVAL_BATCH: usize = 256;

pub fn run_benchmark(cfg: &BenchmarkConfig) -> Result<BenchmarkRun> {
    let data = generate(&cfg.synth)?;
    let ctx = TrainContext {
        source_val: Some(&data.source_val),
        target_test: Some(&data.target_test),
        ..Default::default()
    };

    let mut source_only = ToyModel::new(cfg.model.clone(), cfg.train.seed)?;
    let source_only_log = train_source_only(&mut source_only, &data.source_train, &cfg.train, &ctx)?;

    let target_pool = augment_target(&data.target_train, &cfg.augment)?;
    let mut distance = distance_map(
        &collect_amplitudes(data.source_train.images())?,
        &collect_amplitudes(&target_pool)?,
    )?;
    distance.source_id = "synthetic-source".into();
    distance.target_id = "synthetic-target-augmented".into();

    let sensitivity_before = dodiss_map(&source_only, &data.source_train, &distance, &cfg.dodiss)?;

    let mut samix = if cfg.warm_start {
        source_only.clone()
    } else {
        ToyModel::new(cfg.model.clone(), cfg.train.seed)?
    };
    let samix_cfg = cfg.samix_train.as_ref().unwrap_or(&cfg.train);
    let samix_log = train_samix(
        &mut samix,
        &data.source_train,
        &target_pool,
        &sensitivity_before,
        &cfg.mix,
        samix_cfg,
        &ctx,
    )?;
    let sensitivity_after = dodiss_map(&samix, &data.source_train, &distance, &cfg.dodiss)?;

    let report = BenchmarkReport {
        seed: cfg.synth.seed,
        source_only_val_accuracy: accuracy(&source_only, &data.source_val, EVAL_BATCH)?,
        source_only_target_accuracy: accuracy(&source_only, &data.target_test, EVAL_BATCH)?,
        samix_val_accuracy: accuracy(&samix, &data.source_val, EVAL_BATCH)?,
        samix_target_accuracy: accuracy(&samix, &data.target_test, EVAL_BATCH)?,
        dodiss_l1_before: sensitivity_before.map.mean_l1(),
        dodiss_l1_after: sensitivity_after.map.mean_l1(),
        clean_error_before: sensitivity_before.clean_error,
        clean_error_after: sensitivity_after.clean_error,
    };
    Ok(BenchmarkRun {
        report,
        data,
        target_pool,
        distance,
        sensitivity_before,
        sensitivity_after,
        source_only,
        samix,
        source_only_log,
        samix_log,
    })
}
