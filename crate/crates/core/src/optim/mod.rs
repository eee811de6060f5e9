//! MSE regression of head scores onto human judgments: Adam, mini-batches,
//! early stopping on validation Kendall tau-c.

mod adam;
pub mod config;

use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::embed_io::EmbeddingSample;
use crate::error::{Error, Result};
use crate::eval::kendall::{kendall_tau_c, ScoredPair};
use crate::head::{batch_gradient, init_params, score_batch, HeadConfig, HeadParams, InputDims};
use crate::util::stream_rng;

pub use adam::{adam_step, AdamState};
pub use config::RunConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub batch_size: usize,
    /// Epochs without strict improvement of validation tau before stopping.
    pub patience: usize,
    pub max_epochs: usize,
    pub seed: u64,
    pub shuffle: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 3.0e-5,
            beta1: 0.9,
            beta2: 0.98,
            epsilon: 1e-8,
            batch_size: 64,
            patience: 5,
            max_epochs: 100,
            seed: 0,
            shuffle: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidTrainConfig(m.into()));
        // zero is allowed: it turns an epoch into an evaluation pass
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be finite and non-negative");
        }
        if !(self.beta1 > 0.0 && self.beta1 < 1.0 && self.beta2 > 0.0 && self.beta2 < 1.0) {
            return bad("beta1 and beta2 must lie in (0, 1)");
        }
        if self.epsilon.is_nan() || self.epsilon <= 0.0 {
            return bad("epsilon must be positive");
        }
        if self.batch_size == 0 || self.patience == 0 || self.max_epochs == 0 {
            return bad("batch_size, patience and max_epochs must be at least 1");
        }
        Ok(())
    }
}

/// Runs one pass over `train` and returns the mean per-sample loss, measured
/// before each batch's update.
///
/// `epoch` selects the shuffling stream, so the order of epoch `k` depends
/// only on `(config.seed, k)`.
pub fn train_epoch(
    train: &[EmbeddingSample],
    params: &mut HeadParams,
    state: &mut AdamState,
    config: &TrainConfig,
    head: &HeadConfig,
    epoch: usize,
) -> Result<f64> {
    config.validate()?;
    if train.is_empty() {
        return Err(Error::Empty("training set"));
    }
    let targets = train
        .iter()
        .map(|s| {
            s.score
                .map(f64::from)
                .ok_or_else(|| Error::MissingScore(s.sample_id.clone()))
        })
        .collect::<Result<Vec<f64>>>()?;

    let mut order: Vec<usize> = (0..train.len()).collect();
    if config.shuffle {
        order.shuffle(&mut stream_rng(config.seed, 1 + epoch as u64));
    }

    let mut total = 0.0;
    for batch_idx in order.chunks(config.batch_size) {
        let batch: Vec<(&EmbeddingSample, f64)> =
            batch_idx.iter().map(|&i| (&train[i], targets[i])).collect();
        let g = batch_gradient(&batch, params, head)?;
        total += g.per_sample_loss.iter().sum::<f64>();
        adam_step(params, &g.grads, state, config)?;
    }
    Ok(total / train.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    pub valid_tau: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub wall_time_s: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainLog {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_tau: f64,
}

impl TrainLog {
    /// One JSON object per epoch. Wall times are included only when asked for,
    /// so that logs of identical runs compare byte-for-byte.
    pub fn to_jsonl(&self, with_timing: bool) -> Result<String> {
        let mut out = String::new();
        for rec in &self.epochs {
            let rec = EpochRecord {
                wall_time_s: if with_timing { rec.wall_time_s } else { None },
                ..rec.clone()
            };
            out.push_str(&serde_json::to_string(&rec)?);
            out.push('\n');
        }
        Ok(out)
    }
}

#[derive(Debug, Clone)]
pub struct FitOutcome {
    /// Parameters from `log.best_epoch`.
    pub params: HeadParams,
    pub log: TrainLog,
}

/// Trains from a fresh initialization with early stopping on validation τ-c.
pub fn fit(
    train: &[EmbeddingSample],
    valid: &[EmbeddingSample],
    config: &TrainConfig,
    head: &HeadConfig,
) -> Result<FitOutcome> {
    if train.is_empty() {
        return Err(Error::Empty("training set"));
    }
    if valid.is_empty() {
        return Err(Error::Empty("validation set"));
    }
    let human = valid
        .iter()
        .map(|s| {
            s.score
                .map(f64::from)
                .ok_or_else(|| Error::MissingScore(s.sample_id.clone()))
        })
        .collect::<Result<Vec<f64>>>()?;
    if human.iter().all(|&h| h == human[0]) {
        return Err(Error::UndefinedStatistic(
            "validation human scores are all tied",
        ));
    }
    let params = init_params(head, InputDims::of(&train[0]))?;
    fit_with_validator(train, params, config, head, |p, _| {
        validation_tau(valid, &human, p, head)
    })
}

/// τ-c between head scores and human scores. A head that scores every
/// sample identically has no association with the judgments and gets 0.
pub fn validation_tau(
    valid: &[EmbeddingSample],
    human: &[f64],
    params: &HeadParams,
    head: &HeadConfig,
) -> Result<f64> {
    let pred = score_batch(valid, params, head)?;
    let pairs: Vec<ScoredPair> = pred
        .iter()
        .zip(human)
        .map(|(p, &h)| ScoredPair::new(p.y_hat, h))
        .collect();
    match kendall_tau_c(&pairs) {
        Ok(t) => Ok(t),
        Err(Error::UndefinedStatistic(_)) if pred.iter().all(|p| p.y_hat == pred[0].y_hat) => {
            Ok(0.0)
        }
        Err(e) => Err(e),
    }
}

/// The early-stopping driver with the validation statistic supplied by the
/// caller. `validate` receives the parameters after epoch `k` (1-based).
pub fn fit_with_validator<F>(
    train: &[EmbeddingSample],
    mut params: HeadParams,
    config: &TrainConfig,
    head: &HeadConfig,
    mut validate: F,
) -> Result<FitOutcome>
where
    F: FnMut(&HeadParams, usize) -> Result<f64>,
{
    config.validate()?;
    head.validate()?;
    if train.is_empty() {
        return Err(Error::Empty("training set"));
    }
    let mut state = AdamState::new(&params);
    let mut log = TrainLog {
        best_tau: f64::NEG_INFINITY,
        ..TrainLog::default()
    };
    let mut best: Option<HeadParams> = None;
    let mut since_best = 0;

    for epoch in 1..=config.max_epochs {
        let started = Instant::now();
        let train_loss = train_epoch(train, &mut params, &mut state, config, head, epoch)?;
        let tau = validate(&params, epoch)?;
        if !tau.is_finite() {
            return Err(Error::NonFiniteValue("validation tau"));
        }
        log.epochs.push(EpochRecord {
            epoch,
            train_loss,
            valid_tau: tau,
            wall_time_s: Some(started.elapsed().as_secs_f64()),
        });
        if tau > log.best_tau {
            log.best_tau = tau;
            log.best_epoch = epoch;
            best = Some(params.clone());
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= config.patience {
                break;
            }
        }
    }
    Ok(FitOutcome {
        params: best.expect("at least one epoch ran"),
        log,
    })
}
