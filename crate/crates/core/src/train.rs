//! Training loop with early stopping and best-weights restore.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{split, Batches, DatasetIndex};
use crate::error::{Error, Result};
use crate::infer::{self, EVAL_BATCH};
use crate::metrics;
use crate::model::{Checkpoint, Mode, UNet};
use crate::optim::AdamState;

/// Minimum drop in validation loss that counts as an improvement.
pub const MIN_DELTA: f64 = 1e-5;

pub const HISTORY_HEADER: &str = "epoch,train_loss,val_loss,val_dice,val_iou";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f32,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub val_fraction: f64,
    pub theta: f32,
    pub min_area: usize,
    pub augment: bool,
    pub seed: u64,
    /// Hard cap on optimizer steps across all epochs.
    pub max_steps: Option<usize>,
}

impl TrainConfig {
    pub fn new(max_epochs: usize) -> Self {
        Self {
            lr: 1e-4,
            batch_size: 8,
            max_epochs,
            patience: 5,
            val_fraction: 0.2,
            theta: infer::DEFAULT_THETA,
            min_area: infer::DEFAULT_MIN_AREA,
            augment: false,
            seed: 0,
            max_steps: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad(format!("lr must be positive, got {}", self.lr));
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive".into());
        }
        if self.max_epochs == 0 {
            return bad("max_epochs must be positive".into());
        }
        if self.patience == 0 {
            return bad("patience must be positive".into());
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            return bad(format!("val_fraction must lie in [0, 1), got {}", self.val_fraction));
        }
        infer::check_theta(self.theta)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopDecision {
    Improved,
    Continue,
    Stop,
}

/// Patience-based early stopping on validation loss. Epochs are 1-based.
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    patience: usize,
    min_delta: f64,
    best: Option<(usize, f64)>,
    stale: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        Self::with_min_delta(patience, MIN_DELTA)
    }

    pub fn with_min_delta(patience: usize, min_delta: f64) -> Self {
        Self {
            patience,
            min_delta,
            best: None,
            stale: 0,
        }
    }

    pub fn observe(&mut self, epoch: usize, val_loss: f64) -> StopDecision {
        match self.best {
            Some((_, best)) if !(val_loss <= best - self.min_delta) => {
                self.stale += 1;
                if self.stale >= self.patience {
                    StopDecision::Stop
                } else {
                    StopDecision::Continue
                }
            }
            _ => {
                self.best = Some((epoch, val_loss));
                self.stale = 0;
                StopDecision::Improved
            }
        }
    }

    pub fn best_epoch(&self) -> Option<usize> {
        self.best.map(|(e, _)| e)
    }

    pub fn best_loss(&self) -> Option<f64> {
        self.best.map(|(_, l)| l)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_dice: f64,
    pub val_iou: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub stopped_early: bool,
    pub steps: usize,
}

impl TrainHistory {
    pub fn to_csv(&self) -> String {
        let mut out = format!("{HISTORY_HEADER}\n");
        for r in &self.epochs {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                r.epoch, r.train_loss, r.val_loss, r.val_dice, r.val_iou
            );
        }
        out
    }
}

#[derive(Debug)]
pub struct TrainOutcome {
    /// Model restored to the best epoch.
    pub model: UNet,
    pub checkpoint: Checkpoint,
    pub history: TrainHistory,
}

/// Splits `index` by `cfg.val_fraction` and trains.
pub fn train(model: UNet, index: &DatasetIndex, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let (train_set, val_set) = split(index, cfg.val_fraction, cfg.seed)?;
    train_on(model, &train_set, &val_set, cfg)
}

/// Trains on `train_set`, selecting weights by loss on `val_set`. An empty
/// validation set falls back to the training set.
pub fn train_on(
    mut model: UNet,
    train_set: &DatasetIndex,
    val_set: &DatasetIndex,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(Error::Config("training set is empty".into()));
    }
    let val_set = if val_set.is_empty() { train_set } else { val_set };
    let mut adam = AdamState::new(cfg.lr);
    let mut stopper = EarlyStopping::new(cfg.patience);
    let mut seeds = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut epochs = Vec::new();
    let mut best: Option<Checkpoint> = None;
    let mut steps = 0usize;
    let mut stopped_early = false;

    'epochs: for epoch in 1..=cfg.max_epochs {
        let shuffle_seed = seeds.next_u64();
        let aug_seed = seeds.next_u64();
        let mut loss_sum = 0.0f64;
        let mut seen = 0usize;
        let batches = Batches::new(train_set, cfg.batch_size, Some(shuffle_seed), cfg.augment.then_some(aug_seed))?;
        for batch in batches {
            if cfg.max_steps.is_some_and(|m| steps >= m) {
                break;
            }
            let batch = batch?;
            let p = model.forward(&batch.images, Mode::Train)?;
            let loss = metrics::bce_loss(&p, &batch.masks)?;
            loss.backward()?;
            adam.step(&mut model.parameters_mut())?;
            loss_sum += loss.item()? as f64 * batch.len() as f64;
            seen += batch.len();
            steps += 1;
        }
        if seen == 0 {
            break;
        }

        let (val_loss, entries) = infer::score_index(&model, val_set, EVAL_BATCH, cfg.theta, cfg.min_area)?;
        let n = entries.len().max(1) as f64;
        let record = EpochRecord {
            epoch,
            train_loss: loss_sum / seen as f64,
            val_loss,
            val_dice: entries.iter().map(|e| e.dice as f64).sum::<f64>() / n,
            val_iou: entries.iter().map(|e| e.iou as f64).sum::<f64>() / n,
        };
        tracing::info!(
            epoch,
            train_loss = record.train_loss,
            val_loss,
            val_dice = record.val_dice,
            "epoch done"
        );
        epochs.push(record);
        match stopper.observe(epoch, val_loss) {
            StopDecision::Improved => best = Some(Checkpoint::from_model(&model, BTreeMap::new())),
            StopDecision::Continue => {}
            StopDecision::Stop => {
                stopped_early = true;
                break 'epochs;
            }
        }
        if cfg.max_steps.is_some_and(|m| steps >= m) {
            break;
        }
    }

    let (Some(mut checkpoint), Some(best_epoch), Some(best_val_loss)) =
        (best, stopper.best_epoch(), stopper.best_loss())
    else {
        return Err(Error::Config("no training epoch completed".into()));
    };
    let meta = [
        ("best_epoch", best_epoch.to_string()),
        ("best_val_loss", best_val_loss.to_string()),
        ("theta", cfg.theta.to_string()),
        ("min_area", cfg.min_area.to_string()),
        ("steps", steps.to_string()),
    ];
    checkpoint
        .metadata
        .extend(meta.into_iter().map(|(k, v)| (k.to_string(), v)));
    let model = checkpoint.to_model()?;
    Ok(TrainOutcome {
        model,
        checkpoint,
        history: TrainHistory {
            epochs,
            best_epoch,
            best_val_loss,
            stopped_early,
            steps,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stops_after_patience_stale_epochs() {
        let losses = [0.5, 0.4, 0.41, 0.42, 0.43, 0.44, 0.45, 0.46, 0.47];
        let mut es = EarlyStopping::new(5);
        let mut stopped = None;
        for (i, &l) in losses.iter().enumerate() {
            if es.observe(i + 1, l) == StopDecision::Stop {
                stopped = Some(i + 1);
                break;
            }
        }
        assert_eq!(stopped, Some(7));
        assert_eq!(es.best_epoch(), Some(2));
    }

    #[test]
    fn ties_keep_the_earlier_epoch() {
        let mut es = EarlyStopping::new(3);
        assert_eq!(es.observe(1, 0.3), StopDecision::Improved);
        assert_eq!(es.observe(2, 0.3), StopDecision::Continue);
        assert_eq!(es.observe(3, 0.3 - 1e-7), StopDecision::Continue);
        assert_eq!(es.best_epoch(), Some(1));
        assert_eq!(es.observe(4, 0.2), StopDecision::Improved);
        assert_eq!(es.best_epoch(), Some(4));
    }

    #[test]
    fn nan_loss_is_never_an_improvement() {
        let mut es = EarlyStopping::new(1);
        es.observe(1, 0.5);
        assert_eq!(es.observe(2, f64::NAN), StopDecision::Stop);
        assert_eq!(es.best_epoch(), Some(1));
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::new(3).validate().is_ok());
        assert!(TrainConfig::new(0).validate().is_err());
        let mut c = TrainConfig::new(3);
        c.val_fraction = 1.0;
        assert!(c.validate().is_err());
        c = TrainConfig::new(3);
        c.lr = -1.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn history_csv_layout() {
        let h = TrainHistory {
            epochs: vec![EpochRecord {
                epoch: 1,
                train_loss: 0.5,
                val_loss: 0.25,
                val_dice: 1.0,
                val_iou: 0.125,
            }],
            best_epoch: 1,
            best_val_loss: 0.25,
            stopped_early: false,
            steps: 2,
        };
        assert_eq!(h.to_csv(), "epoch,train_loss,val_loss,val_dice,val_iou\n1,0.5,0.25,1,0.125\n");
    }
}
