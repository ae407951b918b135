//! The training loop: clipped gradient steps, per-epoch validation and
//! best-epoch selection.

use std::time::{Duration, Instant};

use nlstm_core::analysis::{evaluate, find_metric, metric_records, MetricName, MetricRecord, Split};
use nlstm_core::model::{
    argmax, backward_sequence, forward_sequence, sequence_loss, Model, SequenceBatch, SequenceTargets,
};
use nlstm_core::optim::{clip_by_global_norm, Optimizer, OptimizerKind};

use crate::error::{AppError, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub optimizer: OptimizerKind,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seq_len: usize,
    pub clip_threshold: f64,
    pub epochs: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            optimizer: OptimizerKind::Adam,
            learning_rate: 0.002,
            batch_size: 32,
            seq_len: 100,
            clip_threshold: 1.0,
            epochs: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(AppError::Config(format!("learning_rate must be >= 0, got {}", self.learning_rate)));
        }
        if self.clip_threshold.is_nan() || self.clip_threshold <= 0.0 {
            return Err(AppError::Config(format!("clip_threshold must be > 0, got {}", self.clip_threshold)));
        }
        if self.batch_size == 0 {
            return Err(AppError::Config("batch_size must be positive".into()));
        }
        if self.seq_len == 0 {
            return Err(AppError::Config("seq_len must be positive".into()));
        }
        Ok(())
    }
}

/// Result of a single optimizer step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepReport {
    pub loss: f64,
    /// Scored positions in the batch.
    pub scored: usize,
    /// Correct final-step predictions, for classification batches.
    pub correct: usize,
    /// Gradient norm before clipping.
    pub grad_norm: f64,
}

/// A model together with its optimizer state.
pub struct Trainer {
    pub model: Model,
    optimizer: Optimizer,
    config: TrainConfig,
}

impl Trainer {
    pub fn new(model: Model, config: TrainConfig) -> Self {
        let optimizer = Optimizer::new(config.optimizer, &model);
        Trainer { model, optimizer, config }
    }

    /// Forward, backward, clip and update on one batch. States start at
    /// zero for every batch.
    pub fn step(&mut self, batch: &SequenceBatch) -> Result<StepReport> {
        let pass = forward_sequence(&self.model, batch, None)?;
        let (loss, dlogits) = sequence_loss(&pass, &batch.targets)?;
        let (scored, correct) = match &batch.targets {
            SequenceTargets::PerStep(t) => (t.len(), 0),
            SequenceTargets::Final(labels) => {
                let last = pass.seq_len() - 1;
                let correct = labels
                    .iter()
                    .enumerate()
                    .filter(|(lane, &label)| argmax(pass.logits_at(last, *lane)) == label)
                    .count();
                (labels.len(), correct)
            }
        };
        let mut grads = backward_sequence(&self.model, &pass, &dlogits)?;
        let grad_norm = clip_by_global_norm(&mut grads, self.config.clip_threshold);
        if !loss.is_finite() || !grad_norm.is_finite() {
            return Ok(StepReport { loss: f64::NAN, scored, correct, grad_norm });
        }
        self.optimizer.step(&mut self.model, &grads, self.config.learning_rate);
        Ok(StepReport { loss, scored, correct, grad_norm })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochSummary {
    /// 1-based epoch number.
    pub epoch: usize,
    pub train: Vec<MetricRecord>,
    pub valid: Vec<MetricRecord>,
    pub wall_time: Duration,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub history: Vec<EpochSummary>,
    pub best_model: Model,
    /// 0 when no epoch ran and the initial model is returned.
    pub best_epoch: usize,
    pub final_model: Model,
}

/// Trains for `config.epochs` passes over `train`, validating after each.
///
/// The returned best model is the one with the lowest validation NLL; ties
/// go to the earliest epoch. A non-finite loss or gradient aborts with
/// [`AppError::Divergence`].
pub fn run_training(
    model: Model,
    train: &[SequenceBatch],
    valid: &[SequenceBatch],
    config: &TrainConfig,
    on_epoch: &mut dyn FnMut(&EpochSummary),
) -> Result<TrainOutcome> {
    config.validate()?;
    let mut trainer = Trainer::new(model, *config);
    let mut best_model = trainer.model.clone();
    let mut best_epoch = 0;
    let mut best_nll = f64::INFINITY;
    let mut history = Vec::with_capacity(config.epochs);

    for epoch in 1..=config.epochs {
        let start = Instant::now();
        let mut nll_sum = 0.0;
        let mut scored = 0;
        let mut correct = 0;
        let mut classification = false;
        for (index, batch) in train.iter().enumerate() {
            let report = trainer.step(batch)?;
            if !report.loss.is_finite() || !trainer.model.is_finite() {
                return Err(AppError::Divergence { epoch, batch: index + 1 });
            }
            nll_sum += report.loss * report.scored as f64;
            scored += report.scored;
            correct += report.correct;
            classification |= matches!(batch.targets, SequenceTargets::Final(_));
        }
        let mean = if scored == 0 { 0.0 } else { nll_sum / scored as f64 };
        let accuracy = (classification && scored > 0).then(|| correct as f64 / scored as f64);
        let train_records = metric_records(mean, accuracy, Split::Train, epoch);
        let valid_records = if valid.is_empty() {
            Vec::new()
        } else {
            evaluate(&trainer.model, valid, Split::Valid, epoch)?
        };
        let selection = find_metric(&valid_records, MetricName::Nll).unwrap_or(mean);
        if selection < best_nll {
            best_nll = selection;
            best_epoch = epoch;
            best_model = trainer.model.clone();
        }
        let summary = EpochSummary {
            epoch,
            train: train_records,
            valid: valid_records,
            wall_time: start.elapsed(),
        };
        on_epoch(&summary);
        history.push(summary);
    }

    Ok(TrainOutcome { history, best_model, best_epoch, final_model: trainer.model })
}
