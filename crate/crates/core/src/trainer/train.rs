use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::schedule::{early_stop_check, plateau_lr_step, EpochRecord, TrainLog};
use crate::dataset::{PatchSet, Target};
use crate::error::{Error, Result};
use crate::netarch::{build_network, InferenceNet, NetworkSpec, NetworkWeights};
use crate::neuralcore::{adam_step, AdamState, Phase, LOG_FLOOR};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub target: Target,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Epochs without sufficient improvement before the rate is halved.
    pub plateau_window: usize,
    pub plateau_epsilon: f64,
    pub patience: usize,
    pub max_epochs: usize,
    /// Minibatches per epoch; sampling is on the fly, so an epoch is a fixed
    /// number of steps.
    pub batches_per_epoch: usize,
    /// Size of the fixed balanced validation sample.
    pub validation_size: usize,
    pub seed: u64,
}

impl TrainConfig {
    pub fn new(target: Target) -> Self {
        Self {
            target,
            batch_size: 256,
            learning_rate: 1e-3,
            plateau_window: 5,
            plateau_epsilon: 1e-4,
            patience: 15,
            max_epochs: 100,
            batches_per_epoch: 200,
            validation_size: 1024,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::invalid(m.to_string()));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning rate must be positive");
        }
        if self.batch_size < 2 || !self.batch_size.is_multiple_of(2) {
            return bad("batch size must be even and at least 2");
        }
        if self.validation_size < 2 || !self.validation_size.is_multiple_of(2) {
            return bad("validation size must be even and at least 2");
        }
        if self.plateau_window == 0 || self.patience < self.plateau_window {
            return bad("need 1 <= plateau window <= patience");
        }
        if self.max_epochs == 0 || self.batches_per_epoch == 0 {
            return bad("epochs and batches per epoch must be positive");
        }
        Ok(())
    }
}

/// Weights plus optimizer state; one call to [`Trainer::step`] is one Adam
/// update on one minibatch.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub weights: NetworkWeights,
    adam: Vec<AdamState>,
    pub lr: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub loss: f64,
    /// Train-phase predictions matching their labels.
    pub correct: usize,
}

impl Trainer {
    pub fn new(weights: NetworkWeights, lr: f64) -> Self {
        let adam = weights.trainable().iter().map(|t| AdamState::new(t.shape())).collect();
        Self { weights, adam, lr }
    }

    /// Forward, backward and update. Stored values are rounded to single
    /// precision afterwards so a checkpoint written to disk reloads exactly.
    pub fn step(&mut self, patches: &Tensor, labels: &[usize], dropout_seed: u64) -> Result<StepOutcome> {
        let (probs, cache) = self.weights.forward(patches, Phase::Train, dropout_seed)?;
        let (loss, grads) = self.weights.backward(&cache, labels)?;
        if !loss.is_finite() {
            return Err(Error::NonFinite("training loss"));
        }
        // reject before touching anything so a bad batch leaves no trace
        if !grads.tensors.iter().all(Tensor::all_finite) {
            return Err(Error::NonFinite("training gradient"));
        }
        let correct = labels
            .iter()
            .enumerate()
            .filter(|&(i, &l)| (probs.data()[2 * i + 1] >= 0.5) == (l == 1))
            .count();
        self.weights.commit_running_stats(&cache);
        for ((param, grad), state) in self
            .weights
            .trainable_mut()
            .into_iter()
            .zip(&grads.tensors)
            .zip(&mut self.adam)
        {
            adam_step(param, grad, state, self.lr)?;
        }
        self.weights.round_to_storage();
        Ok(StepOutcome { loss, correct })
    }
}

/// Mean cross-entropy and accuracy of positive-class probabilities.
pub fn binary_loss_accuracy(probs: &[f64], labels: &[usize]) -> (f64, f64) {
    let mut loss = 0.0;
    let mut correct = 0;
    for (&p, &l) in probs.iter().zip(labels) {
        let q = if l == 1 { p } else { 1.0 - p };
        loss -= q.max(LOG_FLOOR).ln();
        correct += ((p >= 0.5) == (l == 1)) as usize;
    }
    let n = probs.len().max(1) as f64;
    (loss / n, correct as f64 / n)
}

/// Trains a fresh network on balanced minibatches from `train_set`, checking
/// a fixed balanced sample of `val_set` after every epoch. The learning rate
/// halves on validation plateaus; training stops after `patience` epochs
/// without a new best or at `max_epochs`. Returns the weights of the best
/// validation epoch.
pub fn train(
    spec: &NetworkSpec,
    train_set: &PatchSet,
    val_set: &PatchSet,
    config: &TrainConfig,
) -> Result<(NetworkWeights, TrainLog)> {
    config.validate()?;
    for set in [train_set, val_set] {
        if set.patch_size() != spec.patch_size {
            return Err(Error::SpecMismatch(format!(
                "patch index uses {} px patches, network expects {} px",
                set.patch_size(),
                spec.patch_size
            )));
        }
    }
    let started = Instant::now();
    let mut seeds = ChaCha8Rng::seed_from_u64(config.seed);
    let weights = build_network(spec, seeds.random())?;
    let val = val_set.minibatch(config.target, config.validation_size, seeds.random())?;
    let val_patches: Vec<f32> = val.patches.data().iter().map(|&v| v as f32).collect();

    let mut trainer = Trainer::new(weights, config.learning_rate);
    let mut log = TrainLog::default();
    let mut best: Option<(f64, NetworkWeights)> = None;

    for epoch in 1..=config.max_epochs {
        let mut loss_sum = 0.0;
        for _ in 0..config.batches_per_epoch {
            let batch = train_set.minibatch(config.target, config.batch_size, seeds.random())?;
            let outcome = trainer
                .step(&batch.patches, &batch.labels, seeds.random())
                .map_err(|e| match e {
                    Error::NonFinite(_) => Error::Diverged { epoch },
                    other => other,
                })?;
            loss_sum += outcome.loss;
        }

        let net = InferenceNet::new(&trainer.weights)?;
        let probs = net.positive_probabilities(&val_patches, &mut net.workspace());
        let (val_loss, val_accuracy) = binary_loss_accuracy(&probs, &val.labels);
        if !val_loss.is_finite() {
            return Err(Error::Diverged { epoch });
        }
        if best.as_ref().is_none_or(|(b, _)| val_loss < *b) {
            best = Some((val_loss, trainer.weights.clone()));
        }
        log.push(
            EpochRecord {
                epoch,
                train_loss: loss_sum / config.batches_per_epoch as f64,
                val_loss,
                val_accuracy,
                lr: trainer.lr,
            },
            started.elapsed().as_secs_f64(),
        );
        trainer.lr = plateau_lr_step(&log, config.plateau_window, config.plateau_epsilon, trainer.lr);
        if early_stop_check(&log, config.patience) {
            break;
        }
    }
    log.best_epoch = super::schedule::best_epoch(&log).unwrap_or(0);
    let (_, weights) = best.expect("at least one epoch ran");
    Ok((weights, log))
}
