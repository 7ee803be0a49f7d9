use std::fmt::Write as _;

/// One epoch of a training run.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_accuracy: f64,
    /// Learning rate used during this epoch.
    pub lr: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainLog {
    pub epochs: Vec<EpochRecord>,
    /// Cumulative wall-clock seconds at the end of each epoch. Kept apart
    /// from `epochs` so runs can be compared for exact equality.
    pub wall_seconds: Vec<f64>,
    /// Epoch (1-based) of the returned checkpoint.
    pub best_epoch: usize,
}

impl TrainLog {
    pub fn push(&mut self, record: EpochRecord, wall: f64) {
        self.epochs.push(record);
        self.wall_seconds.push(wall);
    }

    pub fn val_losses(&self) -> Vec<f64> {
        self.epochs.iter().map(|e| e.val_loss).collect()
    }

    /// Tab-separated table with a header row.
    pub fn to_tsv(&self) -> String {
        let mut s = String::from("epoch\ttrain_loss\tval_loss\tval_accuracy\tlr\twall_s\n");
        for (e, wall) in self.epochs.iter().zip(&self.wall_seconds) {
            let _ = writeln!(
                s,
                "{}\t{:.6}\t{:.6}\t{:.4}\t{:e}\t{:.1}",
                e.epoch, e.train_loss, e.val_loss, e.val_accuracy, e.lr, wall
            );
        }
        s
    }
}

/// Halves `lr` when the last `window` epochs, all run at `lr`, failed to
/// beat the best validation loss seen before them by more than `epsilon`.
/// The window must be fresh: after a halving, `window` epochs at the new rate
/// are needed before the next one.
pub fn plateau_lr_step(log: &TrainLog, window: usize, epsilon: f64, lr: f64) -> f64 {
    let window = window.max(1);
    let e = &log.epochs;
    if e.len() <= window {
        return lr;
    }
    let (before, recent) = e.split_at(e.len() - window);
    if recent.iter().any(|r| r.lr != lr) {
        return lr;
    }
    let best_before = before.iter().map(|r| r.val_loss).fold(f64::INFINITY, f64::min);
    let best_recent = recent.iter().map(|r| r.val_loss).fold(f64::INFINITY, f64::min);
    if best_before - best_recent > epsilon {
        lr
    } else {
        lr / 2.0
    }
}

/// 1-based epoch of the first strict minimum of the validation loss.
pub fn best_epoch(log: &TrainLog) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for r in &log.epochs {
        if best.is_none_or(|(_, b)| r.val_loss < b) {
            best = Some((r.epoch, r.val_loss));
        }
    }
    best.map(|b| b.0)
}

/// Stop once `patience` epochs have passed without a new best validation
/// loss.
pub fn early_stop_check(log: &TrainLog, patience: usize) -> bool {
    match (best_epoch(log), log.epochs.last()) {
        (Some(best), Some(last)) => last.epoch - best >= patience.max(1),
        _ => false,
    }
}
