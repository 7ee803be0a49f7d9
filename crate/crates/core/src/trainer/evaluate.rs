use std::fmt;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dataset::{PatchClass, PatchRecord, PatchSet, Target};
use crate::error::{Error, Result};
use crate::imaging::fill_patch;
use crate::netarch::{InferenceNet, NetworkWeights};

/// Per-class test error and overall accuracy of one network, in percent.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassErrorTable {
    pub target: Target,
    pub errors: [f64; 4],
    pub counts: [usize; 4],
    /// Accuracy on an equal mix of positive and negative patches where each
    /// side weighs its classes equally: the mean of the positive-side and
    /// negative-side class accuracies.
    pub overall_accuracy: f64,
}

impl ClassErrorTable {
    /// Builds the table from `(class, positive probability)` pairs; a
    /// prediction is positive when its probability is at least 0.5.
    pub fn from_predictions(target: Target, predictions: &[(PatchClass, f64)]) -> Result<Self> {
        let mut wrong = [0usize; 4];
        let mut counts = [0usize; 4];
        for &(class, p) in predictions {
            counts[class.index()] += 1;
            if (p >= 0.5) != target.is_positive(class) {
                wrong[class.index()] += 1;
            }
        }
        if let Some(c) = PatchClass::ALL.into_iter().find(|c| counts[c.index()] == 0) {
            return Err(Error::EmptyClass(c.name()));
        }
        let errors = PatchClass::ALL.map(|c| 100.0 * wrong[c.index()] as f64 / counts[c.index()] as f64);
        let side = |classes: Vec<PatchClass>| {
            classes.iter().map(|c| 100.0 - errors[c.index()]).sum::<f64>() / classes.len() as f64
        };
        let overall_accuracy = 0.5 * (side(target.positive_classes()) + side(target.negative_classes()));
        Ok(Self {
            target,
            errors,
            counts,
            overall_accuracy,
        })
    }

    pub fn error(&self, class: PatchClass) -> f64 {
        self.errors[class.index()]
    }

    /// Class with the highest error rate (the earliest one on ties).
    pub fn worst_class(&self) -> PatchClass {
        PatchClass::ALL
            .into_iter()
            .fold(PatchClass::C1, |w, c| if self.error(c) > self.error(w) { c } else { w })
    }

    pub fn header() -> String {
        format!(
            "{:<12}{:>10}{:>10}{:>10}{:>10}{:>18}",
            "Network", "C1 err %", "C2 err %", "C3 err %", "C4 err %", "Overall acc %"
        )
    }

    pub fn row(&self) -> String {
        let name = match self.target {
            Target::Detector => "Detector",
            Target::Segmentator => "Segmentator",
        };
        format!(
            "{:<12}{:>10.2}{:>10.2}{:>10.2}{:>10.2}{:>18.2}",
            name, self.errors[0], self.errors[1], self.errors[2], self.errors[3], self.overall_accuracy
        )
    }
}

impl fmt::Display for ClassErrorTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{}", Self::header())?;
        write!(f, "{}", self.row())
    }
}

#[derive(Debug, Clone)]
pub struct ClassEvaluation {
    pub table: ClassErrorTable,
    /// Raw positive-class probability for every evaluated record.
    pub predictions: Vec<(PatchRecord, f64)>,
}

/// Evaluates up to `per_class_cap` records of each class, chosen uniformly
/// without replacement, on unaugmented patches.
pub fn evaluate_per_class(
    weights: &NetworkWeights,
    set: &PatchSet,
    target: Target,
    per_class_cap: usize,
    seed: u64,
) -> Result<ClassEvaluation> {
    if set.patch_size() != weights.spec.patch_size {
        return Err(Error::SpecMismatch(format!(
            "index patches are {} px, network expects {} px",
            set.patch_size(),
            weights.spec.patch_size
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen = Vec::new();
    for class in PatchClass::ALL {
        let pool = set.index.records(class);
        if pool.is_empty() {
            return Err(Error::EmptyClass(class.name()));
        }
        if pool.len() <= per_class_cap {
            chosen.extend_from_slice(pool);
        } else {
            let mut picks = sample(&mut rng, pool.len(), per_class_cap).into_vec();
            picks.sort_unstable();
            chosen.extend(picks.into_iter().map(|i| pool[i]));
        }
    }
    let probs = predict_records(weights, set, &chosen)?;
    let pairs: Vec<(PatchClass, f64)> = chosen.iter().zip(&probs).map(|(r, &p)| (r.class, p)).collect();
    Ok(ClassEvaluation {
        table: ClassErrorTable::from_predictions(target, &pairs)?,
        predictions: chosen.into_iter().zip(probs).collect(),
    })
}

/// Positive-class probabilities of the centered patches of `records`.
pub fn predict_records(weights: &NetworkWeights, set: &PatchSet, records: &[PatchRecord]) -> Result<Vec<f64>> {
    let net = InferenceNet::new(weights)?;
    let mut ws = net.workspace();
    let n = weights.spec.patch_size;
    let mut out = Vec::with_capacity(records.len());
    let mut buf = vec![0.0f32; 256 * n * n];
    for chunk in records.chunks(256) {
        let buf = &mut buf[..chunk.len() * n * n];
        for (r, slot) in chunk.iter().zip(buf.chunks_exact_mut(n * n)) {
            fill_patch(&set.images[r.image as usize], r.cx as usize, r.cy as usize, n, slot);
        }
        out.extend(net.positive_probabilities(buf, &mut ws));
    }
    Ok(out)
}
