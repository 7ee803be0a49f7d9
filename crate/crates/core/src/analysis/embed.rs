use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dataset::{PatchClass, PatchRecord, PatchSet, Target};
use crate::error::{Error, Result};
use crate::imaging::fill_patch;
use crate::netarch::{NetworkWeights, FC_UNITS};
use crate::tensor::Tensor;

/// Width of the penultimate layer.
pub const FEATURE_WIDTH: usize = FC_UNITS[0];

/// Penultimate-layer features of a sample of patches with their labels.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    pub target: Target,
    pub features: Vec<Vec<f64>>,
    pub classes: Vec<PatchClass>,
    /// 1 for positive, 0 for negative.
    pub true_labels: Vec<usize>,
    pub predicted: Vec<usize>,
    /// Positive-class probability of the full network.
    pub probabilities: Vec<f64>,
    pub records: Vec<PatchRecord>,
}

impl EmbeddingSet {
    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    /// `|true positive indicator - positive probability|`: 0 is a confident
    /// correct answer, 1 a confident wrong one, above 0.5 misclassified.
    pub fn error(&self, row: usize) -> f64 {
        (self.true_labels[row] as f64 - self.probabilities[row]).abs()
    }

    pub fn is_misclassified(&self, row: usize) -> bool {
        self.predicted[row] != self.true_labels[row]
    }

    /// Assembles a set from precomputed rows, checking that the columns agree.
    pub fn from_rows(
        target: Target,
        features: Vec<Vec<f64>>,
        classes: Vec<PatchClass>,
        probabilities: Vec<f64>,
        records: Vec<PatchRecord>,
    ) -> Result<Self> {
        let n = features.len();
        if classes.len() != n || probabilities.len() != n || records.len() != n {
            return Err(Error::invalid("embedding columns differ in length"));
        }
        if let Some(row) = features.iter().find(|f| f.len() != FEATURE_WIDTH) {
            return Err(Error::shape(
                "embedding",
                format!("feature rows must have {FEATURE_WIDTH} entries, got {}", row.len()),
            ));
        }
        Ok(Self {
            target,
            true_labels: classes.iter().map(|&c| target.label(c)).collect(),
            predicted: probabilities.iter().map(|&p| (p >= 0.5) as usize).collect(),
            features,
            classes,
            probabilities,
            records,
        })
    }
}

/// Picks up to `cap` records spread as evenly as possible over the four
/// classes, uniformly without replacement inside each class.
fn balanced_sample(set: &PatchSet, cap: usize, seed: u64) -> Vec<PatchRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sizes = set.index.counts();
    let mut quota = [0usize; 4];
    let mut left = cap.min(set.index.len());
    while left > 0 {
        for c in 0..4 {
            if left > 0 && quota[c] < sizes[c] {
                quota[c] += 1;
                left -= 1;
            }
        }
    }
    let mut out = Vec::with_capacity(cap);
    for class in PatchClass::ALL {
        let pool = set.index.records(class);
        let mut picks = sample(&mut rng, pool.len(), quota[class.index()]).into_vec();
        picks.sort_unstable();
        out.extend(picks.into_iter().map(|i| pool[i]));
    }
    out
}

/// Runs the double-precision inference path over a class-balanced sample of
/// `set` and records features, probabilities and labels.
pub fn collect_embeddings(
    weights: &NetworkWeights,
    set: &PatchSet,
    target: Target,
    cap: usize,
    seed: u64,
) -> Result<EmbeddingSet> {
    let n = weights.spec.patch_size;
    if set.patch_size() != n {
        return Err(Error::SpecMismatch(format!(
            "index patches are {} px, network expects {n} px",
            set.patch_size()
        )));
    }
    let records = balanced_sample(set, cap, seed);
    let mut features = Vec::with_capacity(records.len());
    let mut probabilities = Vec::with_capacity(records.len());
    for chunk in records.chunks(64) {
        let mut data = vec![0.0f64; chunk.len() * n * n];
        for (r, slot) in chunk.iter().zip(data.chunks_exact_mut(n * n)) {
            fill_patch(&set.images[r.image as usize], r.cx as usize, r.cy as usize, n, slot);
        }
        let batch = Tensor::new(&[chunk.len(), 1, n, n], data)?;
        let f = weights.penultimate_features(&batch)?;
        features.extend(f.data().chunks_exact(FEATURE_WIDTH).map(<[f64]>::to_vec));
        let p = weights.predict(&batch)?;
        probabilities.extend(p.data().chunks_exact(2).map(|row| row[1]));
    }
    let classes = records.iter().map(|r| r.class).collect();
    EmbeddingSet::from_rows(target, features, classes, probabilities, records)
}
