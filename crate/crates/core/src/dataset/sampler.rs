use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::index::{PatchIndex, PatchRecord};
use super::taxonomy::{PatchClass, Target};
use crate::error::{Error, Result};
use crate::imaging::{fill_patch, transform_square, GrayImage, DIHEDRAL_ORDER};
use crate::tensor::Tensor;

#[derive(Debug, Clone)]
pub struct Minibatch {
    /// `[B, 1, N, N]`.
    pub patches: Tensor,
    /// 1 for positive, 0 for negative.
    pub labels: Vec<usize>,
    pub records: Vec<PatchRecord>,
    pub transforms: Vec<usize>,
}

/// How many draws each class gets: `per_side` split evenly across `classes`,
/// with the remainder going to randomly chosen distinct classes.
fn class_quota(classes: &[PatchClass], per_side: usize, rng: &mut ChaCha8Rng) -> Vec<(PatchClass, usize)> {
    let k = classes.len();
    let mut quota: Vec<(PatchClass, usize)> = classes.iter().map(|&c| (c, per_side / k)).collect();
    let mut order: Vec<usize> = (0..k).collect();
    for i in 0..k {
        let j = rng.random_range(i..k);
        order.swap(i, j);
    }
    for &i in order.iter().take(per_side % k) {
        quota[i].1 += 1;
    }
    quota
}

/// Draws `b / 2` positive and `b / 2` negative patches for `target`. Within a
/// side every class gets an equal share; records are drawn uniformly with
/// replacement and each patch gets a random dihedral transform.
pub fn sample_minibatch(
    index: &PatchIndex,
    images: &[GrayImage],
    target: Target,
    b: usize,
    seed: u64,
) -> Result<Minibatch> {
    if b == 0 || !b.is_multiple_of(2) {
        return Err(Error::invalid(format!("batch size must be even and positive, got {b}")));
    }
    if images.len() != index.manifest.len() {
        return Err(Error::invalid(format!(
            "index lists {} images, {} supplied",
            index.manifest.len(),
            images.len()
        )));
    }
    for c in PatchClass::ALL {
        if index.count(c) == 0 {
            return Err(Error::EmptyClass(c.name()));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = index.patch_size;
    let mut draws = Vec::with_capacity(b);
    for classes in [target.positive_classes(), target.negative_classes()] {
        for (class, count) in class_quota(&classes, b / 2, &mut rng) {
            let pool = index.records(class);
            for _ in 0..count {
                draws.push((
                    pool[rng.random_range(0..pool.len())],
                    rng.random_range(0..DIHEDRAL_ORDER),
                ));
            }
        }
    }

    let mut data = vec![0.0f64; b * n * n];
    let mut scratch = vec![0.0f64; n * n];
    for ((record, t), out) in draws.iter().zip(data.chunks_exact_mut(n * n)) {
        fill_patch(
            &images[record.image as usize],
            record.cx as usize,
            record.cy as usize,
            n,
            &mut scratch,
        );
        out.copy_from_slice(&transform_square(&scratch, n, *t));
    }
    Ok(Minibatch {
        patches: Tensor::new(&[b, 1, n, n], data)?,
        labels: draws.iter().map(|(r, _)| target.label(r.class)).collect(),
        records: draws.iter().map(|(r, _)| *r).collect(),
        transforms: draws.iter().map(|&(_, t)| t).collect(),
    })
}

/// Applies dihedral transform `index` to every trailing square plane of a
/// patch tensor (`[N, N]`, `[C, N, N]` or `[B, C, N, N]`).
pub fn dihedral_augment(patch: &Tensor, index: usize) -> Result<Tensor> {
    let shape = patch.shape();
    let r = shape.len();
    if r < 2 || shape[r - 1] != shape[r - 2] {
        return Err(Error::shape(
            "dihedral_augment",
            format!("expected square planes, got {shape:?}"),
        ));
    }
    if index >= DIHEDRAL_ORDER {
        return Err(Error::invalid(format!("dihedral index {index} outside 0..8")));
    }
    let n = shape[r - 1];
    let data: Vec<f64> = patch
        .data()
        .chunks_exact(n * n)
        .flat_map(|plane| transform_square(plane, n, index))
        .collect();
    Tensor::new(shape, data)
}
