use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Shuffles `0..count` with `seed` and cuts it into consecutive parts of the
/// given sizes, which must add up to `count`. Each part is returned sorted.
pub fn seeded_split(count: usize, sizes: &[usize], seed: u64) -> Result<Vec<Vec<usize>>> {
    if sizes.iter().sum::<usize>() != count {
        return Err(Error::invalid(format!(
            "split sizes {sizes:?} do not add up to {count}"
        )));
    }
    let mut order: Vec<usize> = (0..count).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut parts = Vec::with_capacity(sizes.len());
    let mut rest = order.as_slice();
    for &s in sizes {
        let (head, tail) = rest.split_at(s);
        let mut part = head.to_vec();
        part.sort_unstable();
        parts.push(part);
        rest = tail;
    }
    Ok(parts)
}
