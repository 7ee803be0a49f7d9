//! 2x2 / stride-2 max pooling with explicit odd-extent policy.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// How a trailing odd row/column is treated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PoolRounding {
    /// Drop the trailing row/column (`47 -> 23`).
    Floor,
    /// Keep it as a partial window (`49 -> 25`).
    Ceil,
}

impl PoolRounding {
    pub fn output_extent(self, extent: usize) -> usize {
        match self {
            PoolRounding::Floor => extent / 2,
            PoolRounding::Ceil => extent.div_ceil(2),
        }
    }
}

/// Flat input index of the winner of every output cell.
#[derive(Debug, Clone, PartialEq)]
pub struct ArgmaxMap {
    input_shape: Vec<usize>,
    winners: Vec<usize>,
}

impl ArgmaxMap {
    pub fn winners(&self) -> &[usize] {
        &self.winners
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }
}

/// Max over each 2x2 window. Partial windows (ceil policy) take the max over
/// their in-bounds cells only; with non-negative inputs this equals zero
/// padding. Ties go to the first cell in row-major window order.
pub fn maxpool2x2(input: &Tensor, rounding: PoolRounding) -> Result<(Tensor, ArgmaxMap)> {
    let (b, c, h, w) = input.dims4("maxpool2x2")?;
    if h < 2 || w < 2 {
        return Err(Error::shape("maxpool2x2", format!("{h}x{w} input is smaller than 2x2")));
    }
    let (oh, ow) = (rounding.output_extent(h), rounding.output_extent(w));
    let mut out = Tensor::zeros(&[b, c, oh, ow]);
    let mut winners = Vec::with_capacity(b * c * oh * ow);
    let x = input.data();
    let o = out.data_mut();
    let mut k = 0;
    for plane in 0..b * c {
        let base = plane * h * w;
        for i in 0..oh {
            for j in 0..ow {
                let mut best = base + 2 * i * w + 2 * j;
                for (di, dj) in [(0, 1), (1, 0), (1, 1)] {
                    let (y, xx) = (2 * i + di, 2 * j + dj);
                    if y < h && xx < w {
                        let idx = base + y * w + xx;
                        if x[idx] > x[best] {
                            best = idx;
                        }
                    }
                }
                o[k] = x[best];
                winners.push(best);
                k += 1;
            }
        }
    }
    Ok((
        out,
        ArgmaxMap {
            input_shape: input.shape().to_vec(),
            winners,
        },
    ))
}

/// Routes each upstream gradient entry to its window's winner.
pub fn maxpool2x2_backward(upstream: &Tensor, argmax: &ArgmaxMap) -> Result<Tensor> {
    if upstream.len() != argmax.winners.len() {
        return Err(Error::shape(
            "maxpool2x2_backward",
            format!(
                "upstream has {} entries, argmax map {}",
                upstream.len(),
                argmax.winners.len()
            ),
        ));
    }
    let mut grad = Tensor::zeros(&argmax.input_shape);
    let g = grad.data_mut();
    for (&idx, &u) in argmax.winners.iter().zip(upstream.data()) {
        g[idx] += u;
    }
    Ok(grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn two_by_two_picks_max() {
        let x = Tensor::new(&[1, 1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let (y, map) = maxpool2x2(&x, PoolRounding::Floor).unwrap();
        assert_eq!(y.data(), &[4.0]);
        assert_eq!(map.winners(), &[3]); // (1, 1)
    }

    #[test]
    fn odd_extent_policies() {
        let x = Tensor::zeros(&[1, 1, 49, 49]);
        let (ceil, _) = maxpool2x2(&x, PoolRounding::Ceil).unwrap();
        assert_eq!(ceil.shape(), &[1, 1, 25, 25]);
        let x = Tensor::zeros(&[1, 1, 47, 47]);
        let (floor, _) = maxpool2x2(&x, PoolRounding::Floor).unwrap();
        assert_eq!(floor.shape(), &[1, 1, 23, 23]);
    }

    #[test]
    fn ceil_partial_window_uses_in_bounds_cells() {
        let x = Tensor::new(&[1, 1, 3, 3], (1..=9).map(f64::from).collect()).unwrap();
        let (y, _) = maxpool2x2(&x, PoolRounding::Ceil).unwrap();
        assert_eq!(y.data(), &[5.0, 6.0, 8.0, 9.0]);
    }

    #[test]
    fn backward_routes_to_winner() {
        let x = Tensor::new(&[1, 1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let (_, map) = maxpool2x2(&x, PoolRounding::Floor).unwrap();
        let g = maxpool2x2_backward(&Tensor::full(&[1, 1, 1, 1], 1.0), &map).unwrap();
        assert_eq!(g.data(), &[0.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn too_small_rejected() {
        assert!(maxpool2x2(&Tensor::zeros(&[1, 1, 1, 4]), PoolRounding::Ceil).is_err());
    }

    proptest! {
        #[test]
        fn backward_conserves_gradient_mass(
            h in 2usize..9, w in 2usize..9, ceil in any::<bool>(), seed in any::<u64>()
        ) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let x = Tensor::new(&[2, 2, h, w], (0..4 * h * w).map(|_| rng.random()).collect()).unwrap();
            let rounding = if ceil { PoolRounding::Ceil } else { PoolRounding::Floor };
            let (y, map) = maxpool2x2(&x, rounding).unwrap();
            let up = Tensor::new(y.shape(), (0..y.len()).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
            let g = maxpool2x2_backward(&up, &map).unwrap();
            prop_assert!((g.sum() - up.sum()).abs() < 1e-12);
        }
    }
}
