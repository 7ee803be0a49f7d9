use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::batchnorm::Phase;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub fn relu(input: &Tensor) -> Tensor {
    let mut out = input.clone();
    for v in out.data_mut() {
        *v = v.max(0.0);
    }
    out
}

/// Passes `upstream` where the forward input was strictly positive.
pub fn relu_backward(input: &Tensor, upstream: &Tensor) -> Result<Tensor> {
    if input.shape() != upstream.shape() {
        return Err(Error::shape(
            "relu_backward",
            format!("{:?} vs {:?}", input.shape(), upstream.shape()),
        ));
    }
    let data = input
        .data()
        .iter()
        .zip(upstream.data())
        .map(|(&x, &g)| if x > 0.0 { g } else { 0.0 })
        .collect();
    Tensor::new(input.shape(), data)
}

/// Per-unit multipliers of one dropout draw: `0` or `1 / keep_prob`.
#[derive(Debug, Clone, PartialEq)]
pub struct DropoutMask {
    scale: Option<Vec<f64>>,
}

impl DropoutMask {
    pub fn identity() -> Self {
        Self { scale: None }
    }

    pub fn apply(&self, t: &Tensor) -> Result<Tensor> {
        match &self.scale {
            None => Ok(t.clone()),
            Some(s) if s.len() == t.len() => {
                let data = t.data().iter().zip(s).map(|(v, m)| v * m).collect();
                Tensor::new(t.shape(), data)
            }
            Some(s) => Err(Error::shape(
                "dropout",
                format!("mask has {} units, tensor {}", s.len(), t.len()),
            )),
        }
    }

    /// Fraction of units kept (1.0 for the identity mask).
    pub fn kept_fraction(&self) -> f64 {
        match &self.scale {
            None => 1.0,
            Some(s) => s.iter().filter(|&&m| m != 0.0).count() as f64 / s.len() as f64,
        }
    }
}

/// Inverted dropout: in training, each unit is zeroed with probability
/// `1 - keep_prob` and survivors are scaled by `1 / keep_prob`; inference is
/// the identity.
pub fn dropout(input: &Tensor, keep_prob: f64, phase: Phase, seed: u64) -> Result<(Tensor, DropoutMask)> {
    if !(keep_prob > 0.0 && keep_prob <= 1.0) {
        return Err(Error::invalid(format!("dropout: keep_prob {keep_prob} outside (0, 1]")));
    }
    if phase == Phase::Infer || keep_prob == 1.0 {
        return Ok((input.clone(), DropoutMask::identity()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let inv = 1.0 / keep_prob;
    let scale: Vec<f64> = (0..input.len())
        .map(|_| if rng.random::<f64>() < keep_prob { inv } else { 0.0 })
        .collect();
    let mask = DropoutMask { scale: Some(scale) };
    Ok((mask.apply(input)?, mask))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relu_clamps_negatives() {
        let x = Tensor::new(&[3], vec![-1.0, 0.0, 2.0]).unwrap();
        assert_eq!(relu(&x).data(), &[0.0, 0.0, 2.0]);
        let neg = Tensor::full(&[2, 3], -0.5);
        assert!(relu(&neg).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn relu_gradient() {
        let x = Tensor::new(&[2], vec![3.0, -3.0]).unwrap();
        let g = relu_backward(&x, &Tensor::full(&[2], 1.0)).unwrap();
        assert_eq!(g.data(), &[1.0, 0.0]);
    }

    #[test]
    fn dropout_infer_and_keep_one_are_identity() {
        let x = Tensor::new(&[4], vec![0.1, -2.0, 3.5, 1e-9]).unwrap();
        let (y, _) = dropout(&x, 0.5, Phase::Infer, 1).unwrap();
        assert_eq!(y, x);
        let (y, _) = dropout(&x, 1.0, Phase::Train, 1).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn dropout_keeps_half_and_preserves_expectation() {
        let x = Tensor::full(&[1000, 1000], 2.0);
        let (y, mask) = dropout(&x, 0.5, Phase::Train, 9).unwrap();
        assert!((mask.kept_fraction() - 0.5).abs() < 0.002);
        let mean = y.sum() / y.len() as f64;
        assert!((mean - 2.0).abs() < 0.01, "mean {mean}");
    }

    #[test]
    fn dropout_rejects_bad_keep_prob() {
        let x = Tensor::zeros(&[2]);
        assert!(dropout(&x, 0.0, Phase::Train, 1).is_err());
        assert!(dropout(&x, -0.5, Phase::Train, 1).is_err());
        assert!(dropout(&x, 1.5, Phase::Train, 1).is_err());
    }
}
