use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// He (Kaiming) normal initialization: i.i.d. N(0, 2 / fan_in).
pub fn he_init(fan_in: usize, shape: &[usize], seed: u64) -> Result<Tensor> {
    if fan_in == 0 {
        return Err(Error::invalid("he_init: fan_in must be at least 1"));
    }
    let std = (2.0 / fan_in as f64).sqrt();
    let normal = Normal::new(0.0, std).map_err(|e| Error::invalid(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let len: usize = shape.iter().product();
    let data = (0..len).map(|_| normal.sample(&mut rng)).collect();
    Tensor::new(shape, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn moments(t: &Tensor) -> (f64, f64) {
        let n = t.len() as f64;
        let mean = t.sum() / n;
        let var = t.data().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        (mean, var)
    }

    #[test]
    fn variance_is_two_over_fan_in() {
        let t = he_init(9, &[1000, 1000], 7).unwrap();
        let (_, var) = moments(&t);
        assert!((var - 2.0 / 9.0).abs() < 0.05 * 2.0 / 9.0, "var {var}");
    }

    #[test]
    fn mean_is_zero() {
        let t = he_init(2, &[1000, 1000], 11).unwrap();
        let (mean, _) = moments(&t);
        assert!(mean.abs() < 0.005, "mean {mean}");
    }

    #[test]
    fn deterministic_per_seed() {
        let a = he_init(9, &[3, 3], 42).unwrap();
        let b = he_init(9, &[3, 3], 42).unwrap();
        let c = he_init(9, &[3, 3], 43).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn zero_fan_in_rejected() {
        assert!(he_init(0, &[3, 3], 1).is_err());
    }
}
