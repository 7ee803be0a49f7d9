//! Softmax posterior and categorical cross-entropy.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Probabilities below this are clamped before taking the log.
pub const LOG_FLOOR: f64 = 1e-12;

/// Row-wise softmax of a `B x K` score matrix, stabilized by subtracting the
/// row maximum.
pub fn softmax(scores: &Tensor) -> Result<Tensor> {
    let (b, k) = scores.dims2("softmax")?;
    if k < 2 {
        return Err(Error::shape("softmax", format!("need at least 2 classes, got {k}")));
    }
    let mut out = scores.clone();
    for row in 0..b {
        let r = out.item_mut(row);
        let max = r.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for v in r.iter_mut() {
            *v = (*v - max).exp();
            total += *v;
        }
        for v in r.iter_mut() {
            *v /= total;
        }
    }
    Ok(out)
}

pub fn one_hot(labels: &[usize], classes: usize) -> Result<Tensor> {
    let mut t = Tensor::zeros(&[labels.len().max(1), classes]);
    if labels.is_empty() {
        return Err(Error::invalid("one_hot: no labels"));
    }
    for (row, &l) in labels.iter().enumerate() {
        if l >= classes {
            return Err(Error::invalid(format!("label {l} out of range for {classes} classes")));
        }
        t.item_mut(row)[l] = 1.0;
    }
    Ok(t)
}

/// Mean over the batch of `-sum_j y_j log(p_j)`, together with the gradient
/// of softmax followed by this loss with respect to the scores,
/// `(probs - labels) / B`.
pub fn cross_entropy(probs: &Tensor, labels: &Tensor) -> Result<(f64, Tensor)> {
    let (b, k) = probs.dims2("cross_entropy")?;
    if labels.shape() != probs.shape() {
        return Err(Error::shape(
            "cross_entropy",
            format!("labels {:?} vs probs {:?}", labels.shape(), probs.shape()),
        ));
    }
    let mut loss = 0.0;
    for row in 0..b {
        let y = labels.item(row);
        let ones = y.iter().filter(|&&v| v == 1.0).count();
        let zeros = y.iter().filter(|&&v| v == 0.0).count();
        if ones != 1 || zeros != k - 1 {
            return Err(Error::invalid(format!("cross_entropy: label row {row} is not one-hot")));
        }
        let p = probs.item(row);
        let total: f64 = p.iter().sum();
        if (total - 1.0).abs() > 1e-6 {
            return Err(Error::invalid(format!(
                "cross_entropy: probability row {row} sums to {total}"
            )));
        }
        loss -= y
            .iter()
            .zip(p)
            .filter(|(&yj, _)| yj != 0.0)
            .map(|(&yj, &pj)| yj * pj.max(LOG_FLOOR).ln())
            .sum::<f64>();
    }
    let mut grad = probs.clone();
    for (g, &y) in grad.data_mut().iter_mut().zip(labels.data()) {
        *g = (*g - y) / b as f64;
    }
    Ok((loss / b as f64, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neuralcore::gradcheck::{finite_diff_grad, max_relative_error};
    use proptest::prelude::*;

    #[test]
    fn symmetric_scores_give_uniform_probabilities() {
        let p = softmax(&Tensor::new(&[1, 2], vec![0.0, 0.0]).unwrap()).unwrap();
        assert_eq!(p.data(), &[0.5, 0.5]);
        for c in [-7.0, 0.0, 3.5, 1e3] {
            let p = softmax(&Tensor::full(&[1, 4], c)).unwrap();
            assert!(p.data().iter().all(|&v| (v - 0.25).abs() < 1e-15));
        }
    }

    #[test]
    fn large_shift_is_stable() {
        let s = Tensor::new(&[2, 3], vec![0.1, -1.2, 2.0, 5.0, 5.5, -3.0]).unwrap();
        let mut shifted = s.clone();
        shifted.data_mut().iter_mut().for_each(|v| *v += 1000.0);
        let (a, b) = (softmax(&s).unwrap(), softmax(&shifted).unwrap());
        for (x, y) in a.data().iter().zip(b.data()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn one_class_rejected() {
        assert!(softmax(&Tensor::zeros(&[3, 1])).is_err());
    }

    #[test]
    fn perfect_prediction_has_zero_loss() {
        let y = one_hot(&[0, 1], 2).unwrap();
        let (loss, grad) = cross_entropy(&y, &y).unwrap();
        assert_eq!(loss, 0.0);
        assert!(grad.data().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn half_half_costs_ln2() {
        let y = one_hot(&[0], 2).unwrap();
        let p = Tensor::new(&[1, 2], vec![0.5, 0.5]).unwrap();
        let (loss, _) = cross_entropy(&p, &y).unwrap();
        assert!((loss - std::f64::consts::LN_2).abs() < 1e-12);
        assert!((loss - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn zero_probability_is_floored() {
        let y = one_hot(&[1], 2).unwrap();
        let p = Tensor::new(&[1, 2], vec![1.0, 0.0]).unwrap();
        let (loss, _) = cross_entropy(&p, &y).unwrap();
        assert!((loss - (-LOG_FLOOR.ln())).abs() < 1e-9);
    }

    #[test]
    fn non_one_hot_labels_rejected() {
        let p = Tensor::new(&[1, 2], vec![0.5, 0.5]).unwrap();
        let y = Tensor::new(&[1, 2], vec![0.5, 0.5]).unwrap();
        assert!(cross_entropy(&p, &y).is_err());
    }

    #[test]
    fn combined_gradient_matches_finite_differences() {
        let scores = vec![0.3, -1.1, 2.2, 0.4, -0.7, -0.2, 1.5, 1.4];
        let y = one_hot(&[1, 0, 0, 1], 2).unwrap();
        let f = |s: &[f64]| {
            let p = softmax(&Tensor::new(&[4, 2], s.to_vec()).unwrap()).unwrap();
            cross_entropy(&p, &y).unwrap().0
        };
        let p = softmax(&Tensor::new(&[4, 2], scores.clone()).unwrap()).unwrap();
        let (_, grad) = cross_entropy(&p, &y).unwrap();
        let fd = finite_diff_grad(f, &scores, 1e-5);
        assert!(max_relative_error(grad.data(), &fd) < 1e-4);
    }

    proptest! {
        #[test]
        fn softmax_rows_are_distributions(s in proptest::collection::vec(-15.0f64..15.0, 2..12)) {
            let k = s.len();
            let p = softmax(&Tensor::new(&[1, k], s.clone()).unwrap()).unwrap();
            prop_assert!(p.data().iter().all(|&v| v > 0.0 && v < 1.0));
            prop_assert!((p.sum() - 1.0).abs() < 1e-12);
            let shifted: Vec<f64> = s.iter().map(|v| v + 17.25).collect();
            let q = softmax(&Tensor::new(&[1, k], shifted).unwrap()).unwrap();
            for (a, b) in p.data().iter().zip(q.data()) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }

        #[test]
        fn cross_entropy_non_negative(s in proptest::collection::vec(-10.0f64..10.0, 2), label in 0usize..2) {
            let p = softmax(&Tensor::new(&[1, 2], s).unwrap()).unwrap();
            let (loss, _) = cross_entropy(&p, &one_hot(&[label], 2).unwrap()).unwrap();
            prop_assert!(loss >= 0.0);
        }
    }
}
