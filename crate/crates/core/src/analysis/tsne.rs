//! Exact t-SNE: per-point Gaussian bandwidths calibrated to a target
//! perplexity, symmetrized affinities, Student-t output kernel, and gradient
//! descent with momentum, per-coordinate gains and early exaggeration.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TsneConfig {
    pub perplexity: f64,
    pub iterations: usize,
    pub exaggeration: f64,
    pub exaggeration_iterations: usize,
    pub learning_rate: f64,
    pub initial_momentum: f64,
    pub final_momentum: f64,
    pub momentum_switch: usize,
    /// Allowed gap between realized and target perplexity per row.
    pub perplexity_tolerance: f64,
}

impl Default for TsneConfig {
    fn default() -> Self {
        Self {
            perplexity: 30.0,
            iterations: 1000,
            exaggeration: 4.0,
            exaggeration_iterations: 100,
            learning_rate: 200.0,
            initial_momentum: 0.5,
            final_momentum: 0.8,
            momentum_switch: 250,
            perplexity_tolerance: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProjectedPoints {
    pub points: Vec<[f64; 2]>,
    /// KL(P || Q) at the initial layout and at the end.
    pub initial_kl: f64,
    pub final_kl: f64,
    /// Realized perplexity of each row's conditional distribution.
    pub perplexities: Vec<f64>,
}

fn squared_distances(x: &[Vec<f64>]) -> Vec<f64> {
    let n = x.len();
    let mut d = vec![0.0; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let v: f64 = x[i].iter().zip(&x[j]).map(|(a, b)| (a - b) * (a - b)).sum();
            d[i * n + j] = v;
            d[j * n + i] = v;
        }
    }
    d
}

/// Conditional distribution `p_{j|i}` for precision `beta` and its Shannon
/// entropy in nats.
fn conditional_row(dist: &[f64], i: usize, beta: f64, row: &mut [f64]) -> f64 {
    let min = dist
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != i)
        .map(|(_, &d)| d)
        .fold(f64::INFINITY, f64::min);
    let mut sum = 0.0;
    for (j, (p, &d)) in row.iter_mut().zip(dist).enumerate() {
        *p = if j == i { 0.0 } else { (-(d - min) * beta).exp() };
        sum += *p;
    }
    let mut entropy = 0.0;
    for p in row.iter_mut() {
        *p /= sum;
        if *p > 0.0 {
            entropy -= *p * p.ln();
        }
    }
    entropy
}

/// Row-conditional affinities calibrated by bisection on the precision, and
/// the realized perplexity of each row.
pub fn calibrate_affinities(features: &[Vec<f64>], perplexity: f64, tolerance: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = features.len();
    if perplexity.is_nan() || perplexity <= 0.0 || (n as f64) < 3.0 * perplexity {
        return Err(Error::invalid(format!(
            "perplexity {perplexity} needs at least {} points, got {n}",
            (3.0 * perplexity).ceil()
        )));
    }
    let dist = squared_distances(features);
    let mut p = vec![0.0; n * n];
    let mut realized = Vec::with_capacity(n);
    let target = perplexity.ln();
    for i in 0..n {
        let d = &dist[i * n..(i + 1) * n];
        let row = &mut p[i * n..(i + 1) * n];
        let (mut lo, mut hi) = (0.0f64, f64::INFINITY);
        let mut beta = 1.0;
        let mut entropy = conditional_row(d, i, beta, row);
        for _ in 0..200 {
            if (entropy.exp() - perplexity).abs() < tolerance {
                break;
            }
            // entropy falls as the precision grows
            if entropy > target {
                lo = beta;
                beta = if hi.is_finite() { 0.5 * (beta + hi) } else { beta * 2.0 };
            } else {
                hi = beta;
                beta = 0.5 * (beta + lo);
            }
            entropy = conditional_row(d, i, beta, row);
        }
        realized.push(entropy.exp());
    }
    Ok((p, realized))
}

/// Symmetric joint affinities `(p_{j|i} + p_{i|j}) / 2n`.
pub fn joint_affinities(conditional: &[f64], n: usize) -> Vec<f64> {
    let mut p = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            p[i * n + j] = (conditional[i * n + j] + conditional[j * n + i]) / (2.0 * n as f64);
        }
    }
    p
}

fn student_kernel(y: &[[f64; 2]], num: &mut [f64]) -> f64 {
    let n = y.len();
    let mut sum = 0.0;
    for i in 0..n {
        num[i * n + i] = 0.0;
        for j in i + 1..n {
            let dx = y[i][0] - y[j][0];
            let dy = y[i][1] - y[j][1];
            let v = 1.0 / (1.0 + dx * dx + dy * dy);
            num[i * n + j] = v;
            num[j * n + i] = v;
            sum += 2.0 * v;
        }
    }
    sum
}

/// `KL(P || Q)` of a layout.
pub fn kl_divergence(p: &[f64], y: &[[f64; 2]]) -> f64 {
    let n = y.len();
    let mut num = vec![0.0; n * n];
    let z = student_kernel(y, &mut num);
    p.iter()
        .zip(&num)
        .filter(|(&pij, _)| pij > 0.0)
        .map(|(&pij, &q)| pij * (pij / (q / z).max(1e-300)).ln())
        .sum()
}

/// Projects `features` to 2-D starting from a small seeded Gaussian layout.
pub fn tsne_project(features: &[Vec<f64>], config: &TsneConfig, seed: u64) -> Result<ProjectedPoints> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1e-2).expect("valid sigma");
    let init: Vec<[f64; 2]> = (0..features.len())
        .map(|_| [normal.sample(&mut rng), normal.sample(&mut rng)])
        .collect();
    tsne_project_from(features, init, config)
}

/// Projects `features` starting from the given layout.
pub fn tsne_project_from(features: &[Vec<f64>], init: Vec<[f64; 2]>, config: &TsneConfig) -> Result<ProjectedPoints> {
    let n = features.len();
    if init.len() != n {
        return Err(Error::invalid("initial layout must have one point per row"));
    }
    let (conditional, perplexities) = calibrate_affinities(features, config.perplexity, config.perplexity_tolerance)?;
    let p = joint_affinities(&conditional, n);
    let mut y = init;
    let initial_kl = kl_divergence(&p, &y);

    let mut velocity = vec![[0.0f64; 2]; n];
    let mut gains = vec![[1.0f64; 2]; n];
    let mut num = vec![0.0; n * n];
    let mut grad = vec![[0.0f64; 2]; n];
    for it in 0..config.iterations {
        let exaggeration = if it < config.exaggeration_iterations {
            config.exaggeration
        } else {
            1.0
        };
        let momentum = if it < config.momentum_switch {
            config.initial_momentum
        } else {
            config.final_momentum
        };
        let z = student_kernel(&y, &mut num);
        for i in 0..n {
            let mut g = [0.0, 0.0];
            for j in 0..n {
                let w = num[i * n + j];
                let coeff = (exaggeration * p[i * n + j] - w / z) * w;
                g[0] += coeff * (y[i][0] - y[j][0]);
                g[1] += coeff * (y[i][1] - y[j][1]);
            }
            grad[i] = [4.0 * g[0], 4.0 * g[1]];
        }
        for i in 0..n {
            for d in 0..2 {
                // grow the step while the gradient keeps its direction
                gains[i][d] = if (grad[i][d] > 0.0) != (velocity[i][d] > 0.0) {
                    gains[i][d] + 0.2
                } else {
                    (gains[i][d] * 0.8).max(0.01)
                };
                velocity[i][d] = momentum * velocity[i][d] - config.learning_rate * gains[i][d] * grad[i][d];
                y[i][d] += velocity[i][d];
            }
        }
        let (mx, my) = y.iter().fold((0.0, 0.0), |a, p| (a.0 + p[0], a.1 + p[1]));
        for pt in &mut y {
            pt[0] -= mx / n as f64;
            pt[1] -= my / n as f64;
        }
    }
    let final_kl = kl_divergence(&p, &y);
    Ok(ProjectedPoints {
        points: y,
        initial_kl,
        final_kl,
        perplexities,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn blobs(n: usize, dim: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|i| {
                let centre = (i % 3) as f64 * 5.0;
                (0..dim).map(|_| centre + rng.random::<f64>()).collect()
            })
            .collect()
    }

    #[test]
    fn calibration_hits_the_target_perplexity() {
        let x = blobs(120, 8, 1);
        let (cond, perp) = calibrate_affinities(&x, 30.0, 1e-4).unwrap();
        assert!(perp.iter().all(|&p| (p - 30.0).abs() < 1e-3));
        for row in cond.chunks(120) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn joint_is_symmetric_and_normalized() {
        let x = blobs(60, 5, 2);
        let (cond, _) = calibrate_affinities(&x, 10.0, 1e-4).unwrap();
        let p = joint_affinities(&cond, 60);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for i in 0..60 {
            for j in 0..60 {
                assert!((p[i * 60 + j] - p[j * 60 + i]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn too_few_points_rejected() {
        assert!(calibrate_affinities(&blobs(50, 3, 0), 30.0, 1e-4).is_err());
    }

    #[test]
    fn descent_lowers_kl_and_separates_blobs() {
        let x = blobs(90, 10, 3);
        let config = TsneConfig {
            perplexity: 10.0,
            iterations: 300,
            ..TsneConfig::default()
        };
        let out = tsne_project(&x, &config, 4).unwrap();
        assert!(out.final_kl < out.initial_kl);
        // every point's nearest neighbour in the plane comes from its own blob
        for i in 0..90 {
            let nearest = (0..90)
                .filter(|&j| j != i)
                .min_by(|&a, &b| {
                    let d = |j: usize| {
                        (out.points[i][0] - out.points[j][0]).powi(2) + (out.points[i][1] - out.points[j][1]).powi(2)
                    };
                    d(a).total_cmp(&d(b))
                })
                .unwrap();
            assert_eq!(nearest % 3, i % 3);
        }
    }

    #[test]
    fn deterministic_and_permutation_equivariant() {
        let x = blobs(45, 4, 5);
        let config = TsneConfig {
            perplexity: 8.0,
            iterations: 10,
            ..TsneConfig::default()
        };
        let a = tsne_project(&x, &config, 9).unwrap();
        assert_eq!(a, tsne_project(&x, &config, 9).unwrap());
        // summation order differs under a permutation and the gain updates
        // amplify round-off, so compare over a short run only

        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let normal = Normal::new(0.0, 1e-2).unwrap();
        let init: Vec<[f64; 2]> = (0..45)
            .map(|_| [normal.sample(&mut rng), normal.sample(&mut rng)])
            .collect();
        let perm: Vec<usize> = (0..45).rev().collect();
        let px: Vec<Vec<f64>> = perm.iter().map(|&i| x[i].clone()).collect();
        let pinit: Vec<[f64; 2]> = perm.iter().map(|&i| init[i]).collect();
        let b = tsne_project_from(&px, pinit, &config).unwrap();
        assert!(
            (a.final_kl - b.final_kl).abs() < 1e-6,
            "{} vs {}",
            a.final_kl,
            b.final_kl
        );
        for (k, &i) in perm.iter().enumerate() {
            assert!((a.points[i][0] - b.points[k][0]).abs() < 1e-6);
        }
    }
}
