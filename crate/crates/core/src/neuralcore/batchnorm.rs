//! Per-channel batch normalization for `B x C` and `B x C x H x W` tensors.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const BN_EPSILON: f64 = 1e-5;
/// Weight of the previous running estimate in each update.
pub const BN_MOMENTUM: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Train,
    Infer,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunningStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

impl RunningStats {
    pub fn new(channels: usize) -> Self {
        Self {
            mean: vec![0.0; channels],
            var: vec![1.0; channels],
        }
    }
}

/// What the backward pass needs from the forward pass.
#[derive(Debug, Clone)]
pub struct BnCache {
    normalized: Tensor,
    inv_std: Vec<f64>,
    phase: Phase,
}

impl BnCache {
    /// Batch statistics are folded into `normalized`/`inv_std`; exposed for
    /// tests that check the pre-scale output.
    pub fn normalized(&self) -> &Tensor {
        &self.normalized
    }
}

fn layout(input: &Tensor) -> Result<(usize, usize, usize)> {
    match input.shape() {
        [b, c] => Ok((*b, *c, 1)),
        [b, c, h, w] => Ok((*b, *c, h * w)),
        s => Err(Error::shape("batchnorm", format!("expected 2 or 4 axes, got {s:?}"))),
    }
}

pub fn batchnorm(
    input: &Tensor,
    gamma: &[f64],
    beta: &[f64],
    stats: &mut RunningStats,
    phase: Phase,
) -> Result<(Tensor, BnCache)> {
    let (b, c, spatial) = layout(input)?;
    if gamma.len() != c || beta.len() != c || stats.mean.len() != c || stats.var.len() != c {
        return Err(Error::shape(
            "batchnorm",
            format!(
                "{c} channels but gamma {} / beta {} / stats {}",
                gamma.len(),
                beta.len(),
                stats.mean.len()
            ),
        ));
    }
    if phase == Phase::Train && b < 2 {
        return Err(Error::invalid("batchnorm: train phase needs a batch of at least 2"));
    }
    let x = input.data();
    let n = (b * spatial) as f64;
    let mut normalized = Tensor::zeros(input.shape());
    let mut out = Tensor::zeros(input.shape());
    let mut inv_std = vec![0.0; c];
    let block = |bi: usize, ch: usize| (bi * c + ch) * spatial..(bi * c + ch + 1) * spatial;
    for ch in 0..c {
        let (mean, var) = match phase {
            Phase::Train => {
                let mean = (0..b).map(|bi| x[block(bi, ch)].iter().sum::<f64>()).sum::<f64>() / n;
                let var = (0..b)
                    .map(|bi| x[block(bi, ch)].iter().map(|v| (v - mean) * (v - mean)).sum::<f64>())
                    .sum::<f64>()
                    / n;
                let unbiased = var * n / (n - 1.0);
                stats.mean[ch] = BN_MOMENTUM * stats.mean[ch] + (1.0 - BN_MOMENTUM) * mean;
                stats.var[ch] = BN_MOMENTUM * stats.var[ch] + (1.0 - BN_MOMENTUM) * unbiased;
                (mean, var)
            }
            Phase::Infer => (stats.mean[ch], stats.var[ch]),
        };
        let istd = 1.0 / (var + BN_EPSILON).sqrt();
        inv_std[ch] = istd;
        let (g, bt) = (gamma[ch], beta[ch]);
        for bi in 0..b {
            let r = block(bi, ch);
            let nd = &mut normalized.data_mut()[r.clone()];
            for (o, &v) in nd.iter_mut().zip(&x[r.clone()]) {
                *o = (v - mean) * istd;
            }
            let nd = &normalized.data()[r.clone()];
            for (o, &v) in out.data_mut()[r].iter_mut().zip(nd) {
                *o = g * v + bt;
            }
        }
    }
    Ok((
        out,
        BnCache {
            normalized,
            inv_std,
            phase,
        },
    ))
}

#[derive(Debug, Clone)]
pub struct BnGrads {
    pub input: Tensor,
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
}

pub fn batchnorm_backward(upstream: &Tensor, gamma: &[f64], cache: &BnCache) -> Result<BnGrads> {
    if upstream.shape() != cache.normalized.shape() {
        return Err(Error::shape(
            "batchnorm_backward",
            format!(
                "upstream {:?} vs cached {:?}",
                upstream.shape(),
                cache.normalized.shape()
            ),
        ));
    }
    let (b, c, spatial) = layout(upstream)?;
    let n = (b * spatial) as f64;
    let dy = upstream.data();
    let xh = cache.normalized.data();
    let mut dx = Tensor::zeros(upstream.shape());
    let mut dgamma = vec![0.0; c];
    let mut dbeta = vec![0.0; c];
    let dxd = dx.data_mut();
    let block = |bi: usize, ch: usize| (bi * c + ch) * spatial..(bi * c + ch + 1) * spatial;
    for ch in 0..c {
        let (mut sum_dy, mut sum_dy_xh) = (0.0, 0.0);
        for bi in 0..b {
            let r = block(bi, ch);
            for (&g, &h) in dy[r.clone()].iter().zip(&xh[r]) {
                sum_dy += g;
                sum_dy_xh += g * h;
            }
        }
        dgamma[ch] = sum_dy_xh;
        dbeta[ch] = sum_dy;
        let scale = gamma[ch] * cache.inv_std[ch];
        let (mean_dy, mean_dy_xh) = (sum_dy / n, sum_dy_xh / n);
        for bi in 0..b {
            let r = block(bi, ch);
            let (gy, hx) = (&dy[r.clone()], &xh[r.clone()]);
            let out = &mut dxd[r];
            match cache.phase {
                Phase::Train => {
                    for ((o, &g), &h) in out.iter_mut().zip(gy).zip(hx) {
                        *o = scale * (g - mean_dy - h * mean_dy_xh);
                    }
                }
                Phase::Infer => {
                    for (o, &g) in out.iter_mut().zip(gy) {
                        *o = scale * g;
                    }
                }
            }
        }
    }
    Ok(BnGrads {
        input: dx,
        gamma: dgamma,
        beta: dbeta,
    })
}
