//! Single-precision inference with batch norm folded into the preceding
//! convolution / dense layer. Processes one patch at a time so every
//! intermediate stays cache resident.

use super::network::{BatchNormLayer, NetworkWeights};
use super::spec::{NetworkSpec, POOLED_LAYERS};
use crate::error::{Error, Result};
use crate::neuralcore::conv::{accumulate_tap, geometry, im2col, Geometry, K, KK};
use crate::neuralcore::gemm::sgemm;
use crate::neuralcore::{PoolRounding, BN_EPSILON};
use crate::tensor::Tensor;

#[derive(Debug, Clone)]
struct FoldedConv {
    geometry: Geometry,
    /// `F x (C*9)`
    kernels: Vec<f32>,
    bias: Vec<f32>,
    pool: bool,
}

/// Frozen, batch-norm-folded copy of a network for fast inference.
#[derive(Debug, Clone)]
pub struct InferenceNet {
    spec: NetworkSpec,
    convs: Vec<FoldedConv>,
    /// `D x 64`, folded with fc1's batch norm.
    fc1_weights: Vec<f32>,
    fc1_bias: Vec<f32>,
    fc2_weights: Vec<f32>,
    fc2_bias: Vec<f32>,
}

fn fold(bn: &BatchNormLayer) -> (Vec<f64>, Vec<f64>) {
    let scale: Vec<f64> = bn
        .gamma
        .data()
        .iter()
        .zip(&bn.running.var)
        .map(|(g, v)| g / (v + BN_EPSILON).sqrt())
        .collect();
    let shift = bn
        .beta
        .data()
        .iter()
        .zip(&bn.running.mean)
        .zip(&scale)
        .map(|((b, m), s)| b - m * s)
        .collect();
    (scale, shift)
}

impl InferenceNet {
    pub fn new(weights: &NetworkWeights) -> Result<Self> {
        let spec = weights.spec.clone();
        let n = spec.patch_size;
        let mut extent = n;
        let mut channels = 1;
        let mut convs = Vec::new();
        for (i, layer) in weights.convs.iter().enumerate() {
            let probe_in = Tensor::zeros(&[1, channels, extent, extent]);
            let geometry = geometry("inference", &probe_in, &layer.kernels, spec.conv_mode)?;
            let (scale, shift) = fold(&layer.bn);
            let per = channels * KK;
            let kernels = layer
                .kernels
                .data()
                .chunks(per)
                .zip(&scale)
                .flat_map(|(row, &s)| row.iter().map(move |&k| (k * s) as f32))
                .collect();
            let bias = layer
                .bias
                .data()
                .iter()
                .zip(scale.iter().zip(&shift))
                .map(|(&b, (&s, &t))| (b * s + t) as f32)
                .collect();
            let pool = i < POOLED_LAYERS;
            extent = geometry.oh;
            if pool {
                extent = spec.pool_rounding().output_extent(extent);
            }
            channels = geometry.filters;
            convs.push(FoldedConv {
                geometry,
                kernels,
                bias,
                pool,
            });
        }
        let bn = weights
            .fc1
            .bn
            .as_ref()
            .ok_or_else(|| Error::invalid("fc1 must carry batch norm"))?;
        let (scale, shift) = fold(bn);
        let units = scale.len();
        let fc1_weights = weights
            .fc1
            .weights
            .data()
            .iter()
            .enumerate()
            .map(|(i, &w)| (w * scale[i % units]) as f32)
            .collect();
        let fc1_bias = weights
            .fc1
            .bias
            .data()
            .iter()
            .zip(scale.iter().zip(&shift))
            .map(|(&b, (&s, &t))| (b * s + t) as f32)
            .collect();
        Ok(Self {
            spec,
            convs,
            fc1_weights,
            fc1_bias,
            fc2_weights: weights.fc2.weights.data().iter().map(|&v| v as f32).collect(),
            fc2_bias: weights.fc2.bias.data().iter().map(|&v| v as f32).collect(),
        })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn workspace(&self) -> Workspace {
        let largest = self
            .convs
            .iter()
            .map(|c| c.geometry.channels.max(c.geometry.filters) * c.geometry.h.max(c.geometry.oh).pow(2))
            .max()
            .unwrap_or(0);
        let col = self
            .convs
            .iter()
            .map(|c| c.geometry.channels * KK * c.geometry.oh * c.geometry.ow)
            .max()
            .unwrap_or(0);
        Workspace {
            a: vec![0.0; largest],
            b: vec![0.0; largest],
            col: vec![0.0; col],
            features: vec![0.0; CHUNK * self.flat_width()],
            hidden: vec![0.0; CHUNK * self.fc1_bias.len()],
        }
    }

    fn flat_width(&self) -> usize {
        self.fc1_weights.len() / self.fc1_bias.len()
    }

    /// Positive-class probability of one `N x N` patch (row-major, already
    /// normalized to `[0, 1]`).
    pub fn positive_probability(&self, patch: &[f32], ws: &mut Workspace) -> f64 {
        self.positive_probabilities(patch, ws)[0]
    }

    /// Positive-class probabilities of `k` patches stored back to back.
    pub fn positive_probabilities(&self, patches: &[f32], ws: &mut Workspace) -> Vec<f64> {
        let n2 = self.spec.patch_size * self.spec.patch_size;
        assert_eq!(
            patches.len() % n2,
            0,
            "patch buffer is not a whole number of {n2}-pixel patches"
        );
        let mut out = Vec::with_capacity(patches.len() / n2);
        for chunk in patches.chunks(CHUNK * n2) {
            let k = chunk.len() / n2;
            let width = self.flat_width();
            for (i, patch) in chunk.chunks(n2).enumerate() {
                self.trunk(patch, ws, i * width);
            }
            let units = self.fc1_bias.len();
            let hidden = &mut ws.hidden[..k * units];
            for row in hidden.chunks_mut(units) {
                row.copy_from_slice(&self.fc1_bias);
            }
            sgemm(
                k,
                width,
                units,
                &ws.features[..k * width],
                &self.fc1_weights,
                1.0,
                hidden,
            );
            for row in hidden.chunks(units) {
                let mut scores = [self.fc2_bias[0] as f64, self.fc2_bias[1] as f64];
                for (u, h) in row.iter().enumerate() {
                    let h = h.max(0.0) as f64;
                    scores[0] += h * self.fc2_weights[2 * u] as f64;
                    scores[1] += h * self.fc2_weights[2 * u + 1] as f64;
                }
                let m = scores[0].max(scores[1]);
                let e0 = (scores[0] - m).exp();
                let e1 = (scores[1] - m).exp();
                out.push(e1 / (e0 + e1));
            }
        }
        out
    }

    /// Convolutional trunk of one patch; flattened maps land in
    /// `ws.features[offset..]`.
    fn trunk(&self, patch: &[f32], ws: &mut Workspace, offset: usize) {
        let n = self.spec.patch_size;
        let rounding = self.spec.pool_rounding();
        let Workspace {
            a, b, col, features, ..
        } = ws;
        a[..n * n].copy_from_slice(patch);
        let mut len = n * n;
        for conv in &self.convs {
            let g = &conv.geometry;
            let plane = g.oh * g.ow;
            let out = &mut b[..g.filters * plane];
            if g.channels == 1 {
                for f in 0..g.filters {
                    let o = &mut out[f * plane..(f + 1) * plane];
                    o.fill(conv.bias[f]);
                    let k = &conv.kernels[f * KK..(f + 1) * KK];
                    for ki in 0..K {
                        for kj in 0..K {
                            accumulate_tap(g, &a[..len], o, ki, kj, k[ki * K + kj]);
                        }
                    }
                }
            } else {
                let c = &mut col[..g.channels * KK * plane];
                im2col(g, &a[..len], c, plane, 0);
                for (f, &bf) in conv.bias.iter().enumerate() {
                    out[f * plane..(f + 1) * plane].fill(bf);
                }
                sgemm(g.filters, g.channels * KK, plane, &conv.kernels, c, 1.0, out);
            }
            for v in out.iter_mut() {
                *v = v.max(0.0);
            }
            len = if conv.pool {
                maxpool_into(out, g.filters, g.oh, g.ow, rounding, a)
            } else {
                a[..out.len()].copy_from_slice(out);
                out.len()
            };
        }
        features[offset..offset + len].copy_from_slice(&a[..len]);
    }

    /// Positive-class probabilities for a `B x 1 x N x N` tensor.
    pub fn predict_positive(&self, batch: &Tensor) -> Result<Vec<f64>> {
        let n = self.spec.patch_size;
        let (_, c, h, w) = batch.dims4("predict_positive")?;
        if c != 1 || h != n || w != n {
            return Err(Error::shape(
                "predict_positive",
                format!("expected B x 1 x {n} x {n}, got {:?}", batch.shape()),
            ));
        }
        let mut ws = self.workspace();
        let buf: Vec<f32> = batch.data().iter().map(|&v| v as f32).collect();
        Ok(self.positive_probabilities(&buf, &mut ws))
    }
}

/// Patches per fully connected product.
const CHUNK: usize = 32;

/// Scratch buffers reused across patches.
pub struct Workspace {
    a: Vec<f32>,
    b: Vec<f32>,
    col: Vec<f32>,
    features: Vec<f32>,
    hidden: Vec<f32>,
}

fn maxpool_into(x: &[f32], c: usize, h: usize, w: usize, rounding: PoolRounding, out: &mut [f32]) -> usize {
    let (oh, ow) = (rounding.output_extent(h), rounding.output_extent(w));
    for ch in 0..c {
        let src = &x[ch * h * w..(ch + 1) * h * w];
        let dst = &mut out[ch * oh * ow..(ch + 1) * oh * ow];
        for i in 0..oh {
            for j in 0..ow {
                let mut m = src[2 * i * w + 2 * j];
                for (di, dj) in [(0, 1), (1, 0), (1, 1)] {
                    let (y, xx) = (2 * i + di, 2 * j + dj);
                    if y < h && xx < w {
                        m = m.max(src[y * w + xx]);
                    }
                }
                dst[i * ow + j] = m;
            }
        }
    }
    c * oh * ow
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netarch::build_network;
    use crate::neuralcore::{ConvMode, Phase};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn matches_double_precision_forward() {
        for spec in [
            NetworkSpec::new(15, ConvMode::Same).with_filters([3, 4, 4, 5, 5, 6]),
            NetworkSpec::new(43, ConvMode::Valid).with_filters([2, 3, 3, 4, 4, 2]),
        ] {
            let mut w = build_network(&spec, 3).unwrap();
            let n = spec.patch_size;
            let mut rng = ChaCha8Rng::seed_from_u64(4);
            let x = Tensor::new(&[4, 1, n, n], (0..4 * n * n).map(|_| rng.random()).collect()).unwrap();
            // non-trivial running statistics
            for s in 0..3 {
                let (_, cache) = w.forward(&x, Phase::Train, s).unwrap();
                w.commit_running_stats(&cache);
            }
            for layer in &mut w.convs {
                for g in layer.bn.gamma.data_mut() {
                    *g *= 1.0 + 0.5 * rng.random::<f64>();
                }
            }
            let exact = w.predict(&x).unwrap();
            let fast = InferenceNet::new(&w).unwrap().predict_positive(&x).unwrap();
            for (i, p) in fast.iter().enumerate() {
                assert!((p - exact.item(i)[1]).abs() < 1e-4, "{p} vs {}", exact.item(i)[1]);
            }
        }
    }

    #[test]
    fn wrong_patch_size_rejected() {
        let w = build_network(&NetworkSpec::new(9, ConvMode::Same).with_filters([2; 6]), 1).unwrap();
        let net = InferenceNet::new(&w).unwrap();
        assert!(net.predict_positive(&Tensor::zeros(&[1, 1, 11, 11])).is_err());
    }
}
