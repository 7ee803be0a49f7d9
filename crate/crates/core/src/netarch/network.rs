use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::spec::{NetworkSpec, CONV_LAYERS, POOLED_LAYERS};
use crate::error::{Error, Result};
use crate::neuralcore::{
    batchnorm, batchnorm_backward, conv2d, conv2d_grad, cross_entropy, dense, dense_grad, dropout, he_init, maxpool2x2,
    maxpool2x2_backward, one_hot, relu, relu_backward, softmax, ArgmaxMap, BnCache, DropoutMask, Phase, RunningStats,
};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct BatchNormLayer {
    pub gamma: Tensor,
    pub beta: Tensor,
    pub running: RunningStats,
}

impl BatchNormLayer {
    fn new(channels: usize) -> Self {
        Self {
            gamma: Tensor::full(&[channels], 1.0),
            beta: Tensor::zeros(&[channels]),
            running: RunningStats::new(channels),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer {
    /// `F x C x 3 x 3`
    pub kernels: Tensor,
    pub bias: Tensor,
    pub bn: BatchNormLayer,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    /// `D x U`
    pub weights: Tensor,
    pub bias: Tensor,
    pub bn: Option<BatchNormLayer>,
}

/// Learned parameters of one network, tied to the spec they were built for.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkWeights {
    pub spec: NetworkSpec,
    pub convs: Vec<ConvLayer>,
    pub fc1: DenseLayer,
    pub fc2: DenseLayer,
}

struct ConvTrace {
    input: Tensor,
    bn: BnCache,
    pre_relu: Tensor,
    pool: Option<ArgmaxMap>,
}

/// Everything a training forward pass records for the exact backward pass.
pub struct ForwardCache {
    fingerprint: u64,
    phase: Phase,
    convs: Vec<ConvTrace>,
    conv_out_shape: Vec<usize>,
    flat: Tensor,
    fc1_bn: BnCache,
    fc1_pre_relu: Tensor,
    dropout: DropoutMask,
    fc2_input: Tensor,
    probs: Tensor,
    /// Running statistics after this batch, in layer order (conv1..6, fc1).
    updated_stats: Vec<RunningStats>,
}

impl ForwardCache {
    pub fn probs(&self) -> &Tensor {
        &self.probs
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }
}

/// Gradients in the order of [`NetworkWeights::trainable`].
#[derive(Debug, Clone)]
pub struct Gradients {
    pub tensors: Vec<Tensor>,
}

/// Builds He-initialized weights for `spec`; BN scale 1, shift 0.
pub fn build_network(spec: &NetworkSpec, seed: u64) -> Result<NetworkWeights> {
    spec.validate()?;
    let mut seeds = ChaCha8Rng::seed_from_u64(seed);
    let mut channels = 1;
    let mut convs = Vec::with_capacity(CONV_LAYERS);
    for &filters in &spec.filter_counts {
        let fan_in = channels * 9;
        convs.push(ConvLayer {
            kernels: he_init(fan_in, &[filters, channels, 3, 3], seeds.random())?,
            bias: Tensor::zeros(&[filters]),
            bn: BatchNormLayer::new(filters),
        });
        channels = filters;
    }
    let flat = spec.flat_features().expect("validated");
    let [h1, out] = spec.fc_units;
    let fc1 = DenseLayer {
        weights: he_init(flat, &[flat, h1], seeds.random())?,
        bias: Tensor::zeros(&[h1]),
        bn: Some(BatchNormLayer::new(h1)),
    };
    let fc2 = DenseLayer {
        weights: he_init(h1, &[h1, out], seeds.random())?,
        bias: Tensor::zeros(&[out]),
        bn: None,
    };
    let mut w = NetworkWeights {
        spec: spec.clone(),
        convs,
        fc1,
        fc2,
    };
    w.round_to_storage();
    Ok(w)
}

impl NetworkWeights {
    /// Trainable tensors in canonical order: per conv layer kernels, bias,
    /// gamma, beta; then fc1 weights, bias, gamma, beta; then fc2 weights, bias.
    pub fn trainable(&self) -> Vec<&Tensor> {
        let mut v = Vec::new();
        for c in &self.convs {
            v.extend([&c.kernels, &c.bias, &c.bn.gamma, &c.bn.beta]);
        }
        v.extend([&self.fc1.weights, &self.fc1.bias]);
        if let Some(bn) = &self.fc1.bn {
            v.extend([&bn.gamma, &bn.beta]);
        }
        v.extend([&self.fc2.weights, &self.fc2.bias]);
        v
    }

    pub fn trainable_mut(&mut self) -> Vec<&mut Tensor> {
        let mut v = Vec::new();
        for c in &mut self.convs {
            v.extend([&mut c.kernels, &mut c.bias, &mut c.bn.gamma, &mut c.bn.beta]);
        }
        v.extend([&mut self.fc1.weights, &mut self.fc1.bias]);
        if let Some(bn) = &mut self.fc1.bn {
            v.extend([&mut bn.gamma, &mut bn.beta]);
        }
        v.extend([&mut self.fc2.weights, &mut self.fc2.bias]);
        v
    }

    fn running_stats_mut(&mut self) -> Vec<&mut RunningStats> {
        let mut v: Vec<&mut RunningStats> = self.convs.iter_mut().map(|c| &mut c.bn.running).collect();
        if let Some(bn) = &mut self.fc1.bn {
            v.push(&mut bn.running);
        }
        v
    }

    pub fn parameter_count(&self) -> usize {
        self.trainable().iter().map(|t| t.len()).sum()
    }

    /// Rounds every stored value to the nearest single-precision number, the
    /// precision of the weight file, so saving and loading is lossless.
    pub fn round_to_storage(&mut self) {
        for t in self.trainable_mut() {
            for v in t.data_mut() {
                *v = *v as f32 as f64;
            }
        }
        for s in self.running_stats_mut() {
            for v in s.mean.iter_mut().chain(s.var.iter_mut()) {
                *v = *v as f32 as f64;
            }
        }
    }

    /// FNV-1a over the bit patterns of every parameter and running statistic.
    pub fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut eat = |x: f64| {
            for byte in x.to_bits().to_le_bytes() {
                h ^= byte as u64;
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        };
        for t in self.trainable() {
            t.data().iter().copied().for_each(&mut eat);
        }
        for c in &self.convs {
            c.bn.running
                .mean
                .iter()
                .chain(&c.bn.running.var)
                .copied()
                .for_each(&mut eat);
        }
        if let Some(bn) = &self.fc1.bn {
            bn.running
                .mean
                .iter()
                .chain(&bn.running.var)
                .copied()
                .for_each(&mut eat);
        }
        h
    }

    fn check_batch(&self, batch: &Tensor) -> Result<usize> {
        let (b, c, h, w) = batch.dims4("forward")?;
        let n = self.spec.patch_size;
        if c != 1 || h != n || w != n {
            return Err(Error::shape(
                "forward",
                format!("expected B x 1 x {n} x {n} patches, got {:?}", batch.shape()),
            ));
        }
        Ok(b)
    }

    /// Full forward pass. `dropout_seed` only matters in the train phase.
    pub fn forward(&self, batch: &Tensor, phase: Phase, dropout_seed: u64) -> Result<(Tensor, ForwardCache)> {
        let b = self.check_batch(batch)?;
        let rounding = self.spec.pool_rounding();
        let mut updated_stats = Vec::with_capacity(CONV_LAYERS + 1);
        let mut traces = Vec::with_capacity(CONV_LAYERS);
        let mut x = batch.clone();
        for (i, layer) in self.convs.iter().enumerate() {
            let z = conv2d(&x, &layer.kernels, &layer.bias, self.spec.conv_mode)?;
            let mut stats = layer.bn.running.clone();
            let (a, bn) = batchnorm(&z, layer.bn.gamma.data(), layer.bn.beta.data(), &mut stats, phase)?;
            updated_stats.push(stats);
            let r = relu(&a);
            let (next, pool) = if i < POOLED_LAYERS {
                let (p, map) = maxpool2x2(&r, rounding)?;
                (p, Some(map))
            } else {
                (r, None)
            };
            traces.push(ConvTrace {
                input: x,
                bn,
                pre_relu: a,
                pool,
            });
            x = next;
        }
        let conv_out_shape = x.shape().to_vec();
        let flat_width = x.item_len();
        let flat = x.reshape(&[b, flat_width])?;
        let z = dense(&flat, &self.fc1.weights, &self.fc1.bias)?;
        let bn_layer = self.fc1.bn.as_ref().expect("fc1 carries batch norm");
        let mut stats = bn_layer.running.clone();
        let (a, fc1_bn) = batchnorm(&z, bn_layer.gamma.data(), bn_layer.beta.data(), &mut stats, phase)?;
        updated_stats.push(stats);
        let r = relu(&a);
        let (d, mask) = dropout(&r, self.spec.dropout_keep, phase, dropout_seed)?;
        let scores = dense(&d, &self.fc2.weights, &self.fc2.bias)?;
        let probs = softmax(&scores)?;
        let cache = ForwardCache {
            fingerprint: self.fingerprint(),
            phase,
            convs: traces,
            conv_out_shape,
            flat,
            fc1_bn,
            fc1_pre_relu: a,
            dropout: mask,
            fc2_input: d,
            probs: probs.clone(),
            updated_stats,
        };
        Ok((probs, cache))
    }

    /// Activations of the 64-unit layer (after batch norm and ReLU, no dropout).
    pub fn penultimate_features(&self, batch: &Tensor) -> Result<Tensor> {
        self.infer_trunk(batch)
    }

    fn infer_trunk(&self, batch: &Tensor) -> Result<Tensor> {
        let b = self.check_batch(batch)?;
        let rounding = self.spec.pool_rounding();
        let mut x = batch.clone();
        for (i, layer) in self.convs.iter().enumerate() {
            let z = conv2d(&x, &layer.kernels, &layer.bias, self.spec.conv_mode)?;
            let mut stats = layer.bn.running.clone();
            let (a, _) = batchnorm(
                &z,
                layer.bn.gamma.data(),
                layer.bn.beta.data(),
                &mut stats,
                Phase::Infer,
            )?;
            let r = relu(&a);
            x = if i < POOLED_LAYERS {
                maxpool2x2(&r, rounding)?.0
            } else {
                r
            };
        }
        let width = x.item_len();
        let flat = x.reshape(&[b, width])?;
        let z = dense(&flat, &self.fc1.weights, &self.fc1.bias)?;
        let bn = self.fc1.bn.as_ref().expect("fc1 carries batch norm");
        let mut stats = bn.running.clone();
        let (a, _) = batchnorm(&z, bn.gamma.data(), bn.beta.data(), &mut stats, Phase::Infer)?;
        Ok(relu(&a))
    }

    /// Inference-phase class probabilities (`B x 2`).
    pub fn predict(&self, batch: &Tensor) -> Result<Tensor> {
        let features = self.infer_trunk(batch)?;
        softmax(&dense(&features, &self.fc2.weights, &self.fc2.bias)?)
    }

    /// Mean cross-entropy of a cached forward pass and its exact gradients
    /// with respect to every trainable tensor.
    pub fn backward(&self, cache: &ForwardCache, labels: &[usize]) -> Result<(f64, Gradients)> {
        if cache.fingerprint != self.fingerprint() {
            return Err(Error::StaleCache);
        }
        let b = cache.probs.batch();
        if labels.len() != b {
            return Err(Error::shape(
                "backward",
                format!("{} labels for batch {b}", labels.len()),
            ));
        }
        let y = one_hot(labels, self.spec.class_count)?;
        let (loss, d_scores) = cross_entropy(&cache.probs, &y)?;

        let fc2 = dense_grad(&cache.fc2_input, &self.fc2.weights, &d_scores)?;
        let d_relu = cache.dropout.apply(&fc2.input)?;
        let d_bn_out = relu_backward(&cache.fc1_pre_relu, &d_relu)?;
        let bn1 = self.fc1.bn.as_ref().expect("fc1 carries batch norm");
        let fc1_bn = batchnorm_backward(&d_bn_out, bn1.gamma.data(), &cache.fc1_bn)?;
        let fc1 = dense_grad(&cache.flat, &self.fc1.weights, &fc1_bn.input)?;

        let mut grad = fc1.input.reshape(&cache.conv_out_shape)?;
        let mut conv_grads = Vec::with_capacity(CONV_LAYERS);
        for (layer, trace) in self.convs.iter().zip(&cache.convs).rev() {
            if let Some(map) = &trace.pool {
                grad = maxpool2x2_backward(&grad, map)?;
            }
            let d_bn_out = relu_backward(&trace.pre_relu, &grad)?;
            let bn = batchnorm_backward(&d_bn_out, layer.bn.gamma.data(), &trace.bn)?;
            let conv = conv2d_grad(&trace.input, &layer.kernels, &bn.input, self.spec.conv_mode)?;
            grad = conv.input;
            conv_grads.push((conv.kernels, conv.bias, bn.gamma, bn.beta));
        }
        conv_grads.reverse();

        let mut tensors = Vec::with_capacity(4 * CONV_LAYERS + 6);
        for ((k, bias, gamma, beta), layer) in conv_grads.into_iter().zip(&self.convs) {
            let c = layer.bn.gamma.shape().to_vec();
            tensors.push(k);
            tensors.push(bias);
            tensors.push(Tensor::new(&c, gamma)?);
            tensors.push(Tensor::new(&c, beta)?);
        }
        let units = [self.spec.fc_units[0]];
        tensors.extend([
            fc1.weights,
            fc1.bias,
            Tensor::new(&units, fc1_bn.gamma)?,
            Tensor::new(&units, fc1_bn.beta)?,
            fc2.weights,
            fc2.bias,
        ]);
        Ok((loss, Gradients { tensors }))
    }

    /// Adopts the running statistics recorded by a train-phase forward pass.
    pub fn commit_running_stats(&mut self, cache: &ForwardCache) {
        if cache.phase != Phase::Train {
            return;
        }
        for (dst, src) in self.running_stats_mut().into_iter().zip(&cache.updated_stats) {
            *dst = src.clone();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neuralcore::{finite_diff_grad, max_relative_error, ConvMode};
    use rand::Rng;

    fn random_batch(b: usize, n: usize, seed: u64) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor::new(&[b, 1, n, n], (0..b * n * n).map(|_| rng.random()).collect()).unwrap()
    }

    fn mini_spec() -> NetworkSpec {
        NetworkSpec::new(9, ConvMode::Same).with_filters([2, 2, 3, 3, 2, 2])
    }

    #[test]
    fn same_seed_same_weights() {
        let spec = mini_spec();
        assert_eq!(build_network(&spec, 5).unwrap(), build_network(&spec, 5).unwrap());
        assert_ne!(build_network(&spec, 5).unwrap(), build_network(&spec, 6).unwrap());
    }

    #[test]
    fn probabilities_are_distributions() {
        let w = build_network(&mini_spec(), 1).unwrap();
        let (p, _) = w.forward(&random_batch(4, 9, 2), Phase::Train, 3).unwrap();
        for row in 0..4 {
            assert!((p.item(row).iter().sum::<f64>() - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn inference_is_repeatable() {
        let w = build_network(&mini_spec(), 1).unwrap();
        let x = random_batch(3, 9, 2);
        assert_eq!(w.predict(&x).unwrap(), w.predict(&x).unwrap());
        let (p, _) = w.forward(&x, Phase::Infer, 0).unwrap();
        let (q, _) = w.forward(&x, Phase::Infer, 99).unwrap();
        assert_eq!(p, q);
        assert_eq!(p, w.predict(&x).unwrap());
    }

    #[test]
    fn duplicated_patches_in_train_phase_agree() {
        let mut spec = mini_spec();
        spec.dropout_keep = 1.0;
        let w = build_network(&spec, 4).unwrap();
        let one = random_batch(1, 9, 8);
        let x = Tensor::stack(&[
            one.clone().reshape(&[1, 9, 9]).unwrap(),
            one.reshape(&[1, 9, 9]).unwrap(),
        ])
        .unwrap();
        let (p, _) = w.forward(&x, Phase::Train, 1).unwrap();
        assert_eq!(p.item(0), p.item(1));
    }

    #[test]
    fn wrong_patch_size_rejected() {
        let w = build_network(&mini_spec(), 1).unwrap();
        assert!(w.forward(&random_batch(2, 11, 0), Phase::Infer, 0).is_err());
    }

    #[test]
    fn stale_cache_detected() {
        let mut w = build_network(&mini_spec(), 1).unwrap();
        let (_, cache) = w.forward(&random_batch(2, 9, 0), Phase::Train, 0).unwrap();
        w.fc2.bias.data_mut()[0] += 0.5;
        assert!(matches!(w.backward(&cache, &[0, 1]), Err(Error::StaleCache)));
    }

    #[test]
    fn gradient_shapes_match_parameters() {
        let w = build_network(&mini_spec(), 1).unwrap();
        let (_, cache) = w.forward(&random_batch(2, 9, 0), Phase::Train, 0).unwrap();
        let (_, g) = w.backward(&cache, &[0, 1]).unwrap();
        let params = w.trainable();
        assert_eq!(g.tensors.len(), params.len());
        for (gt, p) in g.tensors.iter().zip(params) {
            assert_eq!(gt.shape(), p.shape());
        }
    }

    #[test]
    fn penultimate_width_is_64() {
        let w = build_network(&mini_spec(), 1).unwrap();
        let f = w.penultimate_features(&random_batch(3, 9, 0)).unwrap();
        assert_eq!(f.shape(), &[3, 64]);
    }

    /// Loss as a function of one flattened trainable tensor.
    fn loss_at(w: &NetworkWeights, idx: usize, values: &[f64], x: &Tensor, labels: &[usize]) -> f64 {
        let mut probe = w.clone();
        probe.trainable_mut()[idx].data_mut().copy_from_slice(values);
        let (_, cache) = probe.forward(x, Phase::Train, 17).unwrap();
        probe.backward(&cache, labels).unwrap().0
    }

    #[test]
    fn full_network_gradient_matches_finite_differences() {
        for spec in [mini_spec(), NetworkSpec::new(43, ConvMode::Valid).with_filters([2; 6])] {
            let w = build_network(&spec, 21).unwrap();
            let x = random_batch(2, spec.patch_size, 22);
            let labels = [0, 1];
            let (_, cache) = w.forward(&x, Phase::Train, 17).unwrap();
            let (_, grads) = w.backward(&cache, &labels).unwrap();
            for (idx, g) in grads.tensors.iter().enumerate() {
                let point = w.trainable()[idx].data().to_vec();
                let fd = finite_diff_grad(|v| loss_at(&w, idx, v, &x, &labels), &point, 1e-5);
                let err = max_relative_error(g.data(), &fd);
                assert!(err < 1e-3, "tensor {idx}: relative error {err}");
            }
        }
    }
}
