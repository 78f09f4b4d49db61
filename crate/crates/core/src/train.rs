//! Real-arithmetic training for the architectures the quantized engine runs.
//!
//! Models train in f64 and are quantized to INT-8 afterwards, keeping the
//! learning machinery separate from the fault-injection substrate. Training
//! is deterministic given its generator: initialization, batch order and
//! accumulation order are all fixed.

use rand::Rng;
use rand_chacha::ChaCha12Rng;

use crate::arch::{kd_grad_from_target, kd_loss_from_target, KdConfig};
use crate::data::Dataset;
use crate::error::{DyveError, Result};
use crate::qnn::{
    maxpool_forward, Architecture, LayerSpec, LayerWeights, QuantModel, QuantTensor, TensorShape,
};

/// Hyperparameters for plain cross-entropy training.
#[derive(Clone, Debug)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub momentum: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { epochs: 30, learning_rate: 0.05, batch_size: 32, momentum: 0.9 }
    }
}

#[derive(Clone, Debug)]
pub struct TrainStats {
    pub epochs_run: usize,
    pub final_loss: f64,
}

/// Real-valued parameters of one weighted layer.
#[derive(Clone, Debug)]
pub struct RealWeights {
    pub w: Vec<f64>,
    pub b: Option<Vec<f64>>,
}

/// An architecture with f64 parameters; the trainable mirror of `QuantModel`.
#[derive(Clone, Debug)]
pub struct RealModel {
    arch: Architecture,
    weights: Vec<Option<RealWeights>>,
    /// Output shape of each layer.
    shapes: Vec<TensorShape>,
}

struct ForwardCache {
    /// Output of every layer.
    outputs: Vec<Vec<f64>>,
    /// Chosen input index per pooled element, for gradient routing.
    pool_memos: Vec<Option<Vec<usize>>>,
}

impl RealModel {
    /// He-uniform initialization: weights from `±sqrt(6 / fan_in)`, biases 0.
    pub fn init(arch: &Architecture, rng: &mut ChaCha12Rng) -> Result<RealModel> {
        let shapes = arch.validate()?;
        let mut weights = Vec::with_capacity(arch.layers.len());
        for layer in &arch.layers {
            weights.push(match *layer {
                LayerSpec::Dense { in_features, out_features, bias } => {
                    let bound = (6.0 / in_features as f64).sqrt();
                    Some(RealWeights {
                        w: uniform_vec(rng, in_features * out_features, bound),
                        b: bias.then(|| vec![0.0; out_features]),
                    })
                }
                LayerSpec::Conv2d { in_channels, out_channels, kernel, bias, .. } => {
                    let fan_in = in_channels * kernel * kernel;
                    let bound = (6.0 / fan_in as f64).sqrt();
                    Some(RealWeights {
                        w: uniform_vec(rng, out_channels * fan_in, bound),
                        b: bias.then(|| vec![0.0; out_channels]),
                    })
                }
                _ => None,
            });
        }
        Ok(RealModel { arch: arch.clone(), weights, shapes })
    }

    /// Dequantized mirror of a quantized model; the straight-through
    /// surrogate used for gradient ranking.
    pub fn from_quant(model: &QuantModel) -> RealModel {
        let weights = model
            .weights()
            .iter()
            .map(|slot| {
                slot.as_ref().map(|lw| RealWeights {
                    w: lw.weight.dequantized(),
                    b: lw.bias.as_ref().map(QuantTensor::dequantized),
                })
            })
            .collect();
        RealModel {
            arch: model.arch().clone(),
            weights,
            shapes: model.arch().validate().expect("model validated at construction"),
        }
    }

    pub fn arch(&self) -> &Architecture {
        &self.arch
    }

    pub fn weights(&self) -> &[Option<RealWeights>] {
        &self.weights
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward_cached(input)?.outputs.last().cloned().unwrap_or_else(|| input.to_vec()))
    }

    fn forward_cached(&self, input: &[f64]) -> Result<ForwardCache> {
        if input.len() != self.arch.input.elements() {
            return Err(DyveError::ShapeMismatch {
                expected: self.arch.input.to_string(),
                got: format!("[{}]", input.len()),
            });
        }
        let mut outputs = Vec::with_capacity(self.arch.layers.len());
        let mut pool_memos = Vec::with_capacity(self.arch.layers.len());
        let mut cur = input.to_vec();
        let mut cur_shape = self.arch.input;
        for (idx, layer) in self.arch.layers.iter().enumerate() {
            let mut memo = None;
            let out = match (layer, &self.weights[idx]) {
                (LayerSpec::Dense { in_features, out_features, .. }, Some(rw)) => {
                    let mut y = vec![0.0; *out_features];
                    for (o, yo) in y.iter_mut().enumerate() {
                        let row = &rw.w[o * in_features..(o + 1) * in_features];
                        let mut acc = 0.0;
                        for (wi, xi) in row.iter().zip(cur.iter()) {
                            acc += wi * xi;
                        }
                        *yo = acc + rw.b.as_ref().map_or(0.0, |b| b[o]);
                    }
                    y
                }
                (LayerSpec::Conv2d { in_channels, out_channels, kernel, stride, .. }, Some(rw)) => {
                    let (h, w) = spatial(&cur_shape);
                    conv_forward_real(&cur, rw, *in_channels, *out_channels, *kernel, *stride, h, w)
                }
                (LayerSpec::Relu, _) => cur.iter().map(|&v| v.max(0.0)).collect(),
                (LayerSpec::MaxPool2d { size }, _) => {
                    let (c, (h, w)) = (channels(&cur_shape), spatial(&cur_shape));
                    let (y, arg) = maxpool_forward(&cur, c, h, w, *size);
                    memo = Some(arg);
                    y
                }
                (LayerSpec::Flatten | LayerSpec::ArgmaxHead, _) => cur.clone(),
                _ => unreachable!("weights validated at construction"),
            };
            pool_memos.push(memo);
            outputs.push(out.clone());
            cur = out;
            cur_shape = self.shapes[idx];
        }
        Ok(ForwardCache { outputs, pool_memos })
    }

    /// Gradients of a scalar loss with respect to every parameter, given the
    /// gradient at the logits.
    fn backward(&self, input: &[f64], cache: &ForwardCache, dlogits: &[f64]) -> Vec<Option<RealWeights>> {
        let mut grads: Vec<Option<RealWeights>> = self
            .weights
            .iter()
            .map(|slot| {
                slot.as_ref().map(|rw| RealWeights {
                    w: vec![0.0; rw.w.len()],
                    b: rw.b.as_ref().map(|b| vec![0.0; b.len()]),
                })
            })
            .collect();
        let mut d = dlogits.to_vec();
        for idx in (0..self.arch.layers.len()).rev() {
            let layer_input: &[f64] = if idx == 0 { input } else { &cache.outputs[idx - 1] };
            let in_shape = if idx == 0 { self.arch.input } else { self.shapes[idx - 1] };
            d = match (&self.arch.layers[idx], &self.weights[idx]) {
                (LayerSpec::Dense { in_features, out_features, .. }, Some(rw)) => {
                    let g = grads[idx].as_mut().unwrap();
                    let mut dx = vec![0.0; *in_features];
                    for o in 0..*out_features {
                        let dout = d[o];
                        let row = &rw.w[o * in_features..(o + 1) * in_features];
                        let grow = &mut g.w[o * in_features..(o + 1) * in_features];
                        for i in 0..*in_features {
                            grow[i] += dout * layer_input[i];
                            dx[i] += dout * row[i];
                        }
                        if let Some(gb) = g.b.as_mut() {
                            gb[o] += dout;
                        }
                    }
                    dx
                }
                (LayerSpec::Conv2d { in_channels, out_channels, kernel, stride, .. }, Some(rw)) => {
                    let (h, w) = spatial(&in_shape);
                    let g = grads[idx].as_mut().unwrap();
                    conv_backward_real(
                        layer_input, rw, g, &d, *in_channels, *out_channels, *kernel, *stride, h, w,
                    )
                }
                (LayerSpec::Relu, _) => {
                    let out = &cache.outputs[idx];
                    d.iter().zip(out.iter()).map(|(dv, ov)| if *ov > 0.0 { *dv } else { 0.0 }).collect()
                }
                (LayerSpec::MaxPool2d { .. }, _) => {
                    let memo = cache.pool_memos[idx].as_ref().expect("pool memo recorded");
                    let mut dx = vec![0.0; in_shape.elements()];
                    for (dv, &src) in d.iter().zip(memo.iter()) {
                        dx[src] += dv;
                    }
                    dx
                }
                (LayerSpec::Flatten | LayerSpec::ArgmaxHead, _) => d,
                _ => unreachable!(),
            };
        }
        grads
    }

    /// Mean gradients of softmax cross-entropy over a batch, with respect to
    /// every parameter.
    pub fn batch_gradients(
        &self,
        data: &Dataset,
        indices: &[usize],
    ) -> Result<Vec<Option<RealWeights>>> {
        if indices.is_empty() {
            return Err(DyveError::EmptyDataset);
        }
        let mut total = zero_grads(self);
        for &idx in indices {
            let cache = self.forward_cached(data.input(idx))?;
            let logits = cache.outputs.last().expect("non-empty architecture");
            let (_, dlogits) = softmax_cross_entropy(logits, data.labels[idx]);
            let sample = self.backward(data.input(idx), &cache, &dlogits);
            accumulate(&mut total, &sample);
        }
        let scale = 1.0 / indices.len() as f64;
        for slot in total.iter_mut().flatten() {
            for v in slot.w.iter_mut() {
                *v *= scale;
            }
            if let Some(b) = slot.b.as_mut() {
                for v in b.iter_mut() {
                    *v *= scale;
                }
            }
        }
        Ok(total)
    }

    /// Quantize every tensor symmetrically; `alpha` records the width
    /// multiplier the architecture was generated with.
    pub fn quantize(&self, alpha: f64) -> Result<QuantModel> {
        let weights = self
            .weights
            .iter()
            .map(|slot| {
                slot.as_ref().map(|rw| LayerWeights {
                    weight: QuantTensor::quantize(&rw.w),
                    bias: rw.b.as_ref().map(|b| QuantTensor::quantize(b)),
                })
            })
            .collect();
        QuantModel::new(self.arch.clone(), weights, alpha)
    }
}

fn uniform_vec(rng: &mut ChaCha12Rng, len: usize, bound: f64) -> Vec<f64> {
    (0..len).map(|_| (rng.gen::<f64>() * 2.0 - 1.0) * bound).collect()
}

fn spatial(shape: &TensorShape) -> (usize, usize) {
    match *shape {
        TensorShape::Chw { h, w, .. } => (h, w),
        TensorShape::Flat(_) => unreachable!("spatial layer over flat tensor"),
    }
}

fn channels(shape: &TensorShape) -> usize {
    match *shape {
        TensorShape::Chw { c, .. } => c,
        TensorShape::Flat(_) => unreachable!("spatial layer over flat tensor"),
    }
}

#[allow(clippy::too_many_arguments)]
fn conv_forward_real(
    x: &[f64],
    rw: &RealWeights,
    in_c: usize,
    out_c: usize,
    k: usize,
    stride: usize,
    h: usize,
    w: usize,
) -> Vec<f64> {
    let h_out = (h - k) / stride + 1;
    let w_out = (w - k) / stride + 1;
    let mut y = vec![0.0; out_c * h_out * w_out];
    for co in 0..out_c {
        let bias = rw.b.as_ref().map_or(0.0, |b| b[co]);
        for oy in 0..h_out {
            for ox in 0..w_out {
                let mut acc = 0.0;
                for ci in 0..in_c {
                    for ky in 0..k {
                        let x_row = &x[ci * h * w + (oy * stride + ky) * w..];
                        let w_row = &rw.w[((co * in_c + ci) * k + ky) * k..][..k];
                        for (kx, wv) in w_row.iter().enumerate() {
                            acc += wv * x_row[ox * stride + kx];
                        }
                    }
                }
                y[(co * h_out + oy) * w_out + ox] = acc + bias;
            }
        }
    }
    y
}

#[allow(clippy::too_many_arguments)]
fn conv_backward_real(
    x: &[f64],
    rw: &RealWeights,
    g: &mut RealWeights,
    d: &[f64],
    in_c: usize,
    out_c: usize,
    k: usize,
    stride: usize,
    h: usize,
    w: usize,
) -> Vec<f64> {
    let h_out = (h - k) / stride + 1;
    let w_out = (w - k) / stride + 1;
    let mut dx = vec![0.0; in_c * h * w];
    for co in 0..out_c {
        for oy in 0..h_out {
            for ox in 0..w_out {
                let dout = d[(co * h_out + oy) * w_out + ox];
                if let Some(gb) = g.b.as_mut() {
                    gb[co] += dout;
                }
                for ci in 0..in_c {
                    for ky in 0..k {
                        let iy = oy * stride + ky;
                        let base_x = ci * h * w + iy * w + ox * stride;
                        let base_w = ((co * in_c + ci) * k + ky) * k;
                        for kx in 0..k {
                            g.w[base_w + kx] += dout * x[base_x + kx];
                            dx[base_x + kx] += dout * rw.w[base_w + kx];
                        }
                    }
                }
            }
        }
    }
    dx
}

/// SGD with momentum over mean-of-batch gradients.
struct Sgd {
    velocity: Vec<Option<RealWeights>>,
    learning_rate: f64,
    momentum: f64,
}

impl Sgd {
    fn new(model: &RealModel, learning_rate: f64, momentum: f64) -> Sgd {
        let velocity = model
            .weights
            .iter()
            .map(|slot| {
                slot.as_ref().map(|rw| RealWeights {
                    w: vec![0.0; rw.w.len()],
                    b: rw.b.as_ref().map(|b| vec![0.0; b.len()]),
                })
            })
            .collect();
        Sgd { velocity, learning_rate, momentum }
    }

    fn step(&mut self, model: &mut RealModel, grads: &[Option<RealWeights>], scale: f64) {
        for ((slot, vslot), gslot) in
            model.weights.iter_mut().zip(self.velocity.iter_mut()).zip(grads.iter())
        {
            let (Some(rw), Some(v), Some(g)) = (slot.as_mut(), vslot.as_mut(), gslot.as_ref())
            else {
                continue;
            };
            for ((wv, vv), gv) in rw.w.iter_mut().zip(v.w.iter_mut()).zip(g.w.iter()) {
                *vv = self.momentum * *vv + gv * scale;
                *wv -= self.learning_rate * *vv;
            }
            if let (Some(bw), Some(bv), Some(bg)) = (rw.b.as_mut(), v.b.as_mut(), g.b.as_ref()) {
                for ((wv, vv), gv) in bw.iter_mut().zip(bv.iter_mut()).zip(bg.iter()) {
                    *vv = self.momentum * *vv + gv * scale;
                    *wv -= self.learning_rate * *vv;
                }
            }
        }
    }
}

fn accumulate(into: &mut [Option<RealWeights>], from: &[Option<RealWeights>]) {
    for (a, b) in into.iter_mut().zip(from.iter()) {
        let (Some(a), Some(b)) = (a.as_mut(), b.as_ref()) else { continue };
        for (av, bv) in a.w.iter_mut().zip(b.w.iter()) {
            *av += bv;
        }
        if let (Some(ab), Some(bb)) = (a.b.as_mut(), b.b.as_ref()) {
            for (av, bv) in ab.iter_mut().zip(bb.iter()) {
                *av += bv;
            }
        }
    }
}

fn zero_grads(model: &RealModel) -> Vec<Option<RealWeights>> {
    model
        .weights
        .iter()
        .map(|slot| {
            slot.as_ref().map(|rw| RealWeights {
                w: vec![0.0; rw.w.len()],
                b: rw.b.as_ref().map(|b| vec![0.0; b.len()]),
            })
        })
        .collect()
}

fn shuffled_indices(len: usize, rng: &mut ChaCha12Rng) -> Vec<usize> {
    let mut order: Vec<usize> = (0..len).collect();
    for i in (1..len).rev() {
        let j = rng.gen_range(0..=i);
        order.swap(i, j);
    }
    order
}

/// Softmax cross-entropy against an integer label; numerically stable.
pub fn softmax_cross_entropy(logits: &[f64], label: usize) -> (f64, Vec<f64>) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    let loss = sum.ln() - (logits[label] - max);
    let mut grad: Vec<f64> = exps.iter().map(|e| e / sum).collect();
    grad[label] -= 1.0;
    (loss, grad)
}

/// Minimize softmax cross-entropy over the dataset's true labels.
pub fn train_cross_entropy(
    model: &mut RealModel,
    data: &Dataset,
    cfg: &TrainConfig,
    rng: &mut ChaCha12Rng,
) -> Result<TrainStats> {
    run_training(model, data, cfg.epochs, cfg.learning_rate, cfg.batch_size, cfg.momentum, rng, |logits, idx| {
        softmax_cross_entropy(logits, data.labels[idx])
    })
}

/// Distillation targets in the student's class space.
#[derive(Clone, Debug)]
pub struct KdTargets {
    /// Temperature-softened teacher distribution per sample.
    pub soft: Vec<Vec<f64>>,
    /// Ground-truth label per sample.
    pub hard: Vec<usize>,
}

/// Minimize the distillation loss against precomputed teacher targets.
pub fn train_distilled(
    model: &mut RealModel,
    data: &Dataset,
    targets: &KdTargets,
    kd: &KdConfig,
    rng: &mut ChaCha12Rng,
) -> Result<TrainStats> {
    if targets.soft.len() != data.len() || targets.hard.len() != data.len() {
        return Err(DyveError::DimensionMismatch(format!(
            "{} targets for {} samples",
            targets.soft.len(),
            data.len()
        )));
    }
    run_training(
        model,
        data,
        kd.epochs,
        kd.learning_rate,
        kd.batch_size,
        0.9,
        rng,
        |logits, idx| {
            let loss = kd_loss_from_target(logits, &targets.soft[idx], targets.hard[idx], kd);
            let grad = kd_grad_from_target(logits, &targets.soft[idx], targets.hard[idx], kd);
            (loss, grad)
        },
    )
}

#[allow(clippy::too_many_arguments)]
fn run_training(
    model: &mut RealModel,
    data: &Dataset,
    epochs: usize,
    learning_rate: f64,
    batch_size: usize,
    momentum: f64,
    rng: &mut ChaCha12Rng,
    loss_fn: impl Fn(&[f64], usize) -> (f64, Vec<f64>),
) -> Result<TrainStats> {
    if data.is_empty() {
        return Err(DyveError::EmptyDataset);
    }
    let batch_size = batch_size.max(1);
    let mut sgd = Sgd::new(model, learning_rate, momentum);
    let mut last_loss = f64::NAN;
    for epoch in 0..epochs {
        let order = shuffled_indices(data.len(), rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(batch_size) {
            let mut grads = zero_grads(model);
            for &idx in batch {
                let cache = model.forward_cached(data.input(idx))?;
                let logits = cache.outputs.last().expect("non-empty architecture");
                let (loss, dlogits) = loss_fn(logits, idx);
                epoch_loss += loss;
                let sample_grads = model.backward(data.input(idx), &cache, &dlogits);
                accumulate(&mut grads, &sample_grads);
            }
            sgd.step(model, &grads, 1.0 / batch.len() as f64);
        }
        last_loss = epoch_loss / data.len() as f64;
        if !last_loss.is_finite() {
            return Err(DyveError::TrainingDiverged(format!(
                "epoch {epoch}: mean loss {last_loss}"
            )));
        }
    }
    Ok(TrainStats { epochs_run: epochs, final_loss: last_loss })
}

/// Fraction of dataset rows the quantized model labels correctly.
pub fn accuracy(model: &QuantModel, data: &Dataset) -> Result<f64> {
    if data.is_empty() {
        return Err(DyveError::EmptyDataset);
    }
    let mut correct = 0usize;
    for idx in 0..data.len() {
        if model.infer_label(data.input(idx))? == data.labels[idx] {
            correct += 1;
        }
    }
    Ok(correct as f64 / data.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{synthetic_blobs, BlobConfig};
    use crate::rng;

    fn tiny_blobs() -> Dataset {
        synthetic_blobs(
            &BlobConfig {
                classes: 3,
                dim: 4,
                samples_per_class: 60,
                separation: 6.0,
                confusable: None,
                confusable_distance: 0.0,
            },
            99,
        )
        .unwrap()
    }

    #[test]
    fn mlp_learns_separable_blobs() {
        let data = tiny_blobs();
        let arch = Architecture::mlp(4, &[16], 3);
        let mut rng = rng::stream(5, "train-test");
        let mut model = RealModel::init(&arch, &mut rng).unwrap();
        let cfg = TrainConfig { epochs: 20, ..TrainConfig::default() };
        train_cross_entropy(&mut model, &data, &cfg, &mut rng).unwrap();
        let quant = model.quantize(1.0).unwrap();
        let acc = accuracy(&quant, &data).unwrap();
        assert!(acc > 0.95, "accuracy {acc}");
    }

    #[test]
    fn cnn_learns_separable_blobs() {
        let data = synthetic_blobs(
            &BlobConfig {
                classes: 3,
                dim: 16,
                samples_per_class: 60,
                separation: 8.0,
                confusable: None,
                confusable_distance: 0.0,
            },
            41,
        )
        .unwrap();
        let arch = Architecture::cnn((1, 4, 4), &[(6, 3, 1)], &[12], 3).unwrap();
        let mut rng = rng::stream(6, "train-cnn");
        let mut model = RealModel::init(&arch, &mut rng).unwrap();
        let cfg = TrainConfig { epochs: 25, ..TrainConfig::default() };
        train_cross_entropy(&mut model, &data, &cfg, &mut rng).unwrap();
        let acc = accuracy(&model.quantize(1.0).unwrap(), &data).unwrap();
        assert!(acc > 0.9, "accuracy {acc}");
    }

    /// Backprop against central finite differences on a small network that
    /// exercises every layer kind.
    #[test]
    fn gradients_match_finite_differences() {
        let arch = Architecture {
            input: TensorShape::Chw { c: 1, h: 6, w: 6 },
            layers: vec![
                LayerSpec::Conv2d { in_channels: 1, out_channels: 2, kernel: 3, stride: 1, bias: true },
                LayerSpec::Relu,
                LayerSpec::MaxPool2d { size: 2 },
                LayerSpec::Flatten,
                LayerSpec::Dense { in_features: 8, out_features: 3, bias: true },
            ],
        };
        let mut rng = rng::stream(17, "grad-check");
        let mut model = RealModel::init(&arch, &mut rng).unwrap();
        let input: Vec<f64> = (0..36).map(|i| ((i * 7 % 13) as f64 - 6.0) / 5.0).collect();
        let label = 1usize;

        let cache = model.forward_cached(&input).unwrap();
        let logits = cache.outputs.last().unwrap();
        let (_, dlogits) = softmax_cross_entropy(logits, label);
        let grads = model.backward(&input, &cache, &dlogits);

        let h = 1e-6;
        for layer in [0usize, 4] {
            let len = model.weights[layer].as_ref().unwrap().w.len();
            for pi in (0..len).step_by(3) {
                let orig = model.weights[layer].as_ref().unwrap().w[pi];
                model.weights[layer].as_mut().unwrap().w[pi] = orig + h;
                let (lp, _) = softmax_cross_entropy(&model.forward(&input).unwrap(), label);
                model.weights[layer].as_mut().unwrap().w[pi] = orig - h;
                let (lm, _) = softmax_cross_entropy(&model.forward(&input).unwrap(), label);
                model.weights[layer].as_mut().unwrap().w[pi] = orig;
                let fd = (lp - lm) / (2.0 * h);
                let an = grads[layer].as_ref().unwrap().w[pi];
                assert!(
                    (fd - an).abs() <= 1e-5 * fd.abs().max(1.0),
                    "layer {layer} param {pi}: analytic {an} vs fd {fd}"
                );
            }
        }
    }

    #[test]
    fn training_is_deterministic() {
        let data = tiny_blobs();
        let arch = Architecture::mlp(4, &[8], 3);
        let run = || {
            let mut rng = rng::stream(12, "det");
            let mut model = RealModel::init(&arch, &mut rng).unwrap();
            let cfg = TrainConfig { epochs: 3, ..TrainConfig::default() };
            train_cross_entropy(&mut model, &data, &cfg, &mut rng).unwrap();
            model.quantize(1.0).unwrap().to_bytes()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn empty_dataset_is_rejected() {
        let arch = Architecture::mlp(4, &[8], 3);
        let mut rng = rng::stream(1, "empty");
        let mut model = RealModel::init(&arch, &mut rng).unwrap();
        let data = Dataset { features: vec![], labels: vec![], num_classes: 3, dim: 4 };
        assert!(matches!(
            train_cross_entropy(&mut model, &data, &TrainConfig::default(), &mut rng),
            Err(DyveError::EmptyDataset)
        ));
    }
}
