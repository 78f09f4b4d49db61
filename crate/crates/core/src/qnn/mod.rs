//! Deterministic inference engine for INT-8 quantized feed-forward and
//! convolutional classifiers, with multiply-accumulate accounting and
//! width-multiplier scaling of architectures.
//!
//! Inference dequantizes the stored codes per layer and accumulates in f64,
//! so a model's output is a pure function of its bytes and the input bytes.
//! Simulated integer accumulators are out of scope: faults target stored
//! codes, not arithmetic.

pub mod io;
pub mod quant;

use serde::{Deserialize, Serialize};

use crate::error::{DyveError, Result};
pub use quant::{QuantParams, QuantTensor, BIT_WIDTH, QMAX, QMIN};

/// Bytes of bookkeeping stored per tensor: an f64 scale and an i32 zero point.
pub const TENSOR_METADATA_BYTES: u64 = 12;

/// Shape of an activation tensor flowing between layers.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum TensorShape {
    Flat(usize),
    Chw { c: usize, h: usize, w: usize },
}

impl TensorShape {
    pub fn elements(&self) -> usize {
        match *self {
            TensorShape::Flat(n) => n,
            TensorShape::Chw { c, h, w } => c * h * w,
        }
    }
}

impl std::fmt::Display for TensorShape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match *self {
            TensorShape::Flat(n) => write!(f, "[{n}]"),
            TensorShape::Chw { c, h, w } => write!(f, "[{c}x{h}x{w}]"),
        }
    }
}

/// One layer of a model architecture.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LayerSpec {
    Dense { in_features: usize, out_features: usize, bias: bool },
    /// Valid (unpadded) 2-D convolution.
    Conv2d { in_channels: usize, out_channels: usize, kernel: usize, stride: usize, bias: bool },
    Relu,
    /// Non-overlapping max pooling with window = stride = `size`.
    MaxPool2d { size: usize },
    Flatten,
    /// Terminal marker; identity on data, the argmax is taken at the output.
    ArgmaxHead,
}

impl LayerSpec {
    pub fn is_weighted(&self) -> bool {
        matches!(self, LayerSpec::Dense { .. } | LayerSpec::Conv2d { .. })
    }
}

/// An ordered layer chain plus the declared input shape.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub input: TensorShape,
    pub layers: Vec<LayerSpec>,
}

impl Architecture {
    /// Plain MLP: alternating dense/relu over `hidden`, then a dense head.
    pub fn mlp(input_dim: usize, hidden: &[usize], classes: usize) -> Architecture {
        let mut layers = Vec::new();
        let mut prev = input_dim;
        for &h in hidden {
            layers.push(LayerSpec::Dense { in_features: prev, out_features: h, bias: true });
            layers.push(LayerSpec::Relu);
            prev = h;
        }
        layers.push(LayerSpec::Dense { in_features: prev, out_features: classes, bias: true });
        Architecture { input: TensorShape::Flat(input_dim), layers }
    }

    /// Small CNN: conv/relu stages, flatten, dense/relu stages, dense head.
    pub fn cnn(
        input: (usize, usize, usize),
        conv: &[(usize, usize, usize)], // (out_channels, kernel, stride)
        hidden: &[usize],
        classes: usize,
    ) -> Result<Architecture> {
        let (c, h, w) = input;
        let shape = TensorShape::Chw { c, h, w };
        let mut layers = Vec::new();
        let mut cur = shape;
        for &(out_channels, kernel, stride) in conv {
            let in_channels = match cur {
                TensorShape::Chw { c, .. } => c,
                TensorShape::Flat(_) => {
                    return Err(DyveError::InvalidArchitecture(
                        "convolution after flatten".into(),
                    ))
                }
            };
            let layer = LayerSpec::Conv2d { in_channels, out_channels, kernel, stride, bias: true };
            cur = shape_after(&layer, &cur)?;
            layers.push(layer);
            layers.push(LayerSpec::Relu);
        }
        layers.push(LayerSpec::Flatten);
        let mut prev = cur.elements();
        for &hdim in hidden {
            layers.push(LayerSpec::Dense { in_features: prev, out_features: hdim, bias: true });
            layers.push(LayerSpec::Relu);
            prev = hdim;
        }
        layers.push(LayerSpec::Dense { in_features: prev, out_features: classes, bias: true });
        let arch = Architecture { input: shape, layers };
        arch.validate()?;
        Ok(arch)
    }

    /// Shape of the tensor after each layer; errors when consecutive layers
    /// do not compose.
    pub fn validate(&self) -> Result<Vec<TensorShape>> {
        let mut shapes = Vec::with_capacity(self.layers.len());
        let mut cur = self.input;
        for (idx, layer) in self.layers.iter().enumerate() {
            if matches!(layer, LayerSpec::ArgmaxHead) && idx + 1 != self.layers.len() {
                return Err(DyveError::InvalidArchitecture(
                    "argmax head must be the final layer".into(),
                ));
            }
            cur = shape_after(layer, &cur).map_err(|e| {
                DyveError::InvalidArchitecture(format!("layer {idx}: {e}"))
            })?;
            shapes.push(cur);
        }
        if cur.elements() == 0 {
            return Err(DyveError::InvalidArchitecture("empty output".into()));
        }
        Ok(shapes)
    }

    /// Number of classes: the flat size of the final tensor.
    pub fn output_dim(&self) -> Result<usize> {
        Ok(self
            .validate()?
            .last()
            .map(TensorShape::elements)
            .unwrap_or_else(|| self.input.elements()))
    }

    /// Multiply-accumulate count: `2*I*O` per dense layer and
    /// `2*k^2*C_in*H_out*W_out*C_out` per convolution; activation, pooling
    /// and reshaping layers cost nothing.
    pub fn flops(&self) -> Result<u64> {
        let shapes = self.validate()?;
        let mut total: u64 = 0;
        for (layer, out_shape) in self.layers.iter().zip(shapes.iter()) {
            total += match (layer, out_shape) {
                (LayerSpec::Dense { in_features, out_features, .. }, _) => {
                    2 * *in_features as u64 * *out_features as u64
                }
                (
                    LayerSpec::Conv2d { in_channels, out_channels, kernel, .. },
                    TensorShape::Chw { h, w, .. },
                ) => {
                    2 * (*kernel as u64).pow(2)
                        * *in_channels as u64
                        * (*h as u64)
                        * (*w as u64)
                        * *out_channels as u64
                }
                _ => 0,
            };
        }
        Ok(total)
    }

    /// Uniformly rescale every hidden channel/neuron count by `alpha`
    /// (round half up, floor 1). The network input and the class count are
    /// left untouched.
    pub fn scaled(&self, alpha: f64) -> Result<Architecture> {
        if !(alpha > 0.0 && alpha <= 1.0) || !alpha.is_finite() {
            return Err(DyveError::InvalidMultiplier(alpha));
        }
        self.validate()?;
        let last_weighted = self.layers.iter().rposition(LayerSpec::is_weighted);
        let mut layers = Vec::with_capacity(self.layers.len());
        let mut cur = self.input;
        for (idx, layer) in self.layers.iter().enumerate() {
            let scaled = match *layer {
                LayerSpec::Dense { out_features, bias, .. } => {
                    let out = if Some(idx) == last_weighted {
                        out_features
                    } else {
                        scale_width(out_features, alpha)
                    };
                    LayerSpec::Dense { in_features: cur.elements(), out_features: out, bias }
                }
                LayerSpec::Conv2d { out_channels, kernel, stride, bias, .. } => {
                    let in_channels = match cur {
                        TensorShape::Chw { c, .. } => c,
                        TensorShape::Flat(_) => {
                            return Err(DyveError::InvalidArchitecture(
                                "convolution over flat tensor".into(),
                            ))
                        }
                    };
                    let out = if Some(idx) == last_weighted {
                        out_channels
                    } else {
                        scale_width(out_channels, alpha)
                    };
                    LayerSpec::Conv2d { in_channels, out_channels: out, kernel, stride, bias }
                }
                ref other => other.clone(),
            };
            cur = shape_after(&scaled, &cur)?;
            layers.push(scaled);
        }
        Ok(Architecture { input: self.input, layers })
    }

    /// Same architecture with the final weighted layer retargeted to
    /// `classes` outputs; that layer must be dense.
    pub fn with_classes(&self, classes: usize) -> Result<Architecture> {
        let mut arch = self.clone();
        let last = arch
            .layers
            .iter()
            .rposition(LayerSpec::is_weighted)
            .ok_or_else(|| DyveError::InvalidArchitecture("no weighted layers".into()))?;
        match arch.layers[last] {
            LayerSpec::Dense { ref mut out_features, .. } => *out_features = classes,
            _ => {
                return Err(DyveError::InvalidArchitecture(
                    "class head must be a dense layer".into(),
                ))
            }
        }
        arch.validate()?;
        Ok(arch)
    }
}

fn scale_width(c: usize, alpha: f64) -> usize {
    // round half up with floor 1, so no layer collapses to zero width
    (((alpha * c as f64) + 0.5).floor() as usize).max(1)
}

fn shape_after(layer: &LayerSpec, input: &TensorShape) -> Result<TensorShape> {
    match *layer {
        LayerSpec::Dense { in_features, out_features, .. } => match *input {
            TensorShape::Flat(n) if n == in_features => Ok(TensorShape::Flat(out_features)),
            TensorShape::Flat(n) => Err(DyveError::ShapeMismatch {
                expected: format!("[{in_features}]"),
                got: format!("[{n}]"),
            }),
            chw => Err(DyveError::ShapeMismatch {
                expected: format!("[{in_features}]"),
                got: chw.to_string(),
            }),
        },
        LayerSpec::Conv2d { in_channels, out_channels, kernel, stride, .. } => match *input {
            TensorShape::Chw { c, h, w } if c == in_channels => {
                if kernel == 0 || stride == 0 {
                    return Err(DyveError::InvalidArchitecture(
                        "kernel and stride must be positive".into(),
                    ));
                }
                if h < kernel || w < kernel {
                    return Err(DyveError::ShapeMismatch {
                        expected: format!("spatial dims >= {kernel}"),
                        got: input.to_string(),
                    });
                }
                Ok(TensorShape::Chw {
                    c: out_channels,
                    h: (h - kernel) / stride + 1,
                    w: (w - kernel) / stride + 1,
                })
            }
            other => Err(DyveError::ShapeMismatch {
                expected: format!("[{in_channels}xHxW]"),
                got: other.to_string(),
            }),
        },
        LayerSpec::Relu | LayerSpec::ArgmaxHead => Ok(*input),
        LayerSpec::MaxPool2d { size } => match *input {
            TensorShape::Chw { c, h, w } if size > 0 && h >= size && w >= size => {
                Ok(TensorShape::Chw { c, h: h / size, w: w / size })
            }
            other => Err(DyveError::ShapeMismatch {
                expected: format!("[Cx>= {size}x>={size}]"),
                got: other.to_string(),
            }),
        },
        LayerSpec::Flatten => Ok(TensorShape::Flat(input.elements())),
    }
}

/// Quantized parameters of one weighted layer. Dense weights are stored
/// row-major `[out][in]`; convolution weights `[out_c][in_c][ky][kx]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerWeights {
    pub weight: QuantTensor,
    pub bias: Option<QuantTensor>,
}

impl LayerWeights {
    /// Weight and bias codes viewed as one flat address space, weight first.
    pub fn code_len(&self) -> usize {
        self.weight.len() + self.bias.as_ref().map_or(0, QuantTensor::len)
    }
}

/// A single bit flipped in one intermediate activation tensor during one
/// inference: the element is quantized symmetrically on the fly, the bit is
/// flipped in its code, and the element is read back dequantized.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActivationFault {
    pub layer: usize,
    pub index: usize,
    pub bit: u8,
}

/// Per-layer activations recorded during one inference.
#[derive(Clone, Debug)]
pub struct InferTrace {
    /// Output of each layer, flattened, in layer order.
    pub activations: Vec<Vec<f64>>,
    pub logits: Vec<f64>,
    pub label: usize,
}

/// An INT-8 quantized model: an architecture plus per-layer code tensors.
#[derive(Clone, Debug, PartialEq)]
pub struct QuantModel {
    arch: Architecture,
    weights: Vec<Option<LayerWeights>>,
    shapes: Vec<TensorShape>,
    alpha: f64,
    num_classes: usize,
}

impl QuantModel {
    pub fn new(arch: Architecture, weights: Vec<Option<LayerWeights>>, alpha: f64) -> Result<QuantModel> {
        if !(alpha > 0.0 && alpha <= 1.0) || !alpha.is_finite() {
            return Err(DyveError::InvalidMultiplier(alpha));
        }
        let shapes = arch.validate()?;
        if weights.len() != arch.layers.len() {
            return Err(DyveError::InvalidArchitecture(format!(
                "{} weight slots for {} layers",
                weights.len(),
                arch.layers.len()
            )));
        }
        let mut cur = arch.input;
        for (idx, (layer, slot)) in arch.layers.iter().zip(weights.iter()).enumerate() {
            match (layer, slot) {
                (LayerSpec::Dense { in_features, out_features, bias }, Some(lw)) => {
                    expect_len(idx, "weight", lw.weight.len(), in_features * out_features)?;
                    check_bias(idx, *bias, &lw.bias, *out_features)?;
                    lw.weight.params.validate()?;
                }
                (LayerSpec::Conv2d { in_channels, out_channels, kernel, bias, .. }, Some(lw)) => {
                    expect_len(
                        idx,
                        "weight",
                        lw.weight.len(),
                        out_channels * in_channels * kernel * kernel,
                    )?;
                    check_bias(idx, *bias, &lw.bias, *out_channels)?;
                    lw.weight.params.validate()?;
                }
                (l, None) if !l.is_weighted() => {}
                (l, Some(_)) if !l.is_weighted() => {
                    return Err(DyveError::InvalidArchitecture(format!(
                        "layer {idx} carries weights but is not weighted"
                    )))
                }
                _ => {
                    return Err(DyveError::InvalidArchitecture(format!(
                        "layer {idx} is weighted but has no weights"
                    )))
                }
            }
            cur = shape_after(layer, &cur)?;
        }
        let num_classes = cur.elements();
        Ok(QuantModel { arch, weights, shapes, alpha, num_classes })
    }

    pub fn arch(&self) -> &Architecture {
        &self.arch
    }

    pub fn weights(&self) -> &[Option<LayerWeights>] {
        &self.weights
    }

    /// Width multiplier this model was generated with (1.0 for task models).
    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn flops(&self) -> u64 {
        self.arch.flops().expect("architecture validated at construction")
    }

    /// Parameter bytes (one per INT-8 code) plus per-tensor metadata.
    pub fn storage_bytes(&self) -> u64 {
        let mut total = 0u64;
        for lw in self.weights.iter().flatten() {
            total += lw.weight.len() as u64 + TENSOR_METADATA_BYTES;
            if let Some(b) = &lw.bias {
                total += b.len() as u64 + TENSOR_METADATA_BYTES;
            }
        }
        total
    }

    /// Run the model; returns the logits and the argmax label (ties resolve
    /// to the lowest class index).
    pub fn infer(&self, input: &[f64]) -> Result<(Vec<f64>, usize)> {
        let trace = self.run(input, &[], false)?;
        Ok((trace.logits, trace.label))
    }

    pub fn infer_label(&self, input: &[f64]) -> Result<usize> {
        Ok(self.run(input, &[], false)?.label)
    }

    /// Run the model recording every intermediate activation.
    pub fn infer_traced(&self, input: &[f64]) -> Result<InferTrace> {
        self.run(input, &[], true)
    }

    /// Run the model with transient activation faults injected.
    pub fn infer_with_activation_faults(
        &self,
        input: &[f64],
        faults: &[ActivationFault],
    ) -> Result<InferTrace> {
        self.run(input, faults, true)
    }

    fn run(&self, input: &[f64], faults: &[ActivationFault], trace: bool) -> Result<InferTrace> {
        if input.len() != self.arch.input.elements() {
            return Err(DyveError::ShapeMismatch {
                expected: self.arch.input.to_string(),
                got: format!("[{}]", input.len()),
            });
        }
        for f in faults {
            if f.layer >= self.arch.layers.len()
                || f.index >= self.shapes[f.layer].elements()
                || f.bit >= BIT_WIDTH as u8
            {
                return Err(DyveError::FaultAddress(format!(
                    "activation target layer {} index {} bit {}",
                    f.layer, f.index, f.bit
                )));
            }
        }
        let mut activations = Vec::new();
        let mut cur = input.to_vec();
        let mut cur_shape = self.arch.input;
        for (idx, layer) in self.arch.layers.iter().enumerate() {
            let out_shape = self.shapes[idx];
            let mut out = match (layer, &self.weights[idx]) {
                (LayerSpec::Dense { in_features, out_features, .. }, Some(lw)) => {
                    dense_forward(&cur, lw, *in_features, *out_features)
                }
                (LayerSpec::Conv2d { in_channels, out_channels, kernel, stride, .. }, Some(lw)) => {
                    let (h, w) = match cur_shape {
                        TensorShape::Chw { h, w, .. } => (h, w),
                        TensorShape::Flat(_) => unreachable!("validated at construction"),
                    };
                    conv_forward(&cur, lw, *in_channels, *out_channels, *kernel, *stride, h, w)
                }
                (LayerSpec::Relu, _) => cur.iter().map(|&v| v.max(0.0)).collect(),
                (LayerSpec::MaxPool2d { size }, _) => {
                    let (c, h, w) = match cur_shape {
                        TensorShape::Chw { c, h, w } => (c, h, w),
                        TensorShape::Flat(_) => unreachable!("validated at construction"),
                    };
                    maxpool_forward(&cur, c, h, w, *size).0
                }
                (LayerSpec::Flatten | LayerSpec::ArgmaxHead, _) => cur.clone(),
                _ => unreachable!("validated at construction"),
            };
            for f in faults.iter().filter(|f| f.layer == idx) {
                flip_activation_bit(&mut out, f.index, f.bit);
            }
            if trace {
                activations.push(out.clone());
            }
            cur = out;
            cur_shape = out_shape;
        }
        let label = argmax(&cur);
        Ok(InferTrace { activations, logits: cur, label })
    }

    /// Total number of INT-8 codes across all tensors (weights and biases).
    pub fn total_codes(&self) -> usize {
        self.weights
            .iter()
            .flatten()
            .map(LayerWeights::code_len)
            .sum()
    }

    /// Codes in one layer's flat address space (weight codes then bias codes).
    pub fn layer_code_len(&self, layer: usize) -> usize {
        self.weights
            .get(layer)
            .and_then(Option::as_ref)
            .map_or(0, LayerWeights::code_len)
    }

    /// XOR-flip one bit of one stored code. The same call undoes itself.
    pub fn flip_code_bit(&mut self, layer: usize, index: usize, bit: u8) -> Result<()> {
        if bit >= BIT_WIDTH as u8 {
            return Err(DyveError::FaultAddress(format!("bit {bit} outside 0..8")));
        }
        let lw = self
            .weights
            .get_mut(layer)
            .and_then(Option::as_mut)
            .ok_or_else(|| DyveError::FaultAddress(format!("layer {layer} has no codes")))?;
        let wlen = lw.weight.len();
        let code: &mut i8 = if index < wlen {
            &mut lw.weight.codes[index]
        } else {
            let bias_index = index - wlen;
            match lw.bias.as_mut() {
                Some(b) if bias_index < b.len() => &mut b.codes[bias_index],
                _ => {
                    return Err(DyveError::FaultAddress(format!(
                        "index {index} outside layer {layer} ({} codes)",
                        wlen + lw.bias.as_ref().map_or(0, QuantTensor::len)
                    )))
                }
            }
        };
        *code = (*code as u8 ^ (1u8 << bit)) as i8;
        Ok(())
    }

    /// Element count of every intermediate activation tensor, in layer order.
    pub fn activation_sizes(&self) -> Vec<usize> {
        self.shapes.iter().map(TensorShape::elements).collect()
    }
}

fn expect_len(layer: usize, what: &str, got: usize, want: usize) -> Result<()> {
    if got != want {
        return Err(DyveError::InvalidArchitecture(format!(
            "layer {layer}: {what} tensor holds {got} codes, expected {want}"
        )));
    }
    Ok(())
}

fn check_bias(layer: usize, declared: bool, bias: &Option<QuantTensor>, out: usize) -> Result<()> {
    match (declared, bias) {
        (true, Some(b)) => {
            expect_len(layer, "bias", b.len(), out)?;
            b.params.validate()
        }
        (false, None) => Ok(()),
        (true, None) => Err(DyveError::InvalidArchitecture(format!(
            "layer {layer} declares a bias but stores none"
        ))),
        (false, Some(_)) => Err(DyveError::InvalidArchitecture(format!(
            "layer {layer} stores a bias but declares none"
        ))),
    }
}

fn dense_forward(x: &[f64], lw: &LayerWeights, in_f: usize, out_f: usize) -> Vec<f64> {
    let scale = lw.weight.params.scale;
    let zp = lw.weight.params.zero_point;
    let mut y = vec![0.0; out_f];
    for (o, yo) in y.iter_mut().enumerate() {
        let row = &lw.weight.codes[o * in_f..(o + 1) * in_f];
        let mut acc = 0.0;
        for (c, xi) in row.iter().zip(x.iter()) {
            acc += f64::from(i32::from(*c) - zp) * xi;
        }
        *yo = scale * acc;
    }
    if let Some(b) = &lw.bias {
        for (yo, code) in y.iter_mut().zip(b.codes.iter()) {
            *yo += b.params.dequantize(*code);
        }
    }
    y
}

#[allow(clippy::too_many_arguments)]
fn conv_forward(
    x: &[f64],
    lw: &LayerWeights,
    in_c: usize,
    out_c: usize,
    k: usize,
    stride: usize,
    h: usize,
    w: usize,
) -> Vec<f64> {
    let h_out = (h - k) / stride + 1;
    let w_out = (w - k) / stride + 1;
    let scale = lw.weight.params.scale;
    let zp = lw.weight.params.zero_point;
    let mut y = vec![0.0; out_c * h_out * w_out];
    for co in 0..out_c {
        let bias = lw.bias.as_ref().map_or(0.0, |b| b.params.dequantize(b.codes[co]));
        for oy in 0..h_out {
            for ox in 0..w_out {
                let mut acc = 0.0;
                for ci in 0..in_c {
                    for ky in 0..k {
                        let iy = oy * stride + ky;
                        let x_row = &x[ci * h * w + iy * w..];
                        let w_row =
                            &lw.weight.codes[((co * in_c + ci) * k + ky) * k..][..k];
                        for (kx, code) in w_row.iter().enumerate() {
                            acc += f64::from(i32::from(*code) - zp)
                                * x_row[ox * stride + kx];
                        }
                    }
                }
                y[(co * h_out + oy) * w_out + ox] = scale * acc + bias;
            }
        }
    }
    y
}

/// Returns the pooled tensor and, for gradient routing, the flat input index
/// chosen per output element.
pub(crate) fn maxpool_forward(
    x: &[f64],
    c: usize,
    h: usize,
    w: usize,
    size: usize,
) -> (Vec<f64>, Vec<usize>) {
    let h_out = h / size;
    let w_out = w / size;
    let mut y = vec![f64::NEG_INFINITY; c * h_out * w_out];
    let mut arg = vec![0usize; c * h_out * w_out];
    for ci in 0..c {
        for oy in 0..h_out {
            for ox in 0..w_out {
                let out_idx = (ci * h_out + oy) * w_out + ox;
                for ky in 0..size {
                    for kx in 0..size {
                        let idx = ci * h * w + (oy * size + ky) * w + (ox * size + kx);
                        if x[idx] > y[out_idx] {
                            y[out_idx] = x[idx];
                            arg[out_idx] = idx;
                        }
                    }
                }
            }
        }
    }
    (y, arg)
}

fn flip_activation_bit(tensor: &mut [f64], index: usize, bit: u8) {
    // Only the struck element passes through the INT-8 buffer; untouched
    // elements keep their exact values so the fault is the only difference.
    let params = QuantParams::symmetric_for(tensor);
    let code = params.quantize(tensor[index]);
    let flipped = (code as u8 ^ (1u8 << bit)) as i8;
    tensor[index] = params.dequantize(flipped);
}

/// Index of the largest element; ties resolve to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}
