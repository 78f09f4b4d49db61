//! Self-describing binary container for quantized models.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic "QNN8" | version u32 | alpha f64 | input-shape | layer count u32
//! per layer: kind tag u8 | kind fields (u32) | weight flag u8
//!            [tensor: len u32, scale f64, zero_point i32, codes]
//!            bias flag u8 [tensor]
//! ```
//!
//! Saving and re-loading a model reproduces the file byte for byte.

use std::path::Path;

use crate::error::{DyveError, Result};

use super::{Architecture, LayerSpec, LayerWeights, QuantModel, QuantParams, QuantTensor, TensorShape};

const MAGIC: &[u8; 4] = b"QNN8";
const VERSION: u32 = 1;

const TAG_DENSE: u8 = 0;
const TAG_CONV: u8 = 1;
const TAG_RELU: u8 = 2;
const TAG_MAXPOOL: u8 = 3;
const TAG_FLATTEN: u8 = 4;
const TAG_ARGMAX: u8 = 5;

const SHAPE_FLAT: u8 = 0;
const SHAPE_CHW: u8 = 1;

impl QuantModel {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        put_u32(&mut out, VERSION);
        put_f64(&mut out, self.alpha());
        match self.arch().input {
            TensorShape::Flat(n) => {
                out.push(SHAPE_FLAT);
                put_u32(&mut out, n as u32);
            }
            TensorShape::Chw { c, h, w } => {
                out.push(SHAPE_CHW);
                put_u32(&mut out, c as u32);
                put_u32(&mut out, h as u32);
                put_u32(&mut out, w as u32);
            }
        }
        put_u32(&mut out, self.arch().layers.len() as u32);
        for (layer, slot) in self.arch().layers.iter().zip(self.weights().iter()) {
            match *layer {
                LayerSpec::Dense { in_features, out_features, bias } => {
                    out.push(TAG_DENSE);
                    put_u32(&mut out, in_features as u32);
                    put_u32(&mut out, out_features as u32);
                    out.push(u8::from(bias));
                }
                LayerSpec::Conv2d { in_channels, out_channels, kernel, stride, bias } => {
                    out.push(TAG_CONV);
                    put_u32(&mut out, in_channels as u32);
                    put_u32(&mut out, out_channels as u32);
                    put_u32(&mut out, kernel as u32);
                    put_u32(&mut out, stride as u32);
                    out.push(u8::from(bias));
                }
                LayerSpec::Relu => out.push(TAG_RELU),
                LayerSpec::MaxPool2d { size } => {
                    out.push(TAG_MAXPOOL);
                    put_u32(&mut out, size as u32);
                }
                LayerSpec::Flatten => out.push(TAG_FLATTEN),
                LayerSpec::ArgmaxHead => out.push(TAG_ARGMAX),
            }
            match slot {
                Some(lw) => {
                    out.push(1);
                    put_tensor(&mut out, &lw.weight);
                    match &lw.bias {
                        Some(b) => {
                            out.push(1);
                            put_tensor(&mut out, b);
                        }
                        None => out.push(0),
                    }
                }
                None => out.push(0),
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<QuantModel> {
        let mut r = Reader { bytes, pos: 0 };
        let magic = r.take(4)?;
        if magic != MAGIC {
            return Err(DyveError::ModelFormat("bad magic".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(DyveError::ModelFormat(format!("unsupported version {version}")));
        }
        let alpha = r.f64()?;
        let input = match r.u8()? {
            SHAPE_FLAT => TensorShape::Flat(r.u32()? as usize),
            SHAPE_CHW => TensorShape::Chw {
                c: r.u32()? as usize,
                h: r.u32()? as usize,
                w: r.u32()? as usize,
            },
            t => return Err(DyveError::ModelFormat(format!("unknown shape tag {t}"))),
        };
        let layer_count = r.u32()? as usize;
        let mut layers = Vec::with_capacity(layer_count);
        let mut weights = Vec::with_capacity(layer_count);
        for _ in 0..layer_count {
            let layer = match r.u8()? {
                TAG_DENSE => LayerSpec::Dense {
                    in_features: r.u32()? as usize,
                    out_features: r.u32()? as usize,
                    bias: r.u8()? != 0,
                },
                TAG_CONV => LayerSpec::Conv2d {
                    in_channels: r.u32()? as usize,
                    out_channels: r.u32()? as usize,
                    kernel: r.u32()? as usize,
                    stride: r.u32()? as usize,
                    bias: r.u8()? != 0,
                },
                TAG_RELU => LayerSpec::Relu,
                TAG_MAXPOOL => LayerSpec::MaxPool2d { size: r.u32()? as usize },
                TAG_FLATTEN => LayerSpec::Flatten,
                TAG_ARGMAX => LayerSpec::ArgmaxHead,
                t => return Err(DyveError::ModelFormat(format!("unknown layer tag {t}"))),
            };
            let slot = if r.u8()? != 0 {
                let weight = take_tensor(&mut r)?;
                let bias = if r.u8()? != 0 { Some(take_tensor(&mut r)?) } else { None };
                Some(LayerWeights { weight, bias })
            } else {
                None
            };
            layers.push(layer);
            weights.push(slot);
        }
        if r.pos != bytes.len() {
            return Err(DyveError::ModelFormat(format!(
                "{} trailing bytes",
                bytes.len() - r.pos
            )));
        }
        QuantModel::new(Architecture { input, layers }, weights, alpha)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        Ok(std::fs::write(path, self.to_bytes())?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<QuantModel> {
        QuantModel::from_bytes(&std::fs::read(path)?)
    }
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_i32(out: &mut Vec<u8>, v: i32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_f64(out: &mut Vec<u8>, v: f64) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_tensor(out: &mut Vec<u8>, t: &QuantTensor) {
    put_u32(out, t.codes.len() as u32);
    put_f64(out, t.params.scale);
    put_i32(out, t.params.zero_point);
    out.extend(t.codes.iter().map(|&c| c as u8));
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(DyveError::ModelFormat("truncated file".into()));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn i32(&mut self) -> Result<i32> {
        Ok(i32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

fn take_tensor(r: &mut Reader<'_>) -> Result<QuantTensor> {
    let len = r.u32()? as usize;
    let scale = r.f64()?;
    let zero_point = r.i32()?;
    let codes = r.take(len)?.iter().map(|&b| b as i8).collect();
    Ok(QuantTensor { codes, params: QuantParams { scale, zero_point } })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_model() -> QuantModel {
        let arch = Architecture {
            input: TensorShape::Chw { c: 1, h: 4, w: 4 },
            layers: vec![
                LayerSpec::Conv2d { in_channels: 1, out_channels: 2, kernel: 3, stride: 1, bias: true },
                LayerSpec::Relu,
                LayerSpec::Flatten,
                LayerSpec::Dense { in_features: 8, out_features: 3, bias: true },
            ],
        };
        let conv_w: Vec<f64> = (0..18).map(|i| (i as f64 - 9.0) / 10.0).collect();
        let dense_w: Vec<f64> = (0..24).map(|i| (i as f64 - 12.0) / 7.0).collect();
        QuantModel::new(
            arch,
            vec![
                Some(LayerWeights {
                    weight: QuantTensor::quantize(&conv_w),
                    bias: Some(QuantTensor::quantize(&[0.1, -0.2])),
                }),
                None,
                None,
                Some(LayerWeights {
                    weight: QuantTensor::quantize(&dense_w),
                    bias: Some(QuantTensor::quantize(&[0.0, 0.5, -0.5])),
                }),
            ],
            1.0,
        )
        .unwrap()
    }

    #[test]
    fn byte_round_trip_is_identical() {
        let model = sample_model();
        let bytes = model.to_bytes();
        let loaded = QuantModel::from_bytes(&bytes).unwrap();
        assert_eq!(loaded, model);
        assert_eq!(loaded.to_bytes(), bytes, "container must round-trip byte for byte");
    }

    #[test]
    fn file_round_trip_preserves_inference() {
        let model = sample_model();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.qnn");
        model.save(&path).unwrap();
        let loaded = QuantModel::load(&path).unwrap();
        let input: Vec<f64> = (0..16).map(|i| (i as f64) / 16.0).collect();
        let (a, _) = model.infer(&input).unwrap();
        let (b, _) = loaded.infer(&input).unwrap();
        assert_eq!(
            a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            b.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn corrupt_magic_is_rejected() {
        let mut bytes = sample_model().to_bytes();
        bytes[0] = b'X';
        assert!(matches!(
            QuantModel::from_bytes(&bytes),
            Err(DyveError::ModelFormat(_))
        ));
    }

    #[test]
    fn truncation_is_rejected() {
        let bytes = sample_model().to_bytes();
        assert!(QuantModel::from_bytes(&bytes[..bytes.len() - 3]).is_err());
    }
}
