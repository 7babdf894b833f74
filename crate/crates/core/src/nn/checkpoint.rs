//! Versioned binary checkpoints.
//!
//! Layout, all integers and floats little-endian:
//!
//! ```text
//! magic        8 bytes  "SHCNNCK\0"
//! version      u32      = 1
//! n_classes    u32
//! input rank   u32, then that many u32 dims
//! n_layers     u32
//! per layer    u8 tag, then
//!   0 conv     u32 out, u32 in, u8 padding (0 same, 1 valid),
//!              out·in·9 f32 kernels, out f32 biases
//!   1 relu     -
//!   2 maxpool  -
//!   3 dropout  f64 rate
//!   4 flatten  -
//!   5 dense    u32 in, u32 out, out·in f32 weights, out f32 biases
//! ```

use std::path::Path;

use super::layers::Padding;
use super::model::{Layer, Sequential};
use super::tensor::Tensor;
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"SHCNNCK\0";
const VERSION: u32 = 1;

pub fn encode(model: &Sequential<f32>) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    put_u32(&mut out, VERSION);
    put_u32(&mut out, model.n_classes as u32);
    put_u32(&mut out, model.input_shape.len() as u32);
    for &d in &model.input_shape {
        put_u32(&mut out, d as u32);
    }
    put_u32(&mut out, model.layers.len() as u32);
    for layer in &model.layers {
        match layer {
            Layer::Conv {
                kernels,
                bias,
                padding,
            } => {
                out.push(0);
                put_u32(&mut out, kernels.shape()[0] as u32);
                put_u32(&mut out, kernels.shape()[1] as u32);
                out.push(match padding {
                    Padding::Same => 0,
                    Padding::Valid => 1,
                });
                put_f32s(&mut out, kernels.data());
                put_f32s(&mut out, bias);
            }
            Layer::Relu => out.push(1),
            Layer::MaxPool => out.push(2),
            Layer::Dropout { rate } => {
                out.push(3);
                out.extend_from_slice(&rate.to_le_bytes());
            }
            Layer::Flatten => out.push(4),
            Layer::Dense {
                weights,
                bias,
                n_in,
            } => {
                out.push(5);
                put_u32(&mut out, *n_in as u32);
                put_u32(&mut out, bias.len() as u32);
                put_f32s(&mut out, weights);
                put_f32s(&mut out, bias);
            }
        }
    }
    out
}

pub fn decode(bytes: &[u8]) -> Result<Sequential<f32>> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err(Error::parse("checkpoint", "bad magic"));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::parse("checkpoint", format!("unsupported version {version}")));
    }
    let n_classes = r.u32()? as usize;
    let rank = r.u32()? as usize;
    let input_shape = (0..rank).map(|_| r.u32().map(|v| v as usize)).collect::<Result<Vec<_>>>()?;
    let n_layers = r.u32()? as usize;
    let mut layers = Vec::with_capacity(n_layers);
    for _ in 0..n_layers {
        let layer = match r.u8()? {
            0 => {
                let o = r.u32()? as usize;
                let c = r.u32()? as usize;
                let padding = match r.u8()? {
                    0 => Padding::Same,
                    1 => Padding::Valid,
                    p => return Err(Error::parse("checkpoint", format!("padding tag {p}"))),
                };
                let kernels = Tensor::new(vec![o, c, 3, 3], r.f32s(o * c * 9)?)?;
                let bias = r.f32s(o)?;
                Layer::Conv {
                    kernels,
                    bias,
                    padding,
                }
            }
            1 => Layer::Relu,
            2 => Layer::MaxPool,
            3 => {
                let rate = f64::from_le_bytes(r.take(8)?.try_into().expect("8 bytes"));
                Layer::Dropout { rate }
            }
            4 => Layer::Flatten,
            5 => {
                let n_in = r.u32()? as usize;
                let n_out = r.u32()? as usize;
                let weights = r.f32s(n_in * n_out)?;
                let bias = r.f32s(n_out)?;
                Layer::Dense {
                    weights,
                    bias,
                    n_in,
                }
            }
            t => return Err(Error::parse("checkpoint", format!("layer tag {t}"))),
        };
        layers.push(layer);
    }
    if r.pos != bytes.len() {
        return Err(Error::parse("checkpoint", "trailing bytes"));
    }
    Ok(Sequential {
        layers,
        input_shape,
        n_classes,
    })
}

pub fn save(model: &Sequential<f32>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode(model)).map_err(|e| Error::io(path, e))
}

pub fn load(path: impl AsRef<Path>) -> Result<Sequential<f32>> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::UntrainedModel(format!("no checkpoint at {}", path.display())),
        _ => Error::io(path, e),
    })?;
    decode(&bytes)
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_f32s(out: &mut Vec<u8>, vs: &[f32]) {
    for v in vs {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::parse("checkpoint", "truncated"))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f32>> {
        let raw = self.take(n.checked_mul(4).ok_or_else(|| Error::parse("checkpoint", "size overflow"))?)?;
        Ok(raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect())
    }
}
