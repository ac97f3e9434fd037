//! Model checkpoints.
//!
//! ```text
//! magic        b"ATCK"
//! version      u32 LE (currently 1)
//! input size   u32 LE
//! layer count  u32 LE
//! layers       tag u8, then fields:
//!                0 conv      in u32, out u32, kernel u32, stride u32
//!                1 leaky     slope f32
//!                2 avgpool   window u32
//!                3 adaptive  out u32
//! param count  u32 LE
//! params       f32 LE, conv layers in order, weights then biases
//! ```

use std::path::Path;

use super::{LayerSpec, TinyPerceiver};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"ATCK";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn encode_checkpoint(model: &TinyPerceiver) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    let put = |out: &mut Vec<u8>, v: usize| out.extend_from_slice(&(v as u32).to_le_bytes());
    put(&mut out, CHECKPOINT_VERSION as usize);
    put(&mut out, model.input_size());
    let specs = model.layer_specs();
    put(&mut out, specs.len());
    for spec in specs {
        match spec {
            LayerSpec::Conv {
                in_ch,
                out_ch,
                kernel,
                stride,
            } => {
                out.push(0);
                for v in [in_ch, out_ch, kernel, stride] {
                    put(&mut out, v);
                }
            }
            LayerSpec::LeakyRelu { slope } => {
                out.push(1);
                out.extend_from_slice(&slope.to_le_bytes());
            }
            LayerSpec::AvgPool { window } => {
                out.push(2);
                put(&mut out, window);
            }
            LayerSpec::AdaptiveAvgPool { out: g } => {
                out.push(3);
                put(&mut out, g);
            }
        }
    }
    put(&mut out, model.num_params());
    for p in model.params() {
        out.extend_from_slice(&p.to_le_bytes());
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize, what: &str) -> Result<&[u8]> {
        let end = self.pos + n;
        if end > self.bytes.len() {
            return Err(Error::Format(format!(
                "checkpoint truncated reading {what}: need {end} bytes, file has {}",
                self.bytes.len()
            )));
        }
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()) as usize)
    }

    fn f32(&mut self, what: &str) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<TinyPerceiver> {
    let mut r = Reader { bytes, pos: 0 };
    let magic = r.take(4, "magic")?;
    if magic != CHECKPOINT_MAGIC {
        return Err(Error::Format(format!(
            "bad checkpoint magic {:?}",
            String::from_utf8_lossy(magic)
        )));
    }
    let version = r.u32("version")?;
    if version != CHECKPOINT_VERSION as usize {
        return Err(Error::Format(format!(
            "unsupported checkpoint version {version}"
        )));
    }
    let input_size = r.u32("input size")?;
    let n_layers = r.u32("layer count")?;
    let mut specs = Vec::new();
    for idx in 0..n_layers {
        let tag = r.take(1, "layer tag")?[0];
        let spec = match tag {
            0 => LayerSpec::Conv {
                in_ch: r.u32("conv")?,
                out_ch: r.u32("conv")?,
                kernel: r.u32("conv")?,
                stride: r.u32("conv")?,
            },
            1 => LayerSpec::LeakyRelu {
                slope: r.f32("slope")?,
            },
            2 => LayerSpec::AvgPool {
                window: r.u32("window")?,
            },
            3 => LayerSpec::AdaptiveAvgPool {
                out: r.u32("pool size")?,
            },
            other => {
                return Err(Error::Format(format!(
                    "layer {idx}: unknown layer tag {other}"
                )))
            }
        };
        specs.push(spec);
    }
    let n_params = r.u32("parameter count")?;
    let expected: usize = specs.iter().map(|s| s.param_count()).sum();
    if n_params != expected {
        return Err(Error::Format(format!(
            "layer manifest needs {expected} parameters, header declares {n_params}"
        )));
    }
    let raw = r.take(n_params * 4, "parameters")?;
    let params: Vec<f32> = raw
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    if params.iter().any(|p| !p.is_finite()) {
        return Err(Error::Format(
            "checkpoint contains non-finite parameters".into(),
        ));
    }
    if r.pos != bytes.len() {
        return Err(Error::Format(format!(
            "{} trailing bytes after parameters",
            bytes.len() - r.pos
        )));
    }
    TinyPerceiver::from_parts(input_size, &specs, params)
        .map_err(|e| Error::Format(format!("invalid layer manifest: {e}")))
}

pub fn save_checkpoint(model: &TinyPerceiver, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_checkpoint(model)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<TinyPerceiver> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::perceiver::tests::small_model;

    #[test]
    fn roundtrip_is_bit_exact() {
        for model in [TinyPerceiver::reference(4), small_model(4)] {
            let bytes = encode_checkpoint(&model);
            let back = decode_checkpoint(&bytes).unwrap();
            assert_eq!(back.layer_specs(), model.layer_specs());
            assert_eq!(back.input_size(), model.input_size());
            assert!(back
                .params()
                .iter()
                .zip(model.params())
                .all(|(a, b)| a.to_bits() == b.to_bits()));
            assert_eq!(encode_checkpoint(&back), bytes);
        }
    }

    #[test]
    fn corrupt_headers_are_rejected() {
        let good = encode_checkpoint(&small_model(1));

        let mut bad = good.clone();
        bad[0] = b'X';
        assert_eq!(decode_checkpoint(&bad).unwrap_err().code(), "format");

        let mut bad = good.clone();
        bad[4..8].copy_from_slice(&7u32.to_le_bytes());
        assert!(decode_checkpoint(&bad)
            .unwrap_err()
            .to_string()
            .contains("version 7"));

        let mut bad = good.clone();
        bad[16] = 9; // first layer tag
        assert_eq!(decode_checkpoint(&bad).unwrap_err().code(), "format");

        assert_eq!(
            decode_checkpoint(&good[..good.len() - 3])
                .unwrap_err()
                .code(),
            "format"
        );
        assert_eq!(decode_checkpoint(&good[..10]).unwrap_err().code(), "format");

        let mut bad = good.clone();
        bad.push(0);
        assert_eq!(decode_checkpoint(&bad).unwrap_err().code(), "format");

        let mut bad = good;
        let n = bad.len();
        bad[n - 4..].copy_from_slice(&f32::INFINITY.to_le_bytes());
        assert_eq!(decode_checkpoint(&bad).unwrap_err().code(), "format");
    }

    #[test]
    fn file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.ckpt");
        let model = small_model(2);
        save_checkpoint(&model, &p).unwrap();
        assert_eq!(load_checkpoint(&p).unwrap(), model);
    }
}
