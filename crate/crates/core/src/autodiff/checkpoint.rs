use std::io::{Read, Write};
use std::path::Path;

use serde_json::Value;

use super::{AdError, Real, Tensor};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"LNCRAFT\0";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Layout: magic, u32 version, u32 header length, header JSON, then every
/// tensor as little-endian f32 in order. The header gains a `param_shapes`
/// entry used to split the payload on load.
pub fn write_checkpoint<T: Real>(path: &Path, header: &Value, tensors: &[&Tensor<T>]) -> Result<(), AdError> {
    let mut header = header.clone();
    let shapes: Vec<Vec<usize>> = tensors.iter().map(|t| t.shape.clone()).collect();
    header["param_shapes"] = serde_json::to_value(shapes).unwrap();
    let json = serde_json::to_vec(&header).unwrap();
    let mut buf = Vec::with_capacity(16 + json.len() + 4 * tensors.iter().map(|t| t.len()).sum::<usize>());
    buf.extend_from_slice(CHECKPOINT_MAGIC);
    buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(json.len() as u32).to_le_bytes());
    buf.extend_from_slice(&json);
    for t in tensors {
        for v in &t.data {
            buf.extend_from_slice(&(v.f64() as f32).to_le_bytes());
        }
    }
    let tmp = path.with_extension("tmp");
    let io = |e: std::io::Error| AdError::Io(format!("{}: {e}", path.display()));
    let mut f = std::fs::File::create(&tmp).map_err(io)?;
    f.write_all(&buf).map_err(io)?;
    f.sync_all().map_err(io)?;
    std::fs::rename(&tmp, path).map_err(io)
}

pub fn read_checkpoint(path: &Path) -> Result<(Value, Vec<Tensor<f32>>), AdError> {
    let mut bytes = Vec::new();
    std::fs::File::open(path).and_then(|mut f| f.read_to_end(&mut bytes)).map_err(|e| AdError::Io(format!("{}: {e}", path.display())))?;
    let bad = |m: &str| AdError::Format(format!("{}: {m}", path.display()));
    if bytes.len() < 16 || &bytes[..8] != CHECKPOINT_MAGIC {
        return Err(bad("not a checkpoint file"));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != CHECKPOINT_VERSION {
        return Err(bad(&format!("unsupported version {version}")));
    }
    let len = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
    let json = bytes.get(16..16 + len).ok_or_else(|| bad("truncated header"))?;
    let header: Value = serde_json::from_slice(json).map_err(|e| bad(&e.to_string()))?;
    let shapes: Vec<Vec<usize>> = serde_json::from_value(header["param_shapes"].clone()).map_err(|_| bad("missing param_shapes"))?;
    let mut pos = 16 + len;
    let mut tensors = Vec::with_capacity(shapes.len());
    for shape in shapes {
        let n: usize = shape.iter().product();
        let raw = bytes.get(pos..pos + 4 * n).ok_or_else(|| bad("truncated payload"))?;
        let data = raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
        tensors.push(Tensor { shape, data });
        pos += 4 * n;
    }
    if pos != bytes.len() {
        return Err(bad("trailing bytes"));
    }
    Ok((header, tensors))
}
