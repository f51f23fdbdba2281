//! `G3CL` tensor container: magic, four little-endian `u32` dimensions
//! `(L, C, h, w)`, then `f32` little-endian values in row-major order.
//!
//! In-layer weights are stored as `(1, F, 1, 2C + 1)`: one row per output
//! feature, the bias in the last column.

use std::path::Path;

use geocache_core::fusion::{InLayerWeights, LatentVideo};

use crate::error::{read, write, Error, Result};

pub const MAGIC: &[u8; 4] = b"G3CL";

pub fn encode_tensor(dims: [usize; 4], values: &[f32]) -> Result<Vec<u8>> {
    let n: usize = dims.iter().product();
    if n != values.len() {
        return Err(Error::format(format!("{dims:?} tensor needs {n} values, got {}", values.len())));
    }
    let mut out = Vec::with_capacity(20 + 4 * n);
    out.extend_from_slice(MAGIC);
    for d in dims {
        let d = u32::try_from(d).map_err(|_| Error::format("tensor dimension exceeds u32"))?;
        out.extend_from_slice(&d.to_le_bytes());
    }
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn decode_tensor(bytes: &[u8]) -> Result<([usize; 4], Vec<f32>)> {
    if bytes.len() < 20 || &bytes[..4] != MAGIC {
        return Err(Error::format("not a G3CL container"));
    }
    let mut dims = [0usize; 4];
    for (i, d) in dims.iter_mut().enumerate() {
        let at = 4 + 4 * i;
        *d = u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4 bytes")) as usize;
    }
    let n = dims
        .iter()
        .try_fold(1usize, |a, &d| a.checked_mul(d))
        .ok_or_else(|| Error::format("G3CL dimensions overflow"))?;
    let payload = &bytes[20..];
    if Some(payload.len()) != n.checked_mul(4) {
        return Err(Error::format(format!(
            "G3CL payload is {} bytes, {dims:?} needs {}",
            payload.len(),
            n.saturating_mul(4)
        )));
    }
    let values = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    Ok((dims, values))
}

pub fn encode_latent(z: &LatentVideo) -> Result<Vec<u8>> {
    encode_tensor(z.dims(), z.values())
}

/// The container does not record the patch factor; callers supply it.
pub fn decode_latent(bytes: &[u8], patch: usize) -> Result<LatentVideo> {
    let (dims, values) = decode_tensor(bytes)?;
    Ok(LatentVideo::new(dims, patch, values)?)
}

pub fn encode_weights(w: &InLayerWeights) -> Result<Vec<u8>> {
    let (i, f) = (w.inputs(), w.outputs());
    let mut values = Vec::with_capacity(f * (i + 1));
    for out in 0..f {
        values.extend_from_slice(&w.weights()[out * i..(out + 1) * i]);
        values.push(w.bias()[out]);
    }
    encode_tensor([1, f, 1, i + 1], &values)
}

pub fn decode_weights(bytes: &[u8]) -> Result<InLayerWeights> {
    let (dims, values) = decode_tensor(bytes)?;
    let [one, f, one_b, cols] = dims;
    if one != 1 || one_b != 1 || cols < 2 {
        return Err(Error::format(format!("{dims:?} is not an in-layer weight shape (1, F, 1, 2C+1)")));
    }
    let i = cols - 1;
    let mut weights = Vec::with_capacity(f * i);
    let mut bias = Vec::with_capacity(f);
    for row in values.chunks_exact(cols) {
        weights.extend_from_slice(&row[..i]);
        bias.push(row[i]);
    }
    Ok(InLayerWeights::new(i, f, weights, bias)?)
}

pub fn read_latent(path: &Path, patch: usize) -> Result<LatentVideo> {
    decode_latent(&read(path)?, patch)
}

pub fn write_latent(path: &Path, z: &LatentVideo) -> Result<()> {
    write(path, &encode_latent(z)?)
}

pub fn read_weights(path: &Path) -> Result<InLayerWeights> {
    decode_weights(&read(path)?)
}

pub fn write_weights(path: &Path, w: &InLayerWeights) -> Result<()> {
    write(path, &encode_weights(w)?)
}
