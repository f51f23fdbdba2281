//! Single-channel PFM depth maps.
//!
//! Written as `Pf`, little-endian (scale `-1.0`), rows bottom to top as the
//! format requires. Invalid pixels are stored as `0.0`; on read, any
//! non-finite or non-positive sample is invalid.

use std::path::Path;

use geocache_core::cache::DepthMap;
use geocache_core::grid::{Grid, Mask};

use crate::error::{read, write, Error, Result};

pub fn encode_pfm(depth: &DepthMap) -> Vec<u8> {
    let (w, h) = depth.dims();
    let mut out = format!("Pf\n{w} {h}\n-1.0\n").into_bytes();
    out.reserve(4 * w * h);
    for y in (0..h).rev() {
        for x in 0..w {
            let v = depth.get(x, y).map_or(0.0, |d| d as f32);
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

/// Next whitespace-delimited header token and the offset after it.
fn token(bytes: &[u8], mut at: usize) -> Result<(&str, usize)> {
    while at < bytes.len() && bytes[at].is_ascii_whitespace() {
        at += 1;
    }
    let start = at;
    while at < bytes.len() && !bytes[at].is_ascii_whitespace() {
        at += 1;
    }
    if start == at {
        return Err(Error::format("PFM header is truncated"));
    }
    let tok = std::str::from_utf8(&bytes[start..at]).map_err(|_| Error::format("PFM header is not ASCII"))?;
    Ok((tok, at))
}

pub fn decode_pfm(bytes: &[u8]) -> Result<DepthMap> {
    let (magic, at) = token(bytes, 0)?;
    match magic {
        "Pf" => {}
        "PF" => return Err(Error::format("color PFM given where a depth map was expected")),
        _ => return Err(Error::format(format!("not a PFM file (magic {magic:?})"))),
    }
    let parse = |t: &str, what: &str| -> Result<usize> {
        t.parse().map_err(|_| Error::format(format!("bad PFM {what} {t:?}")))
    };
    let (w, at) = token(bytes, at)?;
    let w = parse(w, "width")?;
    let (h, at) = token(bytes, at)?;
    let h = parse(h, "height")?;
    let (scale, at) = token(bytes, at)?;
    let scale: f32 = scale.parse().map_err(|_| Error::format(format!("bad PFM scale {scale:?}")))?;
    if scale == 0.0 || !scale.is_finite() {
        return Err(Error::format("PFM scale must be non-zero"));
    }
    let little = scale < 0.0;
    // Exactly one whitespace byte separates the header from the samples.
    let data = bytes.get(at + 1..).unwrap_or(&[]);
    let n = w.checked_mul(h).ok_or_else(|| Error::format("PFM dimensions overflow"))?;
    if data.len() != 4 * n {
        return Err(Error::format(format!(
            "PFM payload is {} bytes, {w}x{h} needs {}",
            data.len(),
            4 * n
        )));
    }
    let mut values = Grid::filled(w, h, 0.0f64);
    let mut valid: Mask = Grid::filled(w, h, false);
    for (i, chunk) in data.chunks_exact(4).enumerate() {
        let raw = [chunk[0], chunk[1], chunk[2], chunk[3]];
        let v = if little {
            f32::from_le_bytes(raw)
        } else {
            f32::from_be_bytes(raw)
        };
        let (x, y) = (i % w, h - 1 - i / w);
        if v.is_finite() && v > 0.0 {
            *values.get_mut(x, y) = v as f64;
            *valid.get_mut(x, y) = true;
        }
    }
    Ok(DepthMap::new(values, valid)?)
}

pub fn read_pfm(path: &Path) -> Result<DepthMap> {
    decode_pfm(&read(path)?).map_err(|e| match e {
        Error::Format(m) => Error::Format(format!("{}: {m}", path.display())),
        e => e,
    })
}

pub fn write_pfm(path: &Path, depth: &DepthMap) -> Result<()> {
    write(path, &encode_pfm(depth))
}
