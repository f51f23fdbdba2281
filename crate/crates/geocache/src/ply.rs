//! Binary little-endian PLY point clouds.
//!
//! Written with `x y z` (float), `red green blue` (uchar) and the source
//! pixel `u v` (float). The reader accepts any scalar property types and
//! order for the `vertex` element; `u v` are optional and colors required.

use std::path::Path;

use geocache_core::cache::PointCloud;
use geocache_core::geometry::Vec3;

use crate::error::{read, write, Error, Result};

pub fn color_to_u8(c: f32) -> u8 {
    (c.clamp(0.0, 1.0) * 255.0).round() as u8
}

pub fn encode_ply(cloud: &PointCloud) -> Vec<u8> {
    let header = format!(
        "ply\nformat binary_little_endian 1.0\nelement vertex {}\n\
         property float x\nproperty float y\nproperty float z\n\
         property uchar red\nproperty uchar green\nproperty uchar blue\n\
         property float u\nproperty float v\nend_header\n",
        cloud.len()
    );
    let mut out = header.into_bytes();
    out.reserve(23 * cloud.len());
    for i in 0..cloud.len() {
        let p = cloud.positions[i];
        for v in [p.x, p.y, p.z] {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
        out.extend(cloud.colors[i].map(color_to_u8));
        for v in cloud.source_pixels[i] {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

#[derive(Debug, Clone, Copy)]
enum Scalar {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl Scalar {
    fn parse(name: &str) -> Option<Self> {
        Some(match name {
            "char" | "int8" => Scalar::I8,
            "uchar" | "uint8" => Scalar::U8,
            "short" | "int16" => Scalar::I16,
            "ushort" | "uint16" => Scalar::U16,
            "int" | "int32" => Scalar::I32,
            "uint" | "uint32" => Scalar::U32,
            "float" | "float32" => Scalar::F32,
            "double" | "float64" => Scalar::F64,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            Scalar::I8 | Scalar::U8 => 1,
            Scalar::I16 | Scalar::U16 => 2,
            Scalar::I32 | Scalar::U32 | Scalar::F32 => 4,
            Scalar::F64 => 8,
        }
    }

    fn read(self, b: &[u8]) -> f64 {
        match self {
            Scalar::I8 => b[0] as i8 as f64,
            Scalar::U8 => b[0] as f64,
            Scalar::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::I32 => i32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Scalar::U32 => u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Scalar::F32 => f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Scalar::F64 => f64::from_le_bytes(b[..8].try_into().expect("8 bytes")),
        }
    }

    /// Scale integer color channels to `[0, 1]`; floats pass through.
    fn unit(self, v: f64) -> f32 {
        match self {
            Scalar::U8 => (v / 255.0) as f32,
            Scalar::U16 => (v / 65535.0) as f32,
            _ => v as f32,
        }
    }
}

pub fn decode_ply(bytes: &[u8]) -> Result<PointCloud> {
    const END: &[u8] = b"end_header\n";
    let end = bytes
        .windows(END.len())
        .position(|w| w == END)
        .ok_or_else(|| Error::format("PLY header has no end_header line"))?;
    let header = std::str::from_utf8(&bytes[..end]).map_err(|_| Error::format("PLY header is not ASCII"))?;
    let body = &bytes[end + END.len()..];

    let mut lines = header.lines();
    if lines.next().map(str::trim) != Some("ply") {
        return Err(Error::format("not a PLY file"));
    }
    let mut count = None;
    let mut props: Vec<(String, Scalar)> = Vec::new();
    let mut in_vertex = false;
    for line in lines {
        let words: Vec<&str> = line.split_whitespace().collect();
        match words.as_slice() {
            ["format", "binary_little_endian", _] => {}
            ["format", other, _] => return Err(Error::format(format!("unsupported PLY format {other}"))),
            ["comment", ..] | ["obj_info", ..] | [] => {}
            ["element", "vertex", n] => {
                count = Some(n.parse::<usize>().map_err(|_| Error::format("bad PLY vertex count"))?);
                in_vertex = true;
            }
            ["element", name, n] => {
                if n.parse::<usize>().ok() != Some(0) {
                    return Err(Error::format(format!("unsupported PLY element {name}")));
                }
                in_vertex = false;
            }
            ["property", "list", ..] if in_vertex => {
                return Err(Error::format("list properties on vertices are not supported"))
            }
            ["property", ty, name] if in_vertex => {
                let ty = Scalar::parse(ty).ok_or_else(|| Error::format(format!("unknown PLY type {ty}")))?;
                props.push((name.to_string(), ty));
            }
            ["property", ..] => {}
            _ => return Err(Error::format(format!("unexpected PLY header line {line:?}"))),
        }
    }
    let count = count.ok_or_else(|| Error::format("PLY has no vertex element"))?;
    let mut offset = 0;
    let mut layout = Vec::with_capacity(props.len());
    for (name, ty) in &props {
        layout.push((name.as_str(), *ty, offset));
        offset += ty.size();
    }
    let stride = offset;
    let find = |n: &str| layout.iter().find(|l| l.0 == n).map(|l| (l.1, l.2));
    let need = |n: &str| find(n).ok_or_else(|| Error::format(format!("PLY vertices lack property {n}")));
    let (x, y, z) = (need("x")?, need("y")?, need("z")?);
    let (r, g, b) = (need("red")?, need("green")?, need("blue")?);
    let (u, v) = (find("u"), find("v"));
    if body.len() < stride * count {
        return Err(Error::format(format!(
            "PLY body holds {} bytes, {count} vertices need {}",
            body.len(),
            stride * count
        )));
    }

    let mut cloud = PointCloud::with_capacity(count);
    for rec in body.chunks_exact(stride.max(1)).take(count) {
        let get = |(ty, off): (Scalar, usize)| ty.read(&rec[off..]);
        let color = |(ty, off): (Scalar, usize)| ty.unit(ty.read(&rec[off..]));
        let pixel = match (u, v) {
            (Some(u), Some(v)) => [get(u) as f32, get(v) as f32],
            _ => [0.0, 0.0],
        };
        cloud.push(Vec3::new(get(x), get(y), get(z)), [color(r), color(g), color(b)], pixel);
    }
    cloud.validate()?;
    Ok(cloud)
}

pub fn read_ply(path: &Path) -> Result<PointCloud> {
    decode_ply(&read(path)?).map_err(|e| match e {
        Error::Format(m) => Error::Format(format!("{}: {m}", path.display())),
        e => e,
    })
}

pub fn write_ply(path: &Path, cloud: &PointCloud) -> Result<()> {
    write(path, &encode_ply(cloud))
}
