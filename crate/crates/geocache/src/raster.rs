//! PNG images (8-bit RGB) and masks (1-bit grayscale).
//!
//! Colors are treated as already display-encoded: a channel value `c` in
//! `[0, 1]` is stored as `round(255 c)`.

use std::path::Path;

use geocache_core::grid::{Grid, Image, Mask};
use png::{BitDepth, ColorType, Transformations};

use crate::error::{read, write, Error, Result};
use crate::ply::color_to_u8;

fn encode(width: usize, height: usize, color: ColorType, depth: BitDepth, data: &[u8]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, width as u32, height as u32);
        enc.set_color(color);
        enc.set_depth(depth);
        let mut w = enc.write_header()?;
        w.write_image_data(data)?;
    }
    Ok(out)
}

pub fn encode_image_png(img: &Image) -> Result<Vec<u8>> {
    let data: Vec<u8> = img.as_slice().iter().flat_map(|c| c.map(color_to_u8)).collect();
    encode(img.width(), img.height(), ColorType::Rgb, BitDepth::Eight, &data)
}

pub fn encode_mask_png(mask: &Mask) -> Result<Vec<u8>> {
    let (w, h) = mask.dims();
    let row_bytes = w.div_ceil(8);
    let mut data = vec![0u8; row_bytes * h];
    for y in 0..h {
        for x in 0..w {
            if *mask.get(x, y) {
                data[y * row_bytes + x / 8] |= 0x80 >> (x % 8);
            }
        }
    }
    encode(w, h, ColorType::Grayscale, BitDepth::One, &data)
}

/// Decode to 8-bit samples: `(width, height, channels, bytes)`.
fn decode(bytes: &[u8]) -> Result<(usize, usize, usize, Vec<u8>)> {
    let mut dec = png::Decoder::new(std::io::Cursor::new(bytes));
    dec.set_transformations(Transformations::EXPAND | Transformations::STRIP_16);
    let mut reader = dec.read_info()?;
    let mut buf = vec![0; reader.output_buffer_size().ok_or_else(|| Error::format("PNG is too large"))?];
    let info = reader.next_frame(&mut buf)?;
    buf.truncate(info.buffer_size());
    let channels = match info.color_type {
        ColorType::Grayscale => 1,
        ColorType::GrayscaleAlpha => 2,
        ColorType::Rgb => 3,
        ColorType::Rgba => 4,
        ColorType::Indexed => return Err(Error::format("indexed PNG was not expanded")),
    };
    if info.bit_depth != BitDepth::Eight {
        return Err(Error::format("PNG did not expand to 8-bit samples"));
    }
    Ok((info.width as usize, info.height as usize, channels, buf))
}

pub fn decode_image_png(bytes: &[u8]) -> Result<Image> {
    let (w, h, ch, buf) = decode(bytes)?;
    let px = |i: usize, k: usize| buf[i * ch + if ch >= 3 { k } else { 0 }] as f32 / 255.0;
    Ok(Grid::from_fn(w, h, |x, y| {
        let i = y * w + x;
        [px(i, 0), px(i, 1), px(i, 2)]
    }))
}

/// Any non-zero gray (or red, for color files) sample is set.
pub fn decode_mask_png(bytes: &[u8]) -> Result<Mask> {
    let (w, h, ch, buf) = decode(bytes)?;
    Ok(Grid::from_fn(w, h, |x, y| buf[(y * w + x) * ch] != 0))
}

pub fn read_image(path: &Path) -> Result<Image> {
    decode_image_png(&read(path)?)
}

pub fn write_image(path: &Path, img: &Image) -> Result<()> {
    write(path, &encode_image_png(img)?)
}

pub fn read_mask(path: &Path) -> Result<Mask> {
    decode_mask_png(&read(path)?)
}

pub fn write_mask(path: &Path, mask: &Mask) -> Result<()> {
    write(path, &encode_mask_png(mask)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn image_round_trip_is_quantized() {
        let img: Image = Grid::from_fn(5, 3, |x, y| [x as f32 / 4.0, y as f32 / 2.0, 0.3]);
        let back = decode_image_png(&encode_image_png(&img).unwrap()).unwrap();
        assert_eq!(back.dims(), (5, 3));
        for (a, b) in img.as_slice().iter().zip(back.as_slice()) {
            for k in 0..3 {
                assert!((a[k] - b[k]).abs() <= 0.5 / 255.0 + 1e-6);
            }
        }
        assert_eq!(decode_image_png(&encode_image_png(&back).unwrap()).unwrap(), back);
    }

    #[test]
    fn mask_round_trip_is_exact() {
        let m: Mask = Grid::from_fn(11, 4, |x, y| (x * 3 + y) % 4 == 0);
        let bytes = encode_mask_png(&m).unwrap();
        assert_eq!(decode_mask_png(&bytes).unwrap(), m);
    }

    #[test]
    fn garbage_is_an_error() {
        assert!(decode_image_png(b"not a png").is_err());
    }
}
