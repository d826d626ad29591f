//! 8-bit grayscale PNG reading and writing.
//!
//! Palette and low-bit images are expanded, 16-bit samples are scaled by
//! 1/257 with rounding, color is reduced with Rec. 601 luma weights and alpha
//! is ignored.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use png::{BitDepth, ColorType, Transformations};
use sfmim_core::{FloatField, GrayImage};

use crate::{Error, Result};

fn luma(r: u16, g: u16, b: u16) -> u16 {
    (0.299 * r as f64 + 0.587 * g as f64 + 0.114 * b as f64).round() as u16
}

pub fn load_png(path: &Path) -> Result<GrayImage> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let malformed = |e: png::DecodingError| Error::MalformedPng {
        path: path.to_path_buf(),
        reason: e.to_string(),
    };
    let mut decoder = png::Decoder::new(BufReader::new(file));
    decoder.set_transformations(Transformations::EXPAND);
    let mut reader = decoder.read_info().map_err(malformed)?;
    let size = reader.output_buffer_size().ok_or_else(|| Error::UnsupportedPng {
        path: path.to_path_buf(),
        reason: "image too large".into(),
    })?;
    let mut buf = vec![0u8; size];
    let info = reader.next_frame(&mut buf).map_err(malformed)?;
    let (w, h) = (info.width as usize, info.height as usize);
    let channels = match info.color_type {
        ColorType::Grayscale => 1,
        ColorType::GrayscaleAlpha => 2,
        ColorType::Rgb => 3,
        ColorType::Rgba => 4,
        ColorType::Indexed => {
            return Err(Error::UnsupportedPng {
                path: path.to_path_buf(),
                reason: "palette survived expansion".into(),
            })
        }
    };
    let wide = match info.bit_depth {
        BitDepth::Eight => false,
        BitDepth::Sixteen => true,
        other => {
            return Err(Error::UnsupportedPng {
                path: path.to_path_buf(),
                reason: format!("bit depth {other:?}"),
            })
        }
    };
    let sample = |row: &[u8], i: usize| -> u16 {
        if wide {
            let v = u16::from_be_bytes([row[2 * i], row[2 * i + 1]]);
            (v as f64 / 257.0).round() as u16
        } else {
            row[i] as u16
        }
    };
    let mut data = Vec::with_capacity(w * h);
    for row in buf[..h * info.line_size].chunks(info.line_size) {
        for x in 0..w {
            let base = x * channels;
            let v = if channels >= 3 {
                luma(sample(row, base), sample(row, base + 1), sample(row, base + 2))
            } else {
                sample(row, base)
            };
            data.push(v.min(255) as u8);
        }
    }
    Ok(GrayImage::new(h, w, data)?)
}

pub fn save_png(path: &Path, img: &GrayImage) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut enc = png::Encoder::new(BufWriter::new(file), img.width() as u32, img.height() as u32);
    enc.set_color(ColorType::Grayscale);
    enc.set_depth(BitDepth::Eight);
    let fail = |e: png::EncodingError| Error::Io {
        path: path.to_path_buf(),
        source: std::io::Error::other(e.to_string()),
    };
    let mut writer = enc.write_header().map_err(fail)?;
    writer.write_image_data(img.data()).map_err(fail)?;
    writer.finish().map_err(fail)
}

/// Loads a PNG as a `[0, 1]` field.
pub fn load_field(path: &Path) -> Result<FloatField> {
    Ok(sfmim_core::field::normalize(&load_png(path)?))
}

/// Writes a field, clamped to `[0, 1]` and rounded to 8 bits.
pub fn save_field(path: &Path, field: &FloatField) -> Result<()> {
    save_png(path, &field.to_gray())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a/b.png");
        let img = GrayImage::new(3, 4, (0..12).map(|v| v * 20).collect()).unwrap();
        save_png(&p, &img).unwrap();
        assert_eq!(load_png(&p).unwrap(), img);
    }

    #[test]
    fn error_kinds() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(load_png(&dir.path().join("none.png")), Err(Error::NotFound { .. })));
        let bad = dir.path().join("bad.png");
        std::fs::write(&bad, b"not a png").unwrap();
        assert!(matches!(load_png(&bad), Err(Error::MalformedPng { .. })));
    }

    fn write_raw(path: &Path, w: u32, h: u32, color: ColorType, depth: BitDepth, data: &[u8]) {
        let file = File::create(path).unwrap();
        let mut enc = png::Encoder::new(BufWriter::new(file), w, h);
        enc.set_color(color);
        enc.set_depth(depth);
        let mut writer = enc.write_header().unwrap();
        writer.write_image_data(data).unwrap();
    }

    #[test]
    fn rgb_and_sixteen_bit() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("rgb.png");
        write_raw(&p, 2, 1, ColorType::Rgb, BitDepth::Eight, &[255, 0, 0, 10, 20, 30]);
        let img = load_png(&p).unwrap();
        assert_eq!(img.data(), &[76, 18]);
        let p = dir.path().join("wide.png");
        write_raw(&p, 2, 1, ColorType::Grayscale, BitDepth::Sixteen, &[0xff, 0xff, 0x01, 0x01]);
        assert_eq!(load_png(&p).unwrap().data(), &[255, 1]);
        let p = dir.path().join("low.png");
        write_raw(&p, 8, 1, ColorType::Grayscale, BitDepth::One, &[0b1010_0000]);
        assert_eq!(load_png(&p).unwrap().data(), &[255, 0, 255, 0, 0, 0, 0, 0]);
    }
}
