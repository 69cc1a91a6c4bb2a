//! Minimal PNG encode/decode for 8-bit gray and RGB frames.

use std::fs;
use std::path::Path;

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PixelFormat {
    Gray8,
    Rgb8,
}

impl PixelFormat {
    fn channels(self) -> usize {
        match self {
            PixelFormat::Gray8 => 1,
            PixelFormat::Rgb8 => 3,
        }
    }
}

/// Encode with fixed settings so identical frames give identical bytes.
pub fn encode(width: usize, height: usize, format: PixelFormat, data: &[u8]) -> Result<Vec<u8>> {
    if data.len() != width * height * format.channels() {
        return Err(Error::Shape(format!(
            "{} bytes for a {width}x{height} frame with {} channels",
            data.len(),
            format.channels()
        )));
    }
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, width as u32, height as u32);
        enc.set_color(match format {
            PixelFormat::Gray8 => png::ColorType::Grayscale,
            PixelFormat::Rgb8 => png::ColorType::Rgb,
        });
        enc.set_depth(png::BitDepth::Eight);
        enc.set_compression(png::Compression::Balanced);
        enc.set_filter(png::Filter::NoFilter);
        let mut w = enc.write_header()?;
        w.write_image_data(data)?;
        w.finish()?;
    }
    Ok(out)
}

pub fn write(path: impl AsRef<Path>, width: usize, height: usize, format: PixelFormat, data: &[u8]) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode(width, height, format, data)?;
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Decoded frame: `(width, height, format, bytes)`.
pub fn decode(bytes: &[u8]) -> Result<(usize, usize, PixelFormat, Vec<u8>)> {
    let decoder = png::Decoder::new(std::io::Cursor::new(bytes));
    let mut reader = decoder.read_info()?;
    let mut buf = vec![0; reader.output_buffer_size().ok_or_else(|| Error::Format("png too large".into()))?];
    let info = reader.next_frame(&mut buf)?;
    buf.truncate(info.buffer_size());
    let format = match (info.color_type, info.bit_depth) {
        (png::ColorType::Grayscale, png::BitDepth::Eight) => PixelFormat::Gray8,
        (png::ColorType::Rgb, png::BitDepth::Eight) => PixelFormat::Rgb8,
        other => return Err(Error::Unsupported(format!("png layout {other:?}"))),
    };
    Ok((info.width as usize, info.height as usize, format, buf))
}
