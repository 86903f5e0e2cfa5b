//! PNG reading and writing.
//!
//! Samples map to `[0, 1]` by dividing by `2^bits − 1`. Writing inverts that
//! with round-half-away-from-zero, so an 8-bit file survives a read/write
//! cycle byte for byte. Palette and sub-byte images are expanded to 8 bits on
//! read.

use std::fs;
use std::io::Cursor;
use std::path::Path;

use png::{ColorType, Transformations};
use sadm_core::{ImageTensor, Shape};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BitDepth {
    #[default]
    Eight,
    Sixteen,
}

impl BitDepth {
    pub fn max_value(self) -> f64 {
        match self {
            Self::Eight => 255.0,
            Self::Sixteen => 65535.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecodedPng {
    pub image: ImageTensor,
    pub bit_depth: BitDepth,
}

pub fn decode_png(bytes: &[u8]) -> Result<DecodedPng> {
    let mut decoder = png::Decoder::new(Cursor::new(bytes));
    decoder.set_transformations(Transformations::EXPAND);
    let mut reader = decoder.read_info()?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| Error::UnsupportedPng("image too large".into()))?;
    let mut buf = vec![0; size];
    let info = reader.next_frame(&mut buf)?;
    buf.truncate(info.buffer_size());

    let channels = match info.color_type {
        ColorType::Grayscale => 1,
        ColorType::GrayscaleAlpha => 2,
        ColorType::Rgb => 3,
        ColorType::Rgba => 4,
        ColorType::Indexed => return Err(Error::UnsupportedPng("unexpanded palette".into())),
    };
    let (bit_depth, data): (_, Vec<f64>) = match info.bit_depth {
        png::BitDepth::Eight => (BitDepth::Eight, buf.iter().map(|&v| f64::from(v) / 255.0).collect()),
        png::BitDepth::Sixteen => (
            BitDepth::Sixteen,
            buf.chunks_exact(2)
                .map(|b| f64::from(u16::from_be_bytes([b[0], b[1]])) / 65535.0)
                .collect(),
        ),
        other => return Err(Error::UnsupportedPng(format!("bit depth {other:?} after expansion"))),
    };
    let shape = Shape::new(info.height as usize, info.width as usize, channels);
    Ok(DecodedPng {
        image: ImageTensor::from_vec(shape, data)?,
        bit_depth,
    })
}

/// Encodes 1 to 4 channels as gray, gray+alpha, RGB or RGBA. Every sample
/// must already lie in `[0, 1]`.
pub fn encode_png(img: &ImageTensor, depth: BitDepth) -> Result<Vec<u8>> {
    let color = match img.channels() {
        1 => ColorType::Grayscale,
        2 => ColorType::GrayscaleAlpha,
        3 => ColorType::Rgb,
        4 => ColorType::Rgba,
        n => return Err(Error::UnsupportedPng(format!("{n} channels"))),
    };
    if let Some((index, &value)) = img.data().iter().enumerate().find(|(_, v)| !(0.0..=1.0).contains(*v)) {
        return Err(Error::OutOfRange { index, value });
    }
    let max = depth.max_value();
    // f64::round rounds half away from zero.
    let samples: Vec<u8> = match depth {
        BitDepth::Eight => img.data().iter().map(|v| (v * max).round() as u8).collect(),
        BitDepth::Sixteen => img
            .data()
            .iter()
            .flat_map(|v| ((v * max).round() as u16).to_be_bytes())
            .collect(),
    };

    let mut out = Vec::new();
    let mut encoder = png::Encoder::new(&mut out, img.width() as u32, img.height() as u32);
    encoder.set_color(color);
    encoder.set_depth(match depth {
        BitDepth::Eight => png::BitDepth::Eight,
        BitDepth::Sixteen => png::BitDepth::Sixteen,
    });
    let mut writer = encoder.write_header()?;
    writer.write_image_data(&samples)?;
    writer.finish()?;
    Ok(out)
}

pub fn read_png(path: impl AsRef<Path>) -> Result<DecodedPng> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(Error::io(path))?;
    decode_png(&bytes)
}

pub fn write_png(path: impl AsRef<Path>, img: &ImageTensor, depth: BitDepth) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_png(img, depth)?).map_err(Error::io(path))
}
