//! PNG encoding and decoding of rasters and single-channel planes.

use std::io::Cursor;

use atelier_core::{GrayPlane, RasterImage};
use image::codecs::png::PngEncoder;
use image::{ExtendedColorType, ImageEncoder};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CodecError {
    #[error("cannot decode image: {0}")]
    Decode(String),
    #[error("cannot encode image: {0}")]
    Encode(String),
    #[error("decoded image has an invalid shape: {0}")]
    Shape(String),
}

fn encode(width: u32, height: u32, color: ExtendedColorType, data: &[u8]) -> Result<Vec<u8>, CodecError> {
    let mut out = Vec::new();
    PngEncoder::new(&mut out).write_image(data, width, height, color).map_err(|e| CodecError::Encode(e.to_string()))?;
    Ok(out)
}

pub fn encode_png(image: &RasterImage) -> Result<Vec<u8>, CodecError> {
    let color = match image.channels() {
        1 => ExtendedColorType::L8,
        3 => ExtendedColorType::Rgb8,
        _ => ExtendedColorType::Rgba8,
    };
    encode(image.width(), image.height(), color, image.pixels())
}

/// Single-channel 8-bit PNG, the on-disk form of edge maps and masks.
pub fn encode_gray_png(plane: &GrayPlane) -> Result<Vec<u8>, CodecError> {
    encode(plane.width(), plane.height(), ExtendedColorType::L8, plane.data())
}

fn decode_dynamic(bytes: &[u8]) -> Result<image::DynamicImage, CodecError> {
    image::ImageReader::new(Cursor::new(bytes))
        .with_guessed_format()
        .map_err(|e| CodecError::Decode(e.to_string()))?
        .decode()
        .map_err(|e| CodecError::Decode(e.to_string()))
}

/// Decodes to a single channel; colour input is converted to luma.
pub fn decode_gray(bytes: &[u8]) -> Result<GrayPlane, CodecError> {
    let img = decode_dynamic(bytes)?.into_luma8();
    let (w, h) = img.dimensions();
    GrayPlane::new(w, h, img.into_raw()).map_err(|e| CodecError::Shape(e.to_string()))
}

/// Decodes a stored raster, keeping grayscale, RGB or RGBA layout.
pub fn decode_raster(bytes: &[u8]) -> Result<RasterImage, CodecError> {
    let img = decode_dynamic(bytes)?;
    let (w, h) = (img.width(), img.height());
    let (channels, data) = match img.color().channel_count() {
        1 | 2 if !img.color().has_alpha() => (1, img.into_luma8().into_raw()),
        _ if img.color().has_alpha() => (4, img.into_rgba8().into_raw()),
        _ => (3, img.into_rgb8().into_raw()),
    };
    RasterImage::new(w, h, channels, data).map_err(|e| CodecError::Shape(e.to_string()))
}
