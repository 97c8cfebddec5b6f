//! Draft ingestion: decode, apply camera orientation, bound the size and
//! flatten to 8-bit RGB.

use std::io::Cursor;

use atelier_core::raster::{MAX_DIMENSION, MIN_DIMENSION};
use atelier_core::RasterImage;
use image::imageops::FilterType;
use image::{DynamicImage, ImageDecoder, ImageFormat, ImageReader};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("unsupported image format: {0}")]
    UnsupportedFormat(String),
    #[error("corrupt image: {0}")]
    CorruptImage(String),
    #[error("image is {width}x{height}; both sides must be at least {MIN_DIMENSION} px")]
    ImageTooSmall { width: u32, height: u32 },
}

const ACCEPTED_DECLARED: &[&str] = &["image/png", "image/jpeg", "image/jpg", "application/octet-stream"];

/// Target size after bounding the longest side to [`MAX_DIMENSION`]; the
/// other side is scaled proportionally and floored.
pub fn bounded_size(width: u32, height: u32) -> (u32, u32) {
    let longest = width.max(height);
    if longest <= MAX_DIMENSION {
        return (width, height);
    }
    let scale = |d: u32| ((d as u64 * MAX_DIMENSION as u64) / longest as u64) as u32;
    (scale(width), scale(height))
}

pub fn ingest_image(bytes: &[u8], declared_media_type: Option<&str>) -> Result<RasterImage, IngestError> {
    if let Some(declared) = declared_media_type.map(str::trim).filter(|d| !d.is_empty()) {
        let essence = declared.split(';').next().unwrap_or_default().trim().to_ascii_lowercase();
        if !ACCEPTED_DECLARED.contains(&essence.as_str()) {
            return Err(IngestError::UnsupportedFormat(declared.to_string()));
        }
    }
    let format = image::guess_format(bytes).map_err(|_| IngestError::UnsupportedFormat("unrecognized container".into()))?;
    if !matches!(format, ImageFormat::Png | ImageFormat::Jpeg) {
        return Err(IngestError::UnsupportedFormat(format!("{format:?}")));
    }

    let corrupt = |e: image::ImageError| IngestError::CorruptImage(e.to_string());
    let mut decoder = ImageReader::with_format(Cursor::new(bytes), format).into_decoder().map_err(corrupt)?;
    let orientation = decoder.orientation().map_err(corrupt)?;
    let mut img = DynamicImage::from_decoder(decoder).map_err(corrupt)?;
    img.apply_orientation(orientation);

    let too_small = |w: u32, h: u32| w < MIN_DIMENSION || h < MIN_DIMENSION;
    if too_small(img.width(), img.height()) {
        return Err(IngestError::ImageTooSmall { width: img.width(), height: img.height() });
    }
    let (w, h) = bounded_size(img.width(), img.height());
    if (w, h) != (img.width(), img.height()) {
        if too_small(w, h) {
            return Err(IngestError::ImageTooSmall { width: w, height: h });
        }
        img = img.resize_exact(w, h, FilterType::Triangle);
    }

    let pixels = if img.color().has_alpha() { flatten_over_white(img.into_rgba8().into_raw()) } else { img.into_rgb8().into_raw() };
    RasterImage::new(w, h, 3, pixels).map_err(|e| IngestError::CorruptImage(e.to_string()))
}

/// Composites RGBA over an opaque white page.
fn flatten_over_white(rgba: Vec<u8>) -> Vec<u8> {
    let mut out = Vec::with_capacity(rgba.len() / 4 * 3);
    for px in rgba.chunks_exact(4) {
        let a = px[3] as u32;
        for &c in &px[..3] {
            out.push(((c as u32 * a + 255 * (255 - a) + 127) / 255) as u8);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::encode_png;
    use image::codecs::jpeg::JpegEncoder;
    use image::{ExtendedColorType, ImageEncoder};

    fn png(width: u32, height: u32) -> Vec<u8> {
        let px: Vec<u8> = (0..width as usize * height as usize * 3).map(|i| (i % 256) as u8).collect();
        let mut out = Vec::new();
        image::codecs::png::PngEncoder::new(&mut out).write_image(&px, width, height, ExtendedColorType::Rgb8).unwrap();
        out
    }

    /// JPEG with an APP1 Exif segment carrying only an Orientation tag.
    fn jpeg_with_orientation(width: u32, height: u32, orientation: u16) -> Vec<u8> {
        let px = vec![128u8; (width * height * 3) as usize];
        let mut jpeg = Vec::new();
        JpegEncoder::new_with_quality(&mut jpeg, 80).write_image(&px, width, height, ExtendedColorType::Rgb8).unwrap();
        let mut exif = b"Exif\0\0".to_vec();
        exif.extend_from_slice(b"II*\0");
        exif.extend_from_slice(&8u32.to_le_bytes());
        exif.extend_from_slice(&1u16.to_le_bytes());
        exif.extend_from_slice(&0x0112u16.to_le_bytes());
        exif.extend_from_slice(&3u16.to_le_bytes());
        exif.extend_from_slice(&1u32.to_le_bytes());
        exif.extend_from_slice(&orientation.to_le_bytes());
        exif.extend_from_slice(&[0, 0]);
        exif.extend_from_slice(&0u32.to_le_bytes());
        let mut out = jpeg[..2].to_vec();
        out.extend_from_slice(&[0xFF, 0xE1]);
        out.extend_from_slice(&((exif.len() + 2) as u16).to_be_bytes());
        out.extend_from_slice(&exif);
        out.extend_from_slice(&jpeg[2..]);
        out
    }

    #[test]
    fn rotation_tag_swaps_dimensions() {
        let img = ingest_image(&jpeg_with_orientation(1024, 768, 6), Some("image/jpeg")).unwrap();
        assert_eq!((img.width(), img.height(), img.channels()), (768, 1024, 3));
        let upright = ingest_image(&jpeg_with_orientation(1024, 768, 1), None).unwrap();
        assert_eq!((upright.width(), upright.height()), (1024, 768));
    }

    #[test]
    fn oversized_input_is_bounded() {
        assert_eq!(bounded_size(5000, 2000), (4096, 1638));
        assert_eq!(bounded_size(2000, 5000), (1638, 4096));
        assert_eq!(bounded_size(4096, 10), (4096, 10));
        let img = ingest_image(&png(5000, 2000), Some("image/png")).unwrap();
        assert_eq!((img.width(), img.height()), (4096, 1638));
    }

    #[test]
    fn tiny_input_is_rejected() {
        assert!(matches!(ingest_image(&png(32, 32), None), Err(IngestError::ImageTooSmall { width: 32, height: 32 })));
        assert!(matches!(ingest_image(&png(8200, 100), None), Err(IngestError::ImageTooSmall { height: 49, .. })));
    }

    #[test]
    fn format_checks() {
        assert!(matches!(ingest_image(b"GIF89a....", None), Err(IngestError::UnsupportedFormat(_))));
        assert!(matches!(ingest_image(&png(64, 64), Some("image/gif")), Err(IngestError::UnsupportedFormat(_))));
        let mut truncated = png(128, 128);
        truncated.truncate(60);
        assert!(matches!(ingest_image(&truncated, None), Err(IngestError::CorruptImage(_))));
    }

    #[test]
    fn alpha_is_flattened_over_white() {
        let mut out = Vec::new();
        let px: Vec<u8> = [0u8, 0, 0, 0].repeat(64 * 64);
        image::codecs::png::PngEncoder::new(&mut out).write_image(&px, 64, 64, ExtendedColorType::Rgba8).unwrap();
        let img = ingest_image(&out, None).unwrap();
        assert!(img.pixels().iter().all(|&v| v == 255));
    }

    #[test]
    fn sixteen_bit_png_is_reduced() {
        let mut out = Vec::new();
        let px: Vec<u8> = [0xFFu8, 0xFF].repeat(64 * 64);
        image::codecs::png::PngEncoder::new(&mut out).write_image(&px, 64, 64, ExtendedColorType::L16).unwrap();
        let img = ingest_image(&out, None).unwrap();
        assert_eq!(img.channels(), 3);
        assert!(img.pixels().iter().all(|&v| v == 255));
    }

    #[test]
    fn lossless_reingest_is_stable() {
        let px: Vec<u8> = (0..300 * 200 * 3).map(|i| (i * 7 % 255) as u8).collect();
        let mut out = Vec::new();
        image::codecs::png::PngEncoder::new(&mut out).write_image(&px, 300, 200, ExtendedColorType::Rgb8).unwrap();
        let first = ingest_image(&out, None).unwrap();
        let again = ingest_image(&encode_png(&first).unwrap(), Some("image/png")).unwrap();
        assert_eq!(first, again);
    }
}
