//! Pixel buffers: multi-channel rasters and single-channel planes.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const MIN_DIMENSION: u32 = 64;
pub const MAX_DIMENSION: u32 = 4096;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColorSpace {
    Srgb,
    Grayscale,
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum RasterError {
    #[error("unsupported channel count {0} (expected 1, 3 or 4)")]
    InvalidChannels(u8),
    #[error("pixel buffer holds {actual} bytes, expected {expected}")]
    BufferLength { expected: usize, actual: usize },
    #[error("image is {width}x{height}; each side must be within [{MIN_DIMENSION}, {MAX_DIMENSION}]")]
    DimensionOutOfRange { width: u32, height: u32 },
    #[error("plane must be at least 1x1")]
    EmptyPlane,
}

/// Row-major, interleaved 8-bit raster.
#[derive(Clone, PartialEq, Eq)]
pub struct RasterImage {
    width: u32,
    height: u32,
    channels: u8,
    pixels: Vec<u8>,
}

impl core::fmt::Debug for RasterImage {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("RasterImage")
            .field("width", &self.width)
            .field("height", &self.height)
            .field("channels", &self.channels)
            .finish_non_exhaustive()
    }
}

impl RasterImage {
    pub fn new(width: u32, height: u32, channels: u8, pixels: Vec<u8>) -> Result<Self, RasterError> {
        if !matches!(channels, 1 | 3 | 4) {
            return Err(RasterError::InvalidChannels(channels));
        }
        check_dimensions(width, height)?;
        let expected = width as usize * height as usize * channels as usize;
        if pixels.len() != expected {
            return Err(RasterError::BufferLength { expected, actual: pixels.len() });
        }
        Ok(RasterImage { width, height, channels, pixels })
    }

    pub fn filled(width: u32, height: u32, rgb: [u8; 3]) -> Result<Self, RasterError> {
        check_dimensions(width, height)?;
        let n = width as usize * height as usize;
        let mut pixels = Vec::with_capacity(n * 3);
        for _ in 0..n {
            pixels.extend_from_slice(&rgb);
        }
        Self::new(width, height, 3, pixels)
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn channels(&self) -> u8 {
        self.channels
    }

    pub fn color_space(&self) -> ColorSpace {
        if self.channels == 1 {
            ColorSpace::Grayscale
        } else {
            ColorSpace::Srgb
        }
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn into_pixels(self) -> Vec<u8> {
        self.pixels
    }

    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }

    pub fn pixel(&self, x: u32, y: u32) -> &[u8] {
        let c = self.channels as usize;
        let i = (y as usize * self.width as usize + x as usize) * c;
        &self.pixels[i..i + c]
    }

    /// Integer Rec.601 luma, one byte per pixel.
    pub fn luma(&self) -> GrayPlane {
        let data = match self.channels {
            1 => self.pixels.clone(),
            c => self.pixels.chunks_exact(c as usize).map(|p| luma(p[0], p[1], p[2])).collect(),
        };
        GrayPlane { width: self.width, height: self.height, data }
    }

    /// Converts between 1, 3 and 4 channel layouts. Alpha is dropped going
    /// down and set opaque going up.
    pub fn to_channels(&self, channels: u8) -> Result<RasterImage, RasterError> {
        if channels == self.channels {
            return Ok(self.clone());
        }
        let src = self.channels as usize;
        let mut out = Vec::with_capacity(self.pixel_count() * channels as usize);
        for p in self.pixels.chunks_exact(src) {
            let rgb = if src == 1 { [p[0]; 3] } else { [p[0], p[1], p[2]] };
            match channels {
                1 => out.push(luma(rgb[0], rgb[1], rgb[2])),
                3 => out.extend_from_slice(&rgb),
                4 => {
                    out.extend_from_slice(&rgb);
                    out.push(255);
                }
                other => return Err(RasterError::InvalidChannels(other)),
            }
        }
        RasterImage::new(self.width, self.height, channels, out)
    }

    pub fn flip_horizontal(&self) -> RasterImage {
        let c = self.channels as usize;
        let row = self.width as usize * c;
        let mut out = Vec::with_capacity(self.pixels.len());
        for line in self.pixels.chunks_exact(row) {
            for px in line.chunks_exact(c).rev() {
                out.extend_from_slice(px);
            }
        }
        RasterImage { pixels: out, ..*self }
    }
}

fn check_dimensions(width: u32, height: u32) -> Result<(), RasterError> {
    let ok = |d: u32| (MIN_DIMENSION..=MAX_DIMENSION).contains(&d);
    if ok(width) && ok(height) {
        Ok(())
    } else {
        Err(RasterError::DimensionOutOfRange { width, height })
    }
}

pub fn luma(r: u8, g: u8, b: u8) -> u8 {
    ((299 * r as u32 + 587 * g as u32 + 114 * b as u32 + 500) / 1000) as u8
}

/// Single-channel 8-bit plane with no range constraints beyond 1x1.
#[derive(Clone, PartialEq, Eq)]
pub struct GrayPlane {
    width: u32,
    height: u32,
    data: Vec<u8>,
}

impl core::fmt::Debug for GrayPlane {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("GrayPlane").field("width", &self.width).field("height", &self.height).finish_non_exhaustive()
    }
}

impl GrayPlane {
    pub fn new(width: u32, height: u32, data: Vec<u8>) -> Result<Self, RasterError> {
        if width == 0 || height == 0 {
            return Err(RasterError::EmptyPlane);
        }
        let expected = width as usize * height as usize;
        if data.len() != expected {
            return Err(RasterError::BufferLength { expected, actual: data.len() });
        }
        Ok(GrayPlane { width, height, data })
    }

    pub fn filled(width: u32, height: u32, value: u8) -> Result<Self, RasterError> {
        Self::new(width, height, alloc::vec![value; width as usize * height as usize])
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [u8] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    pub fn get(&self, x: u32, y: u32) -> u8 {
        self.data[y as usize * self.width as usize + x as usize]
    }

    pub fn max_value(&self) -> u8 {
        self.data.iter().copied().max().unwrap_or(0)
    }

    pub fn flip_horizontal(&self) -> GrayPlane {
        let w = self.width as usize;
        let mut data = Vec::with_capacity(self.data.len());
        for line in self.data.chunks_exact(w) {
            data.extend(line.iter().rev());
        }
        GrayPlane { width: self.width, height: self.height, data }
    }

    /// Bilinear resample with pixel-centre alignment, in exact integer
    /// arithmetic so results are identical on every platform.
    pub fn resize_bilinear(&self, width: u32, height: u32) -> Result<GrayPlane, RasterError> {
        if width == 0 || height == 0 {
            return Err(RasterError::EmptyPlane);
        }
        if width == self.width && height == self.height {
            return Ok(self.clone());
        }
        let xs = sample_positions(self.width, width);
        let ys = sample_positions(self.height, height);
        let den = 4 * width as u64 * height as u64;
        let sw = self.width as usize;
        let mut data = Vec::with_capacity(width as usize * height as usize);
        for &(y0, y1, fy, dy) in &ys {
            for &(x0, x1, fx, dx) in &xs {
                let p = |x: usize, y: usize| self.data[y * sw + x] as u64;
                let acc = p(x0, y0) * (dx - fx) * (dy - fy) + p(x1, y0) * fx * (dy - fy) + p(x0, y1) * (dx - fx) * fy + p(x1, y1) * fx * fy;
                data.push(((acc + den / 2) / den) as u8);
            }
        }
        GrayPlane::new(width, height, data)
    }

    /// Rescales so the largest value becomes 255. All-zero planes are unchanged.
    pub fn stretch_to_full_range(&self) -> GrayPlane {
        let max = self.max_value() as u32;
        if max == 0 || max == 255 {
            return self.clone();
        }
        let data = self.data.iter().map(|&v| ((v as u32 * 255 + max / 2) / max) as u8).collect();
        GrayPlane { width: self.width, height: self.height, data }
    }
}

/// For each destination index: (left source, right source, fraction numerator, denominator).
fn sample_positions(src: u32, dst: u32) -> Vec<(usize, usize, u64, u64)> {
    let den = 2 * dst as i64;
    let last = src as i64 - 1;
    (0..dst as i64)
        .map(|d| {
            let num = (2 * d + 1) * src as i64 - dst as i64;
            let (mut i0, mut frac) = if num < 0 { (0, 0) } else { (num.div_euclid(den), num.rem_euclid(den)) };
            if i0 >= last {
                i0 = last;
                frac = 0;
            }
            let i1 = (i0 + 1).min(last);
            (i0 as usize, i1 as usize, frac as u64, den as u64)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn rejects_bad_buffers() {
        assert_eq!(RasterImage::new(64, 64, 3, vec![0; 10]), Err(RasterError::BufferLength { expected: 64 * 64 * 3, actual: 10 }));
        assert_eq!(RasterImage::new(64, 64, 2, vec![]), Err(RasterError::InvalidChannels(2)));
        assert!(matches!(RasterImage::new(32, 64, 1, vec![0; 32 * 64]), Err(RasterError::DimensionOutOfRange { .. })));
        assert!(RasterImage::new(4097, 64, 1, vec![0; 4097 * 64]).is_err());
    }

    #[test]
    fn color_space_follows_channels() {
        assert_eq!(RasterImage::new(64, 64, 1, vec![0; 4096]).unwrap().color_space(), ColorSpace::Grayscale);
        assert_eq!(RasterImage::filled(64, 64, [1, 2, 3]).unwrap().color_space(), ColorSpace::Srgb);
    }

    #[test]
    fn luma_of_primaries() {
        assert_eq!(luma(255, 255, 255), 255);
        assert_eq!(luma(0, 0, 0), 0);
        assert_eq!(luma(255, 0, 0), 76);
    }

    #[test]
    fn channel_round_trip_keeps_rgb() {
        let img = RasterImage::filled(64, 64, [10, 20, 30]).unwrap();
        let rgba = img.to_channels(4).unwrap();
        assert_eq!(rgba.pixel(3, 3), &[10, 20, 30, 255]);
        assert_eq!(rgba.to_channels(3).unwrap(), img);
    }

    #[test]
    fn resize_identity_and_constant() {
        let plane = GrayPlane::new(3, 2, vec![0, 10, 20, 30, 40, 50]).unwrap();
        assert_eq!(plane.resize_bilinear(3, 2).unwrap(), plane);
        let flat = GrayPlane::filled(7, 5, 77).unwrap();
        assert!(flat.resize_bilinear(20, 13).unwrap().data().iter().all(|&v| v == 77));
    }

    #[test]
    fn resize_upsamples_linearly() {
        // 2 -> 4: centres map to -0.25, 0.25, 0.75, 1.25 → clamp, 25%, 75%, clamp
        let plane = GrayPlane::new(2, 1, vec![0, 200]).unwrap();
        assert_eq!(plane.resize_bilinear(4, 1).unwrap().data(), &[0, 50, 150, 200]);
    }

    #[test]
    fn stretch_maps_max_to_255() {
        let plane = GrayPlane::new(3, 1, vec![0, 50, 100]).unwrap();
        assert_eq!(plane.stretch_to_full_range().data(), &[0, 128, 255]);
    }
}
