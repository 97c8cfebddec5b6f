//! Edge extraction from drafts.
//!
//! An [`EdgeMap`] is always bright-on-dark: 0 means no edge, 255 the
//! strongest edge in the map. Colour is discarded here, so anything the
//! colours carried has to be restated in the prompt.

use alloc::string::String;

use thiserror::Error;

use crate::raster::{GrayPlane, RasterError, RasterImage};

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum EdgeError {
    #[error("edge detector unavailable: {0}")]
    DetectorUnavailable(String),
    #[error("edge inference failed: {0}")]
    InferenceFailure(String),
    #[error(transparent)]
    Raster(#[from] RasterError),
}

/// Single-channel edge intensities, same size as the source image.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EdgeMap(GrayPlane);

impl EdgeMap {
    pub fn from_plane(plane: GrayPlane) -> Self {
        EdgeMap(plane)
    }

    pub fn plane(&self) -> &GrayPlane {
        &self.0
    }

    pub fn into_plane(self) -> GrayPlane {
        self.0
    }

    pub fn width(&self) -> u32 {
        self.0.width()
    }

    pub fn height(&self) -> u32 {
        self.0.height()
    }

    /// Binarizes: values at or above `level` become 255, the rest 0.
    pub fn threshold(&self, level: u8) -> EdgeMap {
        let mut plane = self.0.clone();
        for v in plane.data_mut() {
            *v = if *v >= level { 255 } else { 0 };
        }
        EdgeMap(plane)
    }

    /// Resamples to `width`×`height` and stretches back to the full range.
    pub fn resampled(&self, width: u32, height: u32) -> Result<EdgeMap, RasterError> {
        if width == self.width() && height == self.height() {
            return Ok(self.clone());
        }
        Ok(EdgeMap(self.0.resize_bilinear(width, height)?.stretch_to_full_range()))
    }
}

pub trait EdgeDetector: Send + Sync {
    fn name(&self) -> &str;

    fn detect(&self, image: &RasterImage) -> Result<EdgeMap, EdgeError>;
}

pub const GRADIENT_DETECTOR: &str = "gradient";

/// Sobel gradient magnitude on the luma plane, normalized so the strongest
/// response maps to 255. Borders replicate the outermost pixels, so a flat
/// region touching the frame produces no edge.
#[derive(Clone, Copy, Debug, Default)]
pub struct GradientDetector;

impl EdgeDetector for GradientDetector {
    fn name(&self) -> &str {
        GRADIENT_DETECTOR
    }

    fn detect(&self, image: &RasterImage) -> Result<EdgeMap, EdgeError> {
        let gray = image.luma();
        let w = gray.width() as i64;
        let h = gray.height() as i64;
        let at = |x: i64, y: i64| gray.get(x.clamp(0, w - 1) as u32, y.clamp(0, h - 1) as u32) as i64;

        let mut magnitudes = alloc::vec::Vec::with_capacity((w * h) as usize);
        for y in 0..h {
            for x in 0..w {
                let gx =
                    (at(x + 1, y - 1) + 2 * at(x + 1, y) + at(x + 1, y + 1)) - (at(x - 1, y - 1) + 2 * at(x - 1, y) + at(x - 1, y + 1));
                let gy =
                    (at(x - 1, y + 1) + 2 * at(x, y + 1) + at(x + 1, y + 1)) - (at(x - 1, y - 1) + 2 * at(x, y - 1) + at(x + 1, y - 1));
                magnitudes.push((gx * gx + gy * gy) as u64);
            }
        }

        let peak = magnitudes.iter().copied().max().unwrap_or(0);
        let data = if peak == 0 {
            alloc::vec![0u8; magnitudes.len()]
        } else {
            // floor(255 * sqrt(m / peak)) without leaving integers
            magnitudes.iter().map(|&m| (65_025 * m / peak).isqrt() as u8).collect()
        };
        Ok(EdgeMap(GrayPlane::new(gray.width(), gray.height(), data)?))
    }
}
