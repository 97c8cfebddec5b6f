//! Binary inpainting masks and the strokes that author them.
//!
//! 255 marks pixels to regenerate, 0 marks pixels to keep. A stroke covers
//! every pixel centre within `radius` of its polyline, i.e. a disk swept
//! continuously along each segment, endpoints included. Rasterization works
//! row by row on exact integer spans, so there are no gaps at any point
//! spacing and no floating-point boundary effects.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::raster::{GrayPlane, RasterError, RasterImage};

pub const MASK_ON: u8 = 255;
pub const MASK_OFF: u8 = 0;
/// Anti-aliased input at or above this level counts as masked.
pub const MASK_THRESHOLD: u8 = 128;
pub const MAX_RADIUS: u32 = 4096;

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum MaskError {
    #[error("mask has no pixels to regenerate")]
    EmptyMask,
    #[error("stroke {stroke}: point ({x}, {y}) lies outside the {width}x{height} image")]
    OutOfBounds { stroke: usize, x: u32, y: u32, width: u32, height: u32 },
    #[error("stroke {stroke}: radius {radius} outside [1, {MAX_RADIUS}]")]
    InvalidRadius { stroke: usize, radius: u32 },
    #[error("stroke {stroke} has no points")]
    EmptyStroke { stroke: usize },
    #[error("mask contains values other than 0 and 255")]
    NotBinary,
    #[error(transparent)]
    Raster(#[from] RasterError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(from = "[u32; 2]", into = "[u32; 2]")]
pub struct StrokePoint {
    pub x: u32,
    pub y: u32,
}

impl StrokePoint {
    pub const fn new(x: u32, y: u32) -> Self {
        StrokePoint { x, y }
    }
}

impl From<[u32; 2]> for StrokePoint {
    fn from([x, y]: [u32; 2]) -> Self {
        StrokePoint { x, y }
    }
}

impl From<StrokePoint> for [u32; 2] {
    fn from(p: StrokePoint) -> Self {
        [p.x, p.y]
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrokeMode {
    #[default]
    Add,
    Erase,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stroke {
    pub points: Vec<StrokePoint>,
    pub radius: u32,
    #[serde(default)]
    pub mode: StrokeMode,
}

impl Stroke {
    pub fn add(points: Vec<StrokePoint>, radius: u32) -> Self {
        Stroke { points, radius, mode: StrokeMode::Add }
    }

    pub fn erase(points: Vec<StrokePoint>, radius: u32) -> Self {
        Stroke { points, radius, mode: StrokeMode::Erase }
    }

    /// Segments of the polyline; a single point is a zero-length segment.
    pub fn segments(&self) -> impl Iterator<Item = (StrokePoint, StrokePoint)> + '_ {
        let single = (self.points.len() == 1).then(|| (self.points[0], self.points[0]));
        single.into_iter().chain(self.points.windows(2).map(|w| (w[0], w[1])))
    }
}

/// Ordered strokes; later strokes overwrite earlier ones.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StrokeSet {
    pub strokes: Vec<Stroke>,
}

impl StrokeSet {
    pub fn new(strokes: Vec<Stroke>) -> Self {
        StrokeSet { strokes }
    }

    pub fn validate(&self, width: u32, height: u32) -> Result<(), MaskError> {
        for (i, stroke) in self.strokes.iter().enumerate() {
            if stroke.points.is_empty() {
                return Err(MaskError::EmptyStroke { stroke: i });
            }
            if !(1..=MAX_RADIUS).contains(&stroke.radius) {
                return Err(MaskError::InvalidRadius { stroke: i, radius: stroke.radius });
            }
            if let Some(p) = stroke.points.iter().find(|p| p.x >= width || p.y >= height) {
                return Err(MaskError::OutOfBounds { stroke: i, x: p.x, y: p.y, width, height });
            }
        }
        Ok(())
    }
}

/// Strictly binary single-channel mask.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MaskImage(GrayPlane);

impl MaskImage {
    pub fn new(plane: GrayPlane) -> Result<Self, MaskError> {
        if plane.data().iter().all(|&v| v == MASK_ON || v == MASK_OFF) {
            Ok(MaskImage(plane))
        } else {
            Err(MaskError::NotBinary)
        }
    }

    /// Binarizes anti-aliased input at [`MASK_THRESHOLD`].
    pub fn from_thresholded(mut plane: GrayPlane) -> Self {
        for v in plane.data_mut() {
            *v = if *v >= MASK_THRESHOLD { MASK_ON } else { MASK_OFF };
        }
        MaskImage(plane)
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

    pub fn is_masked(&self, x: u32, y: u32) -> bool {
        self.0.get(x, y) == MASK_ON
    }

    pub fn masked_count(&self) -> usize {
        self.0.data().iter().filter(|&&v| v == MASK_ON).count()
    }

    pub fn masked_fraction(&self) -> f64 {
        self.masked_count() as f64 / self.0.data().len() as f64
    }
}

/// Rasterizes strokes onto a `width`×`height` mask.
pub fn rasterize_mask(strokes: &StrokeSet, width: u32, height: u32) -> Result<MaskImage, MaskError> {
    strokes.validate(width, height)?;
    let mut plane = GrayPlane::filled(width, height, MASK_OFF)?;
    let w = width as usize;
    for stroke in &strokes.strokes {
        let value = match stroke.mode {
            StrokeMode::Add => MASK_ON,
            StrokeMode::Erase => MASK_OFF,
        };
        let r = stroke.radius as i64;
        for (a, b) in stroke.segments() {
            let (a, b) = ((a.x as i64, a.y as i64), (b.x as i64, b.y as i64));
            let y_lo = (a.1.min(b.1) - r).max(0);
            let y_hi = (a.1.max(b.1) + r).min(height as i64 - 1);
            for y in y_lo..=y_hi {
                if let Some((x0, x1)) = capsule_span(a, b, r, y) {
                    let (x0, x1) = (x0.max(0), x1.min(width as i64 - 1));
                    if x0 <= x1 {
                        let row = y as usize * w;
                        plane.data_mut()[row + x0 as usize..=row + x1 as usize].fill(value);
                    }
                }
            }
        }
    }
    let mask = MaskImage(plane);
    if mask.masked_count() == 0 {
        return Err(MaskError::EmptyMask);
    }
    Ok(mask)
}

type Span = (i64, i64);

/// Integer x-range of row `y` within distance `r` of segment a–b.
fn capsule_span(a: (i64, i64), b: (i64, i64), r: i64, y: i64) -> Option<Span> {
    let mut span = union(disk_span(a, r, y), disk_span(b, r, y));
    if a != b {
        span = union(span, slab_span(a, b, r, y));
    }
    span
}

fn union(p: Option<Span>, q: Option<Span>) -> Option<Span> {
    match (p, q) {
        (Some(p), Some(q)) => Some((p.0.min(q.0), p.1.max(q.1))),
        (p, None) => p,
        (None, q) => q,
    }
}

fn disk_span(c: (i64, i64), r: i64, y: i64) -> Option<Span> {
    let dy = y - c.1;
    let rem = r * r - dy * dy;
    if rem < 0 {
        return None;
    }
    let half = (rem as u64).isqrt() as i64;
    Some((c.0 - half, c.0 + half))
}

/// Points whose projection falls inside the segment and whose perpendicular
/// distance is at most r.
fn slab_span(a: (i64, i64), b: (i64, i64), r: i64, y: i64) -> Option<Span> {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    // |cross| <= r·|d|  ⇔  |cross| <= floor(sqrt(r²·|d|²)) for integer cross
    let reach = ((r * r) as u64 * len2 as u64).isqrt() as i64;
    let ry = y - a.1;
    // with X = x - a.x: 0 <= X·dx + ry·dy <= len2 and -reach <= X·dy - ry·dx <= reach
    let along = linear_range(dx, ry * dy, 0, len2)?;
    let across = linear_range(dy, -ry * dx, -reach, reach)?;
    let lo = along.0.max(across.0);
    let hi = along.1.min(across.1);
    (lo <= hi).then_some((lo + a.0, hi + a.0))
}

/// Integer X with lo <= k·X + c <= hi.
fn linear_range(k: i64, c: i64, lo: i64, hi: i64) -> Option<Span> {
    const UNBOUNDED: Span = (i64::MIN / 4, i64::MAX / 4);
    if k == 0 {
        return (lo <= c && c <= hi).then_some(UNBOUNDED);
    }
    let (from, to) = if k > 0 { (ceil_div(lo - c, k), floor_div(hi - c, k)) } else { (ceil_div(hi - c, k), floor_div(lo - c, k)) };
    (from <= to).then_some((from, to))
}

fn floor_div(a: i64, b: i64) -> i64 {
    let q = a / b;
    if a % b != 0 && ((a < 0) != (b < 0)) {
        q - 1
    } else {
        q
    }
}

fn ceil_div(a: i64, b: i64) -> i64 {
    -floor_div(-a, b)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskStatus {
    Ok,
    NotBinary,
    DimensionMismatch,
    Empty,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaskReport {
    pub status: MaskStatus,
    pub binary: bool,
    pub dimensions_match: bool,
    /// Fraction of pixels equal to 255.
    pub masked_fraction: f64,
}

impl MaskReport {
    pub fn is_ok(&self) -> bool {
        self.status == MaskStatus::Ok
    }
}

/// Checks a candidate mask plane against the image it will be applied to.
pub fn validate_mask(candidate: &GrayPlane, target: &RasterImage) -> MaskReport {
    let data = candidate.data();
    let binary = data.iter().all(|&v| v == MASK_ON || v == MASK_OFF);
    let dimensions_match = candidate.width() == target.width() && candidate.height() == target.height();
    let masked = data.iter().filter(|&&v| v == MASK_ON).count();
    let masked_fraction = masked as f64 / data.len() as f64;
    let status = if !binary {
        MaskStatus::NotBinary
    } else if !dimensions_match {
        MaskStatus::DimensionMismatch
    } else if masked == 0 {
        MaskStatus::Empty
    } else {
        MaskStatus::Ok
    };
    MaskReport { status, binary, dimensions_match, masked_fraction }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn pt(x: u32, y: u32) -> StrokePoint {
        StrokePoint::new(x, y)
    }

    #[test]
    fn single_point_is_a_disk() {
        let set = StrokeSet::new(vec![Stroke::add(vec![pt(10, 10)], 3)]);
        let mask = rasterize_mask(&set, 64, 64).unwrap();
        for y in 0..64i64 {
            for x in 0..64i64 {
                let inside = (x - 10).pow(2) + (y - 10).pow(2) <= 9;
                assert_eq!(mask.is_masked(x as u32, y as u32), inside, "({x},{y})");
            }
        }
        // 29 lattice points within radius 3
        assert_eq!(mask.masked_count(), 29);
    }

    #[test]
    fn erase_cancels_add() {
        let s = Stroke::add(vec![pt(5, 5), pt(40, 30)], 4);
        let mut e = s.clone();
        e.mode = StrokeMode::Erase;
        assert_eq!(rasterize_mask(&StrokeSet::new(vec![s, e]), 64, 64), Err(MaskError::EmptyMask));
    }

    #[test]
    fn later_strokes_win() {
        let add = Stroke::add(vec![pt(20, 20)], 5);
        let erase = Stroke::erase(vec![pt(20, 20)], 2);
        let a = rasterize_mask(&StrokeSet::new(vec![add.clone(), erase.clone()]), 64, 64).unwrap();
        assert!(!a.is_masked(20, 20));
        let b = rasterize_mask(&StrokeSet::new(vec![erase, add]), 64, 64).unwrap();
        assert!(b.is_masked(20, 20));
    }

    #[test]
    fn horizontal_segment_has_no_gaps() {
        let set = StrokeSet::new(vec![Stroke::add(vec![pt(2, 10), pt(60, 10)], 1)]);
        let mask = rasterize_mask(&set, 64, 64).unwrap();
        assert!((2..=60).all(|x| mask.is_masked(x, 10)));
        assert!(!mask.is_masked(1, 9));
        assert_eq!(mask.masked_count(), 59 * 3 + 2);
    }

    #[test]
    fn out_of_bounds_point() {
        let set = StrokeSet::new(vec![Stroke::add(vec![pt(64, 0)], 1)]);
        assert!(matches!(rasterize_mask(&set, 64, 64), Err(MaskError::OutOfBounds { stroke: 0, x: 64, .. })));
    }

    #[test]
    fn zero_radius_rejected() {
        let set = StrokeSet::new(vec![Stroke::add(vec![pt(1, 1)], 0)]);
        assert_eq!(rasterize_mask(&set, 8, 8), Err(MaskError::InvalidRadius { stroke: 0, radius: 0 }));
    }

    #[test]
    fn floor_and_ceil_division() {
        assert_eq!(floor_div(-7, 2), -4);
        assert_eq!(floor_div(7, -2), -4);
        assert_eq!(floor_div(-7, -2), 3);
        assert_eq!(ceil_div(-7, 2), -3);
        assert_eq!(ceil_div(7, 2), 4);
        assert_eq!(ceil_div(6, 3), 2);
    }

    #[test]
    fn report_quarter_masked() {
        let target = RasterImage::filled(64, 64, [0, 0, 0]).unwrap();
        let mut data = vec![0u8; 64 * 64];
        data[..1024].fill(255);
        let report = validate_mask(&GrayPlane::new(64, 64, data).unwrap(), &target);
        assert_eq!(report.status, MaskStatus::Ok);
        assert_eq!(report.masked_fraction, 0.25);
    }

    #[test]
    fn report_not_binary() {
        let target = RasterImage::filled(64, 64, [0, 0, 0]).unwrap();
        let mut data = vec![255u8; 64 * 64];
        data[7] = 128;
        let report = validate_mask(&GrayPlane::new(64, 64, data).unwrap(), &target);
        assert_eq!(report.status, MaskStatus::NotBinary);
        assert!(!report.binary);
    }

    #[test]
    fn report_dimension_mismatch() {
        let target = RasterImage::filled(256, 256, [0, 0, 0]).unwrap();
        let report = validate_mask(&GrayPlane::filled(512, 512, 255).unwrap(), &target);
        assert_eq!(report.status, MaskStatus::DimensionMismatch);
        assert!(!report.dimensions_match);
    }

    #[test]
    fn thresholding_binarizes() {
        let plane = GrayPlane::new(4, 1, vec![0, 127, 128, 250]).unwrap();
        assert_eq!(MaskImage::from_thresholded(plane).plane().data(), &[0, 0, 255, 255]);
        assert_eq!(MaskImage::new(GrayPlane::new(1, 1, vec![3]).unwrap()), Err(MaskError::NotBinary));
    }

    #[test]
    fn strokes_round_trip_through_json() {
        let set = StrokeSet::new(vec![Stroke::add(vec![pt(1, 2), pt(3, 4)], 5)]);
        let json = serde_json::to_string(&set).unwrap();
        assert_eq!(json, r#"{"strokes":[{"points":[[1,2],[3,4]],"radius":5,"mode":"add"}]}"#);
        let back: StrokeSet = serde_json::from_str(r#"{"strokes":[{"points":[[1,2],[3,4]],"radius":5}]}"#).unwrap();
        assert_eq!(back, set);
    }
}
