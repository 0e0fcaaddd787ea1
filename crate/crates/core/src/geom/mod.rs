//! Geometry primitives shared by every answer representation and metric.
//!
//! Coordinates follow the image convention: origin at the top-left, `x` grows
//! rightward and `y` grows downward. Nothing here cares whether the numbers are
//! raw pixels or quantized bins; unit handling lives in [`crate::textcodec`].

mod clip;
mod haversine;
mod keypoints;
mod mask;
mod polygon;
mod raster;
mod rbox;
mod trace;

pub use clip::{convex_clip, is_convex};
pub use haversine::{haversine_km, LatLon, EARTH_RADIUS_KM};
pub use keypoints::sample_keypoints;
pub use mask::{mask_to_hbb, BinaryMask};
pub use polygon::{point_in_polygon, polygon_area, Polygon};
pub use raster::{rasterize_polygon, rasterize_union};
pub use rbox::{rbb_from_params, rbb_to_params, rotated_iou, BoxParams, RotatedBox};
pub use trace::{trace_mask_to_polygons, trace_mask_to_polygons_with, MIN_COMPONENT_PIXELS};

use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum GeomError {
    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParam { field: &'static str, reason: String },
    #[error("non-finite coordinate")]
    NonFinite,
    #[error("corner set is not a rectangle: {0}")]
    NotRectangle(String),
    #[error("degenerate shape: {0}")]
    Degenerate(String),
    #[error("clipper polygon is not convex")]
    NonConvexClipper,
    #[error("mask has no set pixels")]
    EmptyMask,
    #[error("mask size mismatch: expected {expected} cells, got {got}")]
    MaskSize { expected: usize, got: usize },
    #[error("coordinate out of range: {0}")]
    OutOfRange(String),
    #[error("bitmap format: {0}")]
    Format(String),
}

/// A 2-D point in image coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl std::ops::Sub for Point {
    type Output = Point;

    fn sub(self, o: Point) -> Point {
        Point::new(self.x - o.x, self.y - o.y)
    }
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn dist(self, o: Point) -> f64 {
        (self.x - o.x).hypot(self.y - o.y)
    }

    pub fn cross(self, o: Point) -> f64 {
        self.x * o.y - self.y * o.x
    }

    pub fn dot(self, o: Point) -> f64 {
        self.x * o.x + self.y * o.y
    }
}

impl From<(f64, f64)> for Point {
    fn from((x, y): (f64, f64)) -> Self {
        Point::new(x, y)
    }
}

/// Axis-aligned box given by its top-left and bottom-right points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HorizontalBox {
    min: Point,
    max: Point,
}

impl HorizontalBox {
    pub fn new(min: Point, max: Point) -> Result<Self, GeomError> {
        if !min.is_finite() || !max.is_finite() {
            return Err(GeomError::NonFinite);
        }
        if min.x > max.x || min.y > max.y {
            return Err(GeomError::Degenerate(format!(
                "min ({}, {}) exceeds max ({}, {})",
                min.x, min.y, max.x, max.y
            )));
        }
        Ok(Self { min, max })
    }

    pub fn min(&self) -> Point {
        self.min
    }

    pub fn max(&self) -> Point {
        self.max
    }

    pub fn contains(&self, p: Point) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
    }
}

/// Signed shoelace area. Positive for vertex orders that run clockwise on
/// screen (y pointing down), negative for counter-clockwise ones.
pub(crate) fn signed_area(pts: &[Point]) -> f64 {
    let n = pts.len();
    let mut acc = 0.0;
    for i in 0..n {
        let a = pts[i];
        let b = pts[(i + 1) % n];
        acc += a.x * b.y - b.x * a.y;
    }
    acc * 0.5
}
