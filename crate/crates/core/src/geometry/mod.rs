//! Planar geometry: points, line segments, quadrilaterals and homographies,
//! plus slope-based point displacement and classical line detection.

mod homography;
mod lines;
mod quad;

pub(crate) use homography::has_collinear_triple;
pub use homography::{apply_homography, fit_homography, fit_homography_weighted, homography_from_quads, Homography};
pub use lines::{detect_line_segments, LineDetectParams, LineSegmentSet};
pub use quad::Quad;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Image point in pixel coordinates, serialized as `[x, y]`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn swapped(self) -> Point {
        Point::new(self.y, self.x)
    }
}

impl From<[f64; 2]> for Point {
    fn from([x, y]: [f64; 2]) -> Self {
        Point { x, y }
    }
}

impl From<Point> for [f64; 2] {
    fn from(p: Point) -> Self {
        [p.x, p.y]
    }
}

impl std::ops::Add for Point {
    type Output = Point;
    fn add(self, o: Point) -> Point {
        Point::new(self.x + o.x, self.y + o.y)
    }
}

impl std::ops::Sub for Point {
    type Output = Point;
    fn sub(self, o: Point) -> Point {
        Point::new(self.x - o.x, self.y - o.y)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    Vertical,
    Horizontal,
    Other,
}

/// Line segment between two image points.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LineSegment {
    pub p1: Point,
    pub p2: Point,
}

impl LineSegment {
    pub fn new(p1: Point, p2: Point) -> Result<Self> {
        if p1 == p2 {
            return Err(Error::DegenerateSegment);
        }
        Ok(Self { p1, p2 })
    }

    pub fn length(&self) -> f64 {
        self.p1.distance(self.p2)
    }

    pub fn midpoint(&self) -> Point {
        Point::new((self.p1.x + self.p2.x) / 2.0, (self.p1.y + self.p2.y) / 2.0)
    }

    /// Undirected angle from the x axis in degrees, in `[0, 180)`.
    pub fn angle_deg(&self) -> f64 {
        let a = (self.p2.y - self.p1.y).atan2(self.p2.x - self.p1.x).to_degrees();
        a.rem_euclid(180.0)
    }

    /// `dy/dx`; infinite for vertical segments.
    pub fn slope(&self) -> f64 {
        (self.p2.y - self.p1.y) / (self.p2.x - self.p1.x)
    }

    /// `dx/dy`, the slope with the axes swapped.
    pub fn inverse_slope(&self) -> f64 {
        (self.p2.x - self.p1.x) / (self.p2.y - self.p1.y)
    }
}

/// Tags a segment by its angle to the image axes. `angle_tol` is in degrees
/// and must lie in `(0, 45)`.
pub fn classify_line(seg: &LineSegment, angle_tol: f64) -> Result<Orientation> {
    if !(angle_tol > 0.0 && angle_tol < 45.0) {
        return Err(Error::InvalidParameter(format!(
            "angle tolerance {angle_tol} not in (0, 45)"
        )));
    }
    if seg.p1 == seg.p2 {
        return Err(Error::DegenerateSegment);
    }
    let dx = (seg.p2.x - seg.p1.x).abs();
    let dy = (seg.p2.y - seg.p1.y).abs();
    let from_horizontal = dy.atan2(dx).to_degrees();
    Ok(if from_horizontal <= angle_tol {
        Orientation::Horizontal
    } else if 90.0 - from_horizontal <= angle_tol {
        Orientation::Vertical
    } else {
        Orientation::Other
    })
}

/// How the distance between a region and a segment is measured.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceMode {
    /// Distance to the nearer endpoint.
    #[default]
    Endpoint,
    /// Distance to the closest point on the segment.
    PointToSegment,
}

/// Distance from `center` to the nearer endpoint of `seg`.
pub fn region_line_distance(center: Point, seg: &LineSegment) -> f64 {
    center.distance(seg.p1).min(center.distance(seg.p2))
}

pub fn region_line_distance_with(mode: DistanceMode, center: Point, seg: &LineSegment) -> f64 {
    match mode {
        DistanceMode::Endpoint => region_line_distance(center, seg),
        DistanceMode::PointToSegment => {
            let d = seg.p2 - seg.p1;
            let len2 = d.x * d.x + d.y * d.y;
            let t = if len2 > 0.0 {
                (((center.x - seg.p1.x) * d.x + (center.y - seg.p1.y) * d.y) / len2).clamp(0.0, 1.0)
            } else {
                0.0
            };
            center.distance(Point::new(seg.p1.x + t * d.x, seg.p1.y + t * d.y))
        }
    }
}

/// Moves `p` a signed distance `d` along the direction of slope `m`:
/// `r = sqrt(1 + m^2)`, result `(x + d/r, y + d*m/r)`.
pub fn adjust_point(p: Point, m: f64, d: f64) -> Point {
    let r = m.hypot(1.0);
    Point::new(p.x + d / r, p.y + d * m / r)
}

/// [`adjust_point`] with x and y exchanged, for near-vertical directions
/// whose slope is given as `dx/dy`.
pub fn adjust_point_swapped(p: Point, inverse_slope: f64, d: f64) -> Point {
    adjust_point(p.swapped(), inverse_slope, d).swapped()
}
