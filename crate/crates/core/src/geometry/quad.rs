use serde::{Deserialize, Serialize};

use super::Point;
use crate::error::{Error, Result};

const MIN_AREA: f64 = 1e-9;

/// Four image points ordered top-left, top-right, bottom-right, bottom-left.
///
/// Serialized as `[[x, y], [x, y], [x, y], [x, y]]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[Point; 4]", into = "[Point; 4]")]
pub struct Quad {
    corners: [Point; 4],
}

impl TryFrom<[Point; 4]> for Quad {
    type Error = Error;
    fn try_from(c: [Point; 4]) -> Result<Self> {
        Quad::new(c)
    }
}

impl From<Quad> for [Point; 4] {
    fn from(q: Quad) -> Self {
        q.corners
    }
}

fn cross(o: Point, a: Point, b: Point) -> f64 {
    (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)
}

fn on_segment(p: Point, a: Point, b: Point) -> bool {
    p.x >= a.x.min(b.x) && p.x <= a.x.max(b.x) && p.y >= a.y.min(b.y) && p.y <= a.y.max(b.y)
}

/// Closed-segment intersection test, touching counts.
pub(crate) fn segments_intersect(a1: Point, a2: Point, b1: Point, b2: Point) -> bool {
    let d1 = cross(b1, b2, a1);
    let d2 = cross(b1, b2, a2);
    let d3 = cross(a1, a2, b1);
    let d4 = cross(a1, a2, b2);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0)) && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0)) {
        return true;
    }
    (d1 == 0.0 && on_segment(a1, b1, b2))
        || (d2 == 0.0 && on_segment(a2, b1, b2))
        || (d3 == 0.0 && on_segment(b1, a1, a2))
        || (d4 == 0.0 && on_segment(b2, a1, a2))
}

impl Quad {
    /// Validates that the corners are finite and form a simple polygon with
    /// positive area.
    pub fn new(corners: [Point; 4]) -> Result<Self> {
        let q = Quad { corners };
        if corners.iter().any(|p| !p.x.is_finite() || !p.y.is_finite()) {
            return Err(Error::DegenerateQuad("non-finite corner".into()));
        }
        if q.area() <= MIN_AREA {
            return Err(Error::DegenerateQuad("zero area".into()));
        }
        if !q.is_simple() {
            return Err(Error::DegenerateQuad("self-intersecting".into()));
        }
        Ok(q)
    }

    /// Axis-aligned rectangle with top-left corner `(x, y)`.
    pub fn from_rect(x: f64, y: f64, w: f64, h: f64) -> Result<Self> {
        Quad::new([
            Point::new(x, y),
            Point::new(x + w, y),
            Point::new(x + w, y + h),
            Point::new(x, y + h),
        ])
    }

    pub fn corners(&self) -> &[Point; 4] {
        &self.corners
    }

    /// Shoelace area; positive for the TL, TR, BR, BL order in y-down images.
    pub fn signed_area(&self) -> f64 {
        let c = &self.corners;
        (0..4)
            .map(|i| {
                let (a, b) = (c[i], c[(i + 1) % 4]);
                a.x * b.y - b.x * a.y
            })
            .sum::<f64>()
            / 2.0
    }

    pub fn area(&self) -> f64 {
        self.signed_area().abs()
    }

    pub fn is_simple(&self) -> bool {
        let c = &self.corners;
        !segments_intersect(c[0], c[1], c[2], c[3]) && !segments_intersect(c[1], c[2], c[3], c[0])
    }

    pub fn is_convex(&self) -> bool {
        let c = &self.corners;
        let signs: Vec<f64> = (0..4).map(|i| cross(c[i], c[(i + 1) % 4], c[(i + 2) % 4])).collect();
        signs.iter().all(|&s| s > 0.0) || signs.iter().all(|&s| s < 0.0)
    }

    /// Even-odd point-in-polygon test.
    pub fn contains(&self, p: Point) -> bool {
        let c = &self.corners;
        let mut inside = false;
        let mut j = 3;
        for i in 0..4 {
            let (a, b) = (c[i], c[j]);
            if (a.y > p.y) != (b.y > p.y) && p.x < (b.x - a.x) * (p.y - a.y) / (b.y - a.y) + a.x {
                inside = !inside;
            }
            j = i;
        }
        inside
    }

    /// `(min_x, min_y, max_x, max_y)`.
    pub fn bounds(&self) -> (f64, f64, f64, f64) {
        let c = &self.corners;
        let fold = |f: fn(f64, f64) -> f64, init: f64, get: fn(&Point) -> f64| c.iter().map(get).fold(init, f);
        (
            fold(f64::min, f64::INFINITY, |p| p.x),
            fold(f64::min, f64::INFINITY, |p| p.y),
            fold(f64::max, f64::NEG_INFINITY, |p| p.x),
            fold(f64::max, f64::NEG_INFINITY, |p| p.y),
        )
    }

    pub fn centroid(&self) -> Point {
        let c = &self.corners;
        Point::new(
            c.iter().map(|p| p.x).sum::<f64>() / 4.0,
            c.iter().map(|p| p.y).sum::<f64>() / 4.0,
        )
    }

    pub fn translated(&self, dx: f64, dy: f64) -> Quad {
        Quad {
            corners: self.corners.map(|p| Point::new(p.x + dx, p.y + dy)),
        }
    }

    /// Splits the quad along an interior diagonal into two triangles.
    pub fn triangles(&self) -> [[Point; 3]; 2] {
        let c = &self.corners;
        let s1 = cross(c[0], c[2], c[1]);
        let s3 = cross(c[0], c[2], c[3]);
        if s1 * s3 < 0.0 {
            [[c[0], c[1], c[2]], [c[0], c[2], c[3]]]
        } else {
            [[c[1], c[2], c[3]], [c[1], c[3], c[0]]]
        }
    }

    /// Mean corner-to-corner distance.
    pub fn mean_corner_distance(&self, other: &Quad) -> f64 {
        self.corners
            .iter()
            .zip(other.corners.iter())
            .map(|(a, b)| a.distance(*b))
            .sum::<f64>()
            / 4.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(p: [(f64, f64); 4]) -> Result<Quad> {
        Quad::new(p.map(|(x, y)| Point::new(x, y)))
    }

    #[test]
    fn rect_area_and_containment() {
        let r = Quad::from_rect(1.0, 2.0, 4.0, 3.0).unwrap();
        assert_eq!(r.area(), 12.0);
        assert!(r.signed_area() > 0.0);
        assert!(r.contains(Point::new(2.0, 3.0)));
        assert!(!r.contains(Point::new(0.5, 3.0)));
        assert!(r.is_convex());
    }

    #[test]
    fn bowtie_is_rejected() {
        assert!(matches!(
            q([(0., 0.), (1., 1.), (1., 0.), (0., 1.)]),
            Err(Error::DegenerateQuad(_))
        ));
        assert!(q([(0., 0.), (1., 0.), (2., 0.), (3., 0.)]).is_err());
    }

    #[test]
    fn concave_quad_triangulates() {
        let c = q([(0., 0.), (4., 0.), (1., 1.), (0., 4.)]).unwrap();
        assert!(!c.is_convex());
        let area: f64 = c
            .triangles()
            .iter()
            .map(|t| (cross(t[0], t[1], t[2]) / 2.0).abs())
            .sum();
        assert!((area - c.area()).abs() < 1e-12);
    }

    #[test]
    fn serde_shape() {
        let r = Quad::from_rect(0.0, 0.0, 2.0, 1.0).unwrap();
        let s = serde_json::to_string(&r).unwrap();
        assert_eq!(s, "[[0.0,0.0],[2.0,0.0],[2.0,1.0],[0.0,1.0]]");
        assert_eq!(serde_json::from_str::<Quad>(&s).unwrap(), r);
        assert!(serde_json::from_str::<Quad>("[[0,0],[1,1],[1,0],[0,1]]").is_err());
    }
}
