use nalgebra::{DMatrix, Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use super::{Point, Quad};
use crate::error::{Error, Result};

const MIN_DET: f64 = 1e-12;
const MIN_W: f64 = 1e-12;
// relative size of the second-smallest singular value below which the
// DLT system is treated as rank deficient
const RANK_TOL: f64 = 1e-9;

/// 3x3 projective transform, scaled so that `m[2][2] == 1` whenever that
/// entry is nonzero.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[[f64; 3]; 3]", into = "[[f64; 3]; 3]")]
pub struct Homography {
    m: Matrix3<f64>,
}

impl TryFrom<[[f64; 3]; 3]> for Homography {
    type Error = Error;
    fn try_from(rows: [[f64; 3]; 3]) -> Result<Self> {
        Homography::new(Matrix3::from_fn(|r, c| rows[r][c]))
    }
}

impl From<Homography> for [[f64; 3]; 3] {
    fn from(h: Homography) -> Self {
        let m = h.m;
        [0, 1, 2].map(|r| [m[(r, 0)], m[(r, 1)], m[(r, 2)]])
    }
}

impl Homography {
    pub fn new(m: Matrix3<f64>) -> Result<Self> {
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::DegenerateHomography);
        }
        let norm = m.norm();
        if norm == 0.0 {
            return Err(Error::DegenerateHomography);
        }
        let m = if m[(2, 2)].abs() > 1e-12 * norm {
            m / m[(2, 2)]
        } else {
            m / norm
        };
        if m.determinant().abs() <= MIN_DET {
            return Err(Error::DegenerateHomography);
        }
        Ok(Self { m })
    }

    pub fn identity() -> Self {
        Self { m: Matrix3::identity() }
    }

    pub fn translation(tx: f64, ty: f64) -> Self {
        let mut m = Matrix3::identity();
        m[(0, 2)] = tx;
        m[(1, 2)] = ty;
        Self { m }
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.m
    }

    pub fn apply(&self, p: Point) -> Result<Point> {
        let v = self.m * Vector3::new(p.x, p.y, 1.0);
        if v.z.abs() < MIN_W {
            return Err(Error::PointAtInfinity);
        }
        Ok(Point::new(v.x / v.z, v.y / v.z))
    }

    /// Forward map without the point-at-infinity check; returns non-finite
    /// coordinates when `w` vanishes.
    #[inline]
    pub(crate) fn apply_raw(&self, x: f64, y: f64) -> (f64, f64) {
        let m = &self.m;
        let w = m[(2, 0)] * x + m[(2, 1)] * y + m[(2, 2)];
        (
            (m[(0, 0)] * x + m[(0, 1)] * y + m[(0, 2)]) / w,
            (m[(1, 0)] * x + m[(1, 1)] * y + m[(1, 2)]) / w,
        )
    }

    pub fn inverse(&self) -> Result<Homography> {
        let inv = self.m.try_inverse().ok_or(Error::DegenerateHomography)?;
        Homography::new(inv)
    }

    /// The transform that applies `self` first, then `next`.
    pub fn then(&self, next: &Homography) -> Result<Homography> {
        Homography::new(next.m * self.m)
    }

    /// Largest entry-wise difference after scaling both matrices to unit
    /// Frobenius norm with matching sign.
    pub fn normalized_distance(&self, other: &Homography) -> f64 {
        let a = self.m / self.m.norm();
        let mut b = other.m / other.m.norm();
        if a.dot(&b) < 0.0 {
            b = -b;
        }
        (a - b).amax()
    }
}

/// Projective mapping of a single point.
pub fn apply_homography(h: &Homography, p: Point) -> Result<Point> {
    h.apply(p)
}

// Similarity transform moving the centroid to the origin and scaling the
// mean distance from it to sqrt(2).
fn normalizer(points: &[Point]) -> Result<Matrix3<f64>> {
    let n = points.len() as f64;
    let cx = points.iter().map(|p| p.x).sum::<f64>() / n;
    let cy = points.iter().map(|p| p.y).sum::<f64>() / n;
    let mean_dist = points.iter().map(|p| (p.x - cx).hypot(p.y - cy)).sum::<f64>() / n;
    if !mean_dist.is_finite() || mean_dist <= 0.0 {
        return Err(Error::NoModel);
    }
    let s = std::f64::consts::SQRT_2 / mean_dist;
    Ok(Matrix3::new(s, 0.0, -s * cx, 0.0, s, -s * cy, 0.0, 0.0, 1.0))
}

fn transform(t: &Matrix3<f64>, p: Point) -> (f64, f64) {
    (t[(0, 0)] * p.x + t[(0, 2)], t[(1, 1)] * p.y + t[(1, 2)])
}

/// Normalized direct linear transform over four or more correspondences,
/// solved in the least-squares sense.
pub fn fit_homography(src: &[Point], dst: &[Point]) -> Result<Homography> {
    fit_dlt(src, dst, None)
}

/// Weighted variant of [`fit_homography`]; each correspondence's equations
/// are scaled by its weight.
pub fn fit_homography_weighted(src: &[Point], dst: &[Point], weights: &[f64]) -> Result<Homography> {
    if weights.len() != src.len() {
        return Err(Error::LengthMismatch(weights.len(), src.len()));
    }
    fit_dlt(src, dst, Some(weights))
}

fn fit_dlt(src: &[Point], dst: &[Point], weights: Option<&[f64]>) -> Result<Homography> {
    if src.len() != dst.len() {
        return Err(Error::LengthMismatch(src.len(), dst.len()));
    }
    let active = match weights {
        Some(w) => w.iter().filter(|&&w| w > 0.0).count(),
        None => src.len(),
    };
    if active < 4 {
        return Err(Error::InsufficientMatches {
            required: 4,
            actual: active,
        });
    }
    let ts = normalizer(src)?;
    let td = normalizer(dst)?;
    let rows = (2 * src.len()).max(9);
    let mut a = DMatrix::<f64>::zeros(rows, 9);
    for (i, (p, q)) in src.iter().zip(dst).enumerate() {
        let w = weights.map_or(1.0, |w| w[i]);
        if w <= 0.0 {
            continue;
        }
        let (x, y) = transform(&ts, *p);
        let (u, v) = transform(&td, *q);
        let r0 = [-x, -y, -1.0, 0.0, 0.0, 0.0, u * x, u * y, u];
        let r1 = [0.0, 0.0, 0.0, -x, -y, -1.0, v * x, v * y, v];
        for c in 0..9 {
            a[(2 * i, c)] = w * r0[c];
            a[(2 * i + 1, c)] = w * r1[c];
        }
    }
    let svd = a.svd(false, true);
    let v_t = svd.v_t.ok_or(Error::NoModel)?;
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| svd.singular_values[i].total_cmp(&svd.singular_values[j]));
    let (smallest, second) = (order[0], order[1]);
    let largest = svd.singular_values[order[order.len() - 1]];
    if svd.singular_values[second] <= RANK_TOL * largest {
        return Err(Error::NoModel);
    }
    let h = v_t.row(smallest);
    let hn = Matrix3::new(h[0], h[1], h[2], h[3], h[4], h[5], h[6], h[7], h[8]);
    let td_inv = td.try_inverse().ok_or(Error::NoModel)?;
    Homography::new(td_inv * hn * ts).map_err(|_| Error::NoModel)
}

pub(crate) fn has_collinear_triple(c: &[Point; 4]) -> bool {
    let scale = c
        .iter()
        .flat_map(|p| c.iter().map(move |q| p.distance(*q)))
        .fold(0.0, f64::max);
    if scale == 0.0 {
        return true;
    }
    (0..4).any(|skip| {
        let t: Vec<Point> = (0..4).filter(|&i| i != skip).map(|i| c[i]).collect();
        let cross = (t[1].x - t[0].x) * (t[2].y - t[0].y) - (t[1].y - t[0].y) * (t[2].x - t[0].x);
        cross.abs() <= 1e-10 * scale * scale
    })
}

/// Exact homography taking each corner of `src` to the same-index corner of
/// `dst`.
pub fn homography_from_quads(src: &Quad, dst: &Quad) -> Result<Homography> {
    for q in [src, dst] {
        if has_collinear_triple(q.corners()) {
            return Err(Error::DegenerateQuad("three collinear corners".into()));
        }
    }
    fit_homography(src.corners(), dst.corners()).map_err(|_| Error::DegenerateQuad("singular system".into()))
}
