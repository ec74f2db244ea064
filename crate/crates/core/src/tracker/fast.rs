//! FAST-9 corners with intensity-centroid orientation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::imaging::ImageGray;

use super::Keypoint;

pub(crate) const MIN_DETECT_SIZE: usize = 32;
const ORIENTATION_RADIUS: i64 = 15;
const ARC: usize = 9;

// Bresenham circle of radius 3, clockwise from the top.
const CIRCLE: [(i64, i64); 16] = [
    (0, -3),
    (1, -3),
    (2, -2),
    (3, -1),
    (3, 0),
    (3, 1),
    (2, 2),
    (1, 3),
    (0, 3),
    (-1, 3),
    (-2, 2),
    (-3, 1),
    (-3, 0),
    (-3, -1),
    (-2, -2),
    (-1, -3),
];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FastParams {
    /// Intensity difference a circle pixel needs to count as brighter or darker.
    pub fast_threshold: u8,
    pub max_keypoints: usize,
    pub nms_radius: usize,
}

impl Default for FastParams {
    fn default() -> Self {
        Self {
            fast_threshold: 20,
            max_keypoints: 1000,
            nms_radius: 3,
        }
    }
}

fn has_arc(flags: u32) -> bool {
    // doubled ring so runs that wrap past index 15 are contiguous
    let ring = flags | (flags << 16);
    let mut run = ring;
    for _ in 1..ARC {
        run &= run >> 1;
    }
    run & 0xFFFF != 0
}

/// FAST score: the larger of the summed excess brightness and summed excess
/// darkness over the circle, or 0 when no 9-pixel arc qualifies.
fn corner_score(data: &[u8], w: usize, x: usize, y: usize, t: i32, offsets: &[isize; 16]) -> f32 {
    let c = (y * w + x) as isize;
    let p = data[c as usize] as i32;
    let at = |k: usize| data[(c + offsets[k]) as usize] as i32;
    // at least two compass points must agree for any 9-arc
    let compass = [at(0), at(4), at(8), at(12)];
    let bright_c = compass.iter().filter(|&&v| v > p + t).count();
    let dark_c = compass.iter().filter(|&&v| v < p - t).count();
    if bright_c < 2 && dark_c < 2 {
        return 0.0;
    }
    let (mut bright, mut dark) = (0u32, 0u32);
    let (mut sb, mut sd) = (0i32, 0i32);
    for k in 0..16 {
        let v = at(k);
        if v > p + t {
            bright |= 1 << k;
            sb += v - p - t;
        } else if v < p - t {
            dark |= 1 << k;
            sd += p - v - t;
        }
    }
    let mut score = 0;
    if has_arc(bright) {
        score = sb;
    }
    if has_arc(dark) {
        score = score.max(sd);
    }
    score as f32
}

/// Angle of the vector from the patch centre to its intensity centroid.
pub fn intensity_orientation(img: &ImageGray, x: usize, y: usize) -> f64 {
    let (w, h) = img.dims();
    let data = img.data();
    let (mut m10, mut m01) = (0i64, 0i64);
    let r2 = ORIENTATION_RADIUS * ORIENTATION_RADIUS;
    for dy in -ORIENTATION_RADIUS..=ORIENTATION_RADIUS {
        let yy = y as i64 + dy;
        if yy < 0 || yy >= h as i64 {
            continue;
        }
        for dx in -ORIENTATION_RADIUS..=ORIENTATION_RADIUS {
            let xx = x as i64 + dx;
            if dx * dx + dy * dy > r2 || xx < 0 || xx >= w as i64 {
                continue;
            }
            let v = data[yy as usize * w + xx as usize] as i64;
            m10 += dx * v;
            m01 += dy * v;
        }
    }
    (m01 as f64).atan2(m10 as f64)
}

/// Oriented FAST-9 keypoints, strongest first; equal responses keep scan
/// order. Positions are pixel centres, so pixel `(x, y)` reports
/// `(x + 0.5, y + 0.5)`.
pub fn detect_keypoints(img: &ImageGray, params: &FastParams) -> Result<Vec<Keypoint>> {
    let (w, h) = img.dims();
    if w < MIN_DETECT_SIZE || h < MIN_DETECT_SIZE {
        return Err(Error::ImageTooSmall {
            width: w,
            height: h,
            min: MIN_DETECT_SIZE,
        });
    }
    let data = img.data();
    let offsets = CIRCLE.map(|(dx, dy)| dy as isize * w as isize + dx as isize);
    let t = params.fast_threshold as i32;
    let mut scores = vec![0.0f32; w * h];
    let mut candidates = Vec::new();
    for y in 3..h - 3 {
        for x in 3..w - 3 {
            let s = corner_score(data, w, x, y, t, &offsets);
            if s > 0.0 {
                scores[y * w + x] = s;
                candidates.push(y * w + x);
            }
        }
    }

    let r = params.nms_radius as i64;
    let mut kept: Vec<(f32, usize)> = candidates
        .into_iter()
        .filter(|&i| {
            let (x, y) = ((i % w) as i64, (i / w) as i64);
            let s = scores[i];
            for ny in (y - r).max(0)..=(y + r).min(h as i64 - 1) {
                for nx in (x - r).max(0)..=(x + r).min(w as i64 - 1) {
                    let j = ny as usize * w + nx as usize;
                    // strict maximum; on ties the earlier pixel in scan order wins
                    if scores[j] > s || (scores[j] == s && j < i) {
                        return false;
                    }
                }
            }
            true
        })
        .map(|i| (scores[i], i))
        .collect();
    kept.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    kept.truncate(params.max_keypoints);

    Ok(kept
        .into_iter()
        .map(|(s, i)| {
            let (x, y) = (i % w, i / w);
            Keypoint {
                position: Point::new(x as f64 + 0.5, y as f64 + 0.5),
                response: s as f64,
                orientation: intensity_orientation(img, x, y),
            }
        })
        .collect())
}
