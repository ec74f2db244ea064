//! Line segment detection with Canny edges and a progressive probabilistic
//! Hough transform, plus the JSON form used to exchange segment lists.

use std::collections::VecDeque;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{LineSegment, Point};
use crate::error::{Error, Result};
use crate::imaging::{gaussian_blur, ImageGray};

const MIN_SIZE: usize = 16;

/// Ordered list of line segments.
///
/// JSON: `{"segments": [[x1, y1, x2, y2], ...]}`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LineSegmentSet {
    pub segments: Vec<LineSegment>,
}

#[derive(Serialize, Deserialize)]
struct SegmentsJson {
    segments: Vec<[f64; 4]>,
}

impl LineSegmentSet {
    pub fn new(segments: Vec<LineSegment>) -> Self {
        Self { segments }
    }

    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    /// Parses the JSON form. Zero-length segments are dropped.
    pub fn from_json(s: &str) -> Result<Self> {
        let raw: SegmentsJson = serde_json::from_str(s)?;
        let segments = raw
            .segments
            .into_iter()
            .filter(|v| v.iter().all(|c| c.is_finite()))
            .filter_map(|[x1, y1, x2, y2]| LineSegment::new(Point::new(x1, y1), Point::new(x2, y2)).ok())
            .collect();
        Ok(Self { segments })
    }

    pub fn to_json(&self) -> String {
        let raw = SegmentsJson {
            segments: self.segments.iter().map(|s| [s.p1.x, s.p1.y, s.p2.x, s.p2.y]).collect(),
        };
        serde_json::to_string(&raw).expect("plain numeric data serializes")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LineDetectParams {
    /// Lower hysteresis threshold on Sobel gradient magnitude.
    pub canny_lo: f32,
    pub canny_hi: f32,
    /// Minimum accumulator votes for a line candidate.
    pub hough_threshold: u32,
    pub min_len: f64,
    /// Largest run of missing edge pixels bridged inside one segment.
    pub max_gap: u32,
    pub seed: u64,
}

impl Default for LineDetectParams {
    fn default() -> Self {
        Self {
            canny_lo: 50.0,
            canny_hi: 150.0,
            hough_threshold: 40,
            min_len: 30.0,
            max_gap: 5,
            seed: 0,
        }
    }
}

/// Binary edge map: Gaussian smoothing, Sobel gradients, non-maximum
/// suppression and hysteresis thresholding.
pub fn canny(img: &ImageGray, lo: f32, hi: f32) -> Vec<bool> {
    let (w, h) = img.dims();
    let s = gaussian_blur(img);
    let mut mag = vec![0.0f32; w * h];
    let mut dir = vec![0u8; w * h];
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            let p = |dx: i64, dy: i64| s[(y as i64 + dy) as usize * w + (x as i64 + dx) as usize];
            let gx = p(1, -1) + 2.0 * p(1, 0) + p(1, 1) - p(-1, -1) - 2.0 * p(-1, 0) - p(-1, 1);
            let gy = p(-1, 1) + 2.0 * p(0, 1) + p(1, 1) - p(-1, -1) - 2.0 * p(0, -1) - p(1, -1);
            mag[y * w + x] = gx.hypot(gy);
            let angle = gy.atan2(gx).to_degrees().rem_euclid(180.0);
            dir[y * w + x] = if !(22.5..157.5).contains(&angle) {
                0
            } else if angle < 67.5 {
                1
            } else if angle < 112.5 {
                2
            } else {
                3
            };
        }
    }
    // 0: compare left/right, 1: diagonal, 2: up/down, 3: anti-diagonal
    let mut thin = vec![0u8; w * h];
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            let i = y * w + x;
            let m = mag[i];
            if m < lo {
                continue;
            }
            let (a, b) = match dir[i] {
                0 => (mag[i - 1], mag[i + 1]),
                1 => (mag[i - w - 1], mag[i + w + 1]),
                2 => (mag[i - w], mag[i + w]),
                _ => (mag[i - w + 1], mag[i + w - 1]),
            };
            if m >= a && m > b {
                thin[i] = if m >= hi { 2 } else { 1 };
            }
        }
    }
    let mut edges = vec![false; w * h];
    let mut queue: VecDeque<usize> = thin
        .iter()
        .enumerate()
        .filter(|(_, &v)| v == 2)
        .map(|(i, _)| i)
        .collect();
    for &i in &queue {
        edges[i] = true;
    }
    while let Some(i) = queue.pop_front() {
        let (x, y) = ((i % w) as i64, (i / w) as i64);
        for dy in -1..=1 {
            for dx in -1..=1 {
                let (nx, ny) = (x + dx, y + dy);
                if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                    continue;
                }
                let j = ny as usize * w + nx as usize;
                if thin[j] > 0 && !edges[j] {
                    edges[j] = true;
                    queue.push_back(j);
                }
            }
        }
    }
    edges
}

/// Detects straight segments at least `min_len` long. Deterministic for a
/// given `params.seed`.
pub fn detect_line_segments(img: &ImageGray, params: &LineDetectParams) -> Result<LineSegmentSet> {
    let (w, h) = img.dims();
    if w < MIN_SIZE || h < MIN_SIZE {
        return Err(Error::ImageTooSmall {
            width: w,
            height: h,
            min: MIN_SIZE,
        });
    }
    let edges = canny(img, params.canny_lo, params.canny_hi);
    Ok(LineSegmentSet::new(probabilistic_hough(&edges, w, h, params)))
}

const NUM_ANGLES: usize = 180;
const SHIFT: u32 = 16;

fn probabilistic_hough(edges: &[bool], w: usize, h: usize, params: &LineDetectParams) -> Vec<LineSegment> {
    let num_rho = 2 * (w + h) + 1;
    let offset = (num_rho - 1) / 2;
    let trig: Vec<(f64, f64)> = (0..NUM_ANGLES)
        .map(|n| {
            let t = (n as f64).to_radians();
            (t.cos(), t.sin())
        })
        .collect();
    let mut accum = vec![0i32; num_rho * NUM_ANGLES];
    let mut mask = edges.to_vec();
    let mut voted = vec![false; w * h];
    let mut points: Vec<(usize, usize)> = (0..w * h).filter(|&i| edges[i]).map(|i| (i % w, i / w)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    points.shuffle(&mut rng);

    let rho_index = |x: usize, y: usize, n: usize| -> usize {
        let (c, s) = trig[n];
        ((x as f64 * c + y as f64 * s).round() as i64 + offset as i64) as usize
    };
    let gap_limit = params.max_gap as i64;
    let mut segments = Vec::new();

    for &(px, py) in &points {
        if !mask[py * w + px] {
            continue;
        }
        let mut best = (0i32, 0usize);
        for n in 0..NUM_ANGLES {
            let cell = &mut accum[rho_index(px, py, n) * NUM_ANGLES + n];
            *cell += 1;
            if *cell > best.0 {
                best = (*cell, n);
            }
        }
        voted[py * w + px] = true;
        if (best.0 as u32) < params.hough_threshold {
            continue;
        }

        // walk along the line direction through (px, py) in fixed point
        let (c, s) = trig[best.1];
        let (a, b) = (-s, c);
        let x_major = a.abs() > b.abs();
        let (x0, y0, dx0, dy0): (i64, i64, i64, i64) = if x_major {
            let dx0 = if a > 0.0 { 1 } else { -1 };
            let dy0 = (b * (1i64 << SHIFT) as f64 / a.abs()).round() as i64;
            (px as i64, ((py as i64) << SHIFT) + (1 << (SHIFT - 1)), dx0, dy0)
        } else {
            let dy0 = if b > 0.0 { 1 } else { -1 };
            let dx0 = (a * (1i64 << SHIFT) as f64 / b.abs()).round() as i64;
            (((px as i64) << SHIFT) + (1 << (SHIFT - 1)), py as i64, dx0, dy0)
        };
        let to_pixel = |x: i64, y: i64| -> (i64, i64) {
            if x_major {
                (x, y >> SHIFT)
            } else {
                (x >> SHIFT, y)
            }
        };

        let mut ends = [(px as i64, py as i64); 2];
        for (k, end) in ends.iter_mut().enumerate() {
            let (dx, dy) = if k == 0 { (dx0, dy0) } else { (-dx0, -dy0) };
            let (mut x, mut y) = (x0, y0);
            let mut gap = 0;
            loop {
                let (j1, i1) = to_pixel(x, y);
                if j1 < 0 || i1 < 0 || j1 >= w as i64 || i1 >= h as i64 {
                    break;
                }
                if mask[i1 as usize * w + j1 as usize] {
                    gap = 0;
                    *end = (j1, i1);
                } else {
                    gap += 1;
                    if gap > gap_limit {
                        break;
                    }
                }
                x += dx;
                y += dy;
            }
        }

        let length = ((ends[1].0 - ends[0].0) as f64).hypot((ends[1].1 - ends[0].1) as f64);
        let good = length >= params.min_len;

        for (k, end) in ends.iter().enumerate() {
            let (dx, dy) = if k == 0 { (dx0, dy0) } else { (-dx0, -dy0) };
            let (mut x, mut y) = (x0, y0);
            loop {
                let (j1, i1) = to_pixel(x, y);
                if j1 < 0 || i1 < 0 || j1 >= w as i64 || i1 >= h as i64 {
                    break;
                }
                let idx = i1 as usize * w + j1 as usize;
                if mask[idx] {
                    if good && voted[idx] {
                        for n in 0..NUM_ANGLES {
                            accum[rho_index(j1 as usize, i1 as usize, n) * NUM_ANGLES + n] -= 1;
                        }
                        voted[idx] = false;
                    }
                    mask[idx] = false;
                }
                if (j1, i1) == *end {
                    break;
                }
                x += dx;
                y += dy;
            }
        }

        if good {
            let p1 = Point::new(ends[0].0 as f64, ends[0].1 as f64);
            let p2 = Point::new(ends[1].0 as f64, ends[1].1 as f64);
            if let Ok(seg) = LineSegment::new(p1, p2) {
                segments.push(seg);
            }
        }
    }
    segments
}
