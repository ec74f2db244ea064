//! Rotated BRIEF: 256 intensity comparisons on a smoothed patch, with the
//! sampling pattern rotated by the keypoint orientation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::{gaussian_blur, ImageGray};

use super::Keypoint;

/// Keypoints closer than this to any image edge are not described.
pub const BORDER: usize = 20;

// Point pairs (x1, y1, x2, y2), drawn once from an isotropic Gaussian with
// sigma 31/5 and kept within radius 15.
#[rustfmt::skip]
const PATTERN: [[i8; 4]; 256] = [
    [-3, 0, 0, 0], [4, -8, -12, -1], [-10, -9, -3, 1], [8, 8, -2, 5],
    [3, 5, -8, -3], [0, 12, 9, 7], [1, 0, 2, 14], [-7, 5, 7, 12],
    [5, 2, -3, 5], [6, -4, 2, 1], [-3, -11, -1, -5], [1, -11, 3, -3],
    [-6, 0, -1, -4], [-2, -7, 0, 6], [1, -5, -3, 3], [4, 5, -3, -7],
    [-1, 6, 4, -5], [-3, -9, 0, -10], [-6, -6, 5, -4], [12, 6, -3, 1],
    [-6, 9, -4, -6], [5, -7, 2, -4], [-6, 0, 0, 2], [-10, 6, 7, -10],
    [4, 8, -1, 1], [0, -9, -1, -3], [-10, 5, -3, -2], [0, -14, 2, 8],
    [-6, -9, -2, 8], [-2, 14, -7, -3], [4, 0, 4, -6], [-2, -3, 0, 7],
    [-3, 6, -3, -8], [3, -14, 5, 5], [2, 1, -4, 4], [3, -3, -10, 9],
    [-5, 6, -3, 1], [-2, -5, 5, 12], [5, -2, 0, 12], [-5, -5, 5, 7],
    [-6, 1, 0, -3], [-6, -8, -8, -5], [-13, 7, 0, 10], [2, -9, 9, -7],
    [-6, 4, -1, 0], [-3, 3, -4, -1], [6, 13, 5, 0], [-3, -4, 0, -2],
    [1, 0, 5, 4], [-6, 4, 8, -1], [-8, -12, -6, -3], [-3, -7, -3, 0],
    [10, -5, 4, 9], [1, -2, 5, 2], [-8, 2, -1, 7], [2, -11, -4, -7],
    [0, 1, 3, 11], [5, -12, 7, -4], [-8, 5, 1, -6], [-9, -2, 6, -8],
    [0, 6, 5, 5], [11, 1, -1, -11], [2, 1, 7, -7], [2, -10, 0, -1],
    [13, 3, 7, 4], [5, -4, -6, 0], [1, 5, 9, 5], [-3, -7, 8, -9],
    [-6, 7, -1, 7], [-7, -3, -6, -2], [-4, 0, 1, -12], [5, 5, 5, -6],
    [-3, 2, 9, 6], [8, -7, -8, 6], [-1, 3, 9, 4], [-3, -3, 1, 1],
    [-2, 0, 10, 1], [-5, -3, 7, 4], [1, 5, 3, 4], [11, 3, 5, -4],
    [-2, 1, -3, -1], [-3, -3, 2, -5], [-3, -2, -1, 12], [3, -7, -4, -8],
    [0, -1, 7, 0], [-6, -3, -11, -3], [-7, -3, -2, 2], [-12, -7, 1, -8],
    [-8, 2, -6, -7], [5, -8, 3, 6], [0, -4, 3, -13], [-3, 3, 6, 1],
    [-1, -5, -2, 1], [2, -12, 9, 12], [-6, -7, 0, -8], [1, 0, 10, 0],
    [2, 1, -1, 1], [-5, -5, -4, 0], [2, 2, -6, -3], [-7, 6, 4, -1],
    [-2, -3, -7, -6], [-11, -2, 0, 4], [3, -1, 10, 6], [0, -2, -5, 5],
    [1, 14, -4, 1], [13, -2, -1, -4], [0, -7, 7, 3], [1, -4, -4, 6],
    [-1, 1, -2, -13], [11, -2, 0, -4], [3, 7, -5, 6], [-3, 1, 1, 4],
    [1, -1, 1, 4], [6, 4, -1, 6], [-2, 10, 12, -9], [-10, -4, 10, 6],
    [1, -2, 0, 0], [3, -3, 1, -10], [-2, -11, 5, 1], [0, -2, 5, -7],
    [-1, 7, 6, -10], [5, -3, -4, 5], [4, 9, 0, 2], [6, -3, 1, 2],
    [2, -10, 3, -10], [-5, -1, 3, 6], [-2, -9, 2, 4], [-6, -7, -7, -6],
    [10, -3, 2, 0], [-9, -7, -2, 14], [0, -1, 2, -6], [5, 8, -7, -6],
    [14, 0, 5, 0], [-3, -2, 8, 11], [-2, 11, -1, 0], [0, 12, -3, -7],
    [12, -7, 8, -6], [-4, 10, 7, -4], [-3, 9, 6, 6], [8, 0, 7, 3],
    [-8, -3, -8, -11], [3, -1, 9, -3], [3, -12, 3, -2], [-5, -5, 4, -8],
    [3, 0, 1, 6], [8, 3, -3, -12], [-6, 4, -2, 8], [-9, -3, 7, 4],
    [8, 6, -1, 2], [8, 7, 1, 11], [-7, 10, -2, 1], [2, 10, -4, 9],
    [-3, -7, -3, -8], [-4, 11, 10, -10], [3, -2, 1, -2], [-2, 4, 2, 6],
    [1, 8, 0, 9], [-5, -1, 10, -2], [8, -4, 5, -4], [6, -7, 0, 11],
    [-1, -1, -1, -2], [1, -8, -11, -2], [5, 2, -1, 5], [-7, 5, 4, 3],
    [10, -10, 0, -8], [-8, 3, 1, -3], [-4, -3, 0, 1], [-4, 10, -3, 1],
    [-7, 7, 0, 3], [4, 11, -7, 8], [-1, 9, -5, 12], [-11, 6, 1, -2],
    [5, 11, -2, 7], [-10, 5, -2, -11], [3, -4, 5, 4], [4, 5, 6, -7],
    [-12, 6, -5, -6], [-8, -10, 5, -2], [-4, 3, 11, 6], [3, 7, 5, 0],
    [-9, 0, 0, 7], [-3, 6, -5, 7], [4, -13, 0, 3], [-6, -2, -10, -4],
    [-2, 1, -1, 1], [11, -4, 2, -3], [0, -8, 4, -6], [2, 6, -3, 9],
    [-1, -9, 8, -1], [4, -6, 0, 3], [-10, -9, -4, 10], [2, 6, 4, -9],
    [7, 11, -3, 5], [6, 11, 13, 0], [7, -2, 1, -1], [11, -4, 0, -4],
    [-3, -2, -7, 6], [0, -5, -1, 3], [5, 6, -6, 1], [4, 3, 2, 0],
    [-1, 2, -5, -6], [-1, 0, -10, -7], [-2, 2, 4, -2], [4, 8, 3, -3],
    [5, -3, -4, 3], [-1, 4, -4, -3], [1, 6, 5, -6], [3, -3, -7, 10],
    [0, 1, -1, -1], [4, -6, 9, 5], [-1, 1, 8, 0], [-1, 4, -2, 0],
    [3, -8, 0, 3], [3, 7, -6, 4], [3, -1, -6, 7], [-14, 3, 4, 0],
    [0, 1, 9, 3], [-6, 0, 6, 4], [7, 2, 7, 0], [-2, 5, 5, -4],
    [0, 5, 7, -8], [4, 7, -9, 2], [2, 0, -1, 3], [-1, 0, 5, 5],
    [-8, -2, 4, 1], [5, 1, 0, -6], [11, -7, 7, -6], [-10, 1, 8, 8],
    [9, 0, 2, 6], [0, -4, -5, -6], [6, -7, -2, 10], [7, -2, 2, 5],
    [-1, 2, -3, -3], [-4, 1, 6, 6], [7, 0, -2, -8], [-2, 1, -4, 2],
    [3, -1, -8, 2], [-12, 2, -2, 9], [8, -2, 0, 2], [-4, -8, 2, -7],
    [4, 3, -7, -4], [-4, 6, 6, -12], [0, 1, 7, 10], [-4, 11, -1, 7],
    [-2, 4, 5, -4], [4, 7, 8, 2], [-2, -12, -3, -2], [11, -6, 13, 3],
    [1, 3, -3, -13], [1, 6, 3, 9], [-4, 5, 5, -11], [-3, 0, -1, -1],
    [0, -11, 6, 3], [0, 3, -11, 8], [-1, -9, 4, -11], [-7, 8, -9, 1],
];

/// 256-bit binary descriptor; bit `i` is set when the first point of pair
/// `i` is darker than the second.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Descriptor(pub [u64; 4]);

impl Descriptor {
    pub fn hamming(&self, other: &Descriptor) -> u32 {
        self.0.iter().zip(&other.0).map(|(a, b)| (a ^ b).count_ones()).sum()
    }

    pub fn bit(&self, i: usize) -> bool {
        self.0[i / 64] >> (i % 64) & 1 == 1
    }

    /// 64 lowercase hex digits: the 32 descriptor bytes, least significant
    /// first.
    pub fn to_hex(&self) -> String {
        self.0.iter().map(|w| format!("{:016x}", w.swap_bytes())).collect()
    }

    pub fn from_hex(s: &str) -> Result<Self> {
        if s.len() != 64 || !s.is_ascii() {
            return Err(Error::InvalidParameter(format!(
                "descriptor hex must be 64 digits, got {}",
                s.len()
            )));
        }
        let mut words = [0u64; 4];
        for (i, w) in words.iter_mut().enumerate() {
            let v = u64::from_str_radix(&s[i * 16..i * 16 + 16], 16)
                .map_err(|e| Error::InvalidParameter(format!("bad descriptor hex: {e}")))?;
            *w = v.swap_bytes();
        }
        Ok(Descriptor(words))
    }
}

impl TryFrom<String> for Descriptor {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        Descriptor::from_hex(&s)
    }
}

impl From<Descriptor> for String {
    fn from(d: Descriptor) -> String {
        d.to_hex()
    }
}

/// Output of [`describe`]: surviving keypoints paired index-for-index with
/// their descriptors.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Described {
    pub keypoints: Vec<Keypoint>,
    pub descriptors: Vec<Descriptor>,
    /// Keypoints discarded for lying within [`BORDER`] pixels of an edge.
    pub dropped: usize,
}

/// Describes keypoints on a pre-smoothed image (see [`gaussian_blur`]).
pub fn describe_smoothed(smoothed: &[f32], width: usize, height: usize, kps: &[Keypoint]) -> Described {
    let mut out = Described::default();
    for kp in kps {
        let (x, y) = (kp.position.x.floor(), kp.position.y.floor());
        let inside = width > 2 * BORDER
            && height > 2 * BORDER
            && x >= BORDER as f64
            && y >= BORDER as f64
            && x <= (width - 1 - BORDER) as f64
            && y <= (height - 1 - BORDER) as f64;
        if !inside {
            out.dropped += 1;
            continue;
        }
        let (cx, cy) = (x as i64, y as i64);
        let (s, c) = kp.orientation.sin_cos();
        let at = |px: i8, py: i8| {
            let (px, py) = (px as f64, py as f64);
            let rx = (c * px - s * py).round() as i64;
            let ry = (s * px + c * py).round() as i64;
            smoothed[((cy + ry) as usize) * width + (cx + rx) as usize]
        };
        let mut words = [0u64; 4];
        for (i, p) in PATTERN.iter().enumerate() {
            if at(p[0], p[1]) < at(p[2], p[3]) {
                words[i / 64] |= 1 << (i % 64);
            }
        }
        out.keypoints.push(*kp);
        out.descriptors.push(Descriptor(words));
    }
    out
}

pub fn describe(img: &ImageGray, kps: &[Keypoint]) -> Described {
    describe_smoothed(&gaussian_blur(img), img.width(), img.height(), kps)
}
