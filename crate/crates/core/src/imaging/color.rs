//! sRGB (D65) <-> CIELAB.

use std::sync::OnceLock;

use nalgebra::Matrix3;

use super::{ImageLab, ImageRgb};

const SRGB_TO_XYZ: [[f64; 3]; 3] = [
    [0.4124564, 0.3575761, 0.1804375],
    [0.2126729, 0.7151522, 0.0721750],
    [0.0193339, 0.1191920, 0.9503041],
];

const DELTA: f64 = 6.0 / 29.0;

// buckets narrower than the smallest code step in linear light
// (1 / (255 * 12.92)), so a bucket spans at most two codes
const ENCODE_BUCKETS: usize = 4096;

struct Tables {
    decode: [f64; 256],
    // encode_cut[c] is the linear value at which the 8-bit code rounds up to
    // c + 1; the last entry is a sentinel no value reaches
    encode_cut: [f64; 256],
    // encode_floor[i] is the code of linear value i / ENCODE_BUCKETS
    encode_floor: [u8; ENCODE_BUCKETS + 1],
    xyz_to_srgb: [[f64; 3]; 3],
    white: [f64; 3],
}

fn tables() -> &'static Tables {
    static TABLES: OnceLock<Tables> = OnceLock::new();
    TABLES.get_or_init(|| {
        let mut decode = [0.0; 256];
        for (c, d) in decode.iter_mut().enumerate() {
            *d = srgb_decode(c as f64 / 255.0);
        }
        let mut encode_cut = [f64::INFINITY; 256];
        for (c, t) in encode_cut.iter_mut().take(255).enumerate() {
            *t = srgb_decode((c as f64 + 0.5) / 255.0);
        }
        let mut encode_floor = [0u8; ENCODE_BUCKETS + 1];
        for (i, f) in encode_floor.iter_mut().enumerate() {
            let lin = i as f64 / ENCODE_BUCKETS as f64;
            *f = encode_cut.partition_point(|&cut| lin >= cut) as u8;
        }
        let m = Matrix3::from_fn(|r, c| SRGB_TO_XYZ[r][c]);
        let inv = m.try_inverse().expect("sRGB matrix is invertible");
        let xyz_to_srgb = [
            [inv[(0, 0)], inv[(0, 1)], inv[(0, 2)]],
            [inv[(1, 0)], inv[(1, 1)], inv[(1, 2)]],
            [inv[(2, 0)], inv[(2, 1)], inv[(2, 2)]],
        ];
        // white point = image of RGB (1,1,1), so neutral grays get a = b = 0
        let white = [0, 1, 2].map(|r| SRGB_TO_XYZ[r].iter().sum::<f64>());
        Tables {
            decode,
            encode_cut,
            encode_floor,
            xyz_to_srgb,
            white,
        }
    })
}

fn srgb_decode(v: f64) -> f64 {
    if v <= 0.04045 {
        v / 12.92
    } else {
        ((v + 0.055) / 1.055).powf(2.4)
    }
}

/// Cube root of a positive normal number: bit-level seed, then two Halley
/// steps (cubic convergence from a few percent to below 1e-15).
#[inline]
fn cbrt_positive(t: f64) -> f64 {
    let mut y = f64::from_bits(t.to_bits() / 3 + 0x2a9f_7893_782d_a1ce);
    for _ in 0..2 {
        let y3 = y * y * y;
        y *= (y3 + 2.0 * t) / (2.0 * y3 + t);
    }
    y
}

#[inline]
fn lab_f(t: f64) -> f64 {
    if t > DELTA * DELTA * DELTA {
        cbrt_positive(t)
    } else {
        t / (3.0 * DELTA * DELTA) + 4.0 / 29.0
    }
}

#[inline]
fn lab_f_inv(t: f64) -> f64 {
    // both branches evaluated so the choice compiles to a select
    let (cube, linear) = (t * t * t, 3.0 * DELTA * DELTA * (t - 4.0 / 29.0));
    if t > DELTA {
        cube
    } else {
        linear
    }
}

#[inline]
fn encode_channel(tables: &Tables, linear: f64) -> u8 {
    // NaN fails the comparison and lands on 0; branch-free for speed
    let linear = if linear > 0.0 { linear.min(1.0) } else { 0.0 };
    let code = tables.encode_floor[(linear * ENCODE_BUCKETS as f64) as usize] as usize;
    code as u8 + (linear >= tables.encode_cut[code]) as u8
}

pub fn srgb_to_lab_pixel(rgb: [u8; 3]) -> [f64; 3] {
    to_lab(tables(), rgb)
}

#[inline]
fn to_lab(t: &Tables, rgb: [u8; 3]) -> [f64; 3] {
    // explicit rows: array::map left a non-inlined call per channel
    let lin = [
        t.decode[rgb[0] as usize],
        t.decode[rgb[1] as usize],
        t.decode[rgb[2] as usize],
    ];
    let row = |r: usize| SRGB_TO_XYZ[r][0] * lin[0] + SRGB_TO_XYZ[r][1] * lin[1] + SRGB_TO_XYZ[r][2] * lin[2];
    let xyz = [row(0), row(1), row(2)];
    let fx = lab_f(xyz[0] / t.white[0]);
    let fy = lab_f(xyz[1] / t.white[1]);
    let fz = lab_f(xyz[2] / t.white[2]);
    [116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)]
}

/// Out-of-gamut colors are clamped per channel in linear RGB.
pub fn lab_to_srgb_pixel(lab: [f64; 3]) -> [u8; 3] {
    to_srgb(tables(), lab)
}

#[inline]
fn to_srgb(t: &Tables, lab: [f64; 3]) -> [u8; 3] {
    let fy = (lab[0] + 16.0) / 116.0;
    let fx = fy + lab[1] / 500.0;
    let fz = fy - lab[2] / 200.0;
    let xyz = [
        lab_f_inv(fx) * t.white[0],
        lab_f_inv(fy) * t.white[1],
        lab_f_inv(fz) * t.white[2],
    ];
    let m = &t.xyz_to_srgb;
    let row = |r: usize| encode_channel(t, m[r][0] * xyz[0] + m[r][1] * xyz[1] + m[r][2] * xyz[2]);
    [row(0), row(1), row(2)]
}

pub fn rgb_to_lab(img: &ImageRgb) -> ImageLab {
    let t = tables();
    let data = img.pixels().map(|p| to_lab(t, p)).collect();
    ImageLab {
        width: img.width(),
        height: img.height(),
        data,
    }
}

pub fn lab_to_rgb(img: &ImageLab) -> ImageRgb {
    let t = tables();
    let mut data = vec![0u8; img.data().len() * 3];
    for (out, &p) in data.chunks_exact_mut(3).zip(img.data()) {
        out.copy_from_slice(&to_srgb(t, p));
    }
    ImageRgb {
        width: img.width(),
        height: img.height(),
        data,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn black_and_white_points() {
        let black = srgb_to_lab_pixel([0, 0, 0]);
        assert_eq!(black[0], 0.0);
        assert!(black[1].abs() < 1e-9 && black[2].abs() < 1e-9);
        let white = srgb_to_lab_pixel([255, 255, 255]);
        assert!((white[0] - 100.0).abs() < 1e-9);
        assert!(white[1].abs() <= 0.5 && white[2].abs() <= 0.5);
        assert_eq!(lab_to_srgb_pixel([100.0, 0.0, 0.0]), [255, 255, 255]);
    }

    #[test]
    fn mid_gray_lightness() {
        // reference CIELAB formula evaluated independently: L*(119) = 50.0344388
        let lab = srgb_to_lab_pixel([119, 119, 119]);
        assert!((lab[0] - 50.034_438_8).abs() < 0.1);
    }

    #[test]
    fn out_of_gamut_clamps_without_wraparound() {
        // independent evaluation gives linear RGB (2.419, -0.484, 0.223) -> (255, 0, 130)
        assert_eq!(lab_to_srgb_pixel([50.0, 200.0, 0.0]), [255, 0, 130]);
    }

    #[test]
    fn round_trip_random_pixels() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut worst = 0i32;
        for _ in 0..10_000 {
            let p: [u8; 3] = rng.random();
            let q = lab_to_srgb_pixel(srgb_to_lab_pixel(p));
            for c in 0..3 {
                worst = worst.max((p[c] as i32 - q[c] as i32).abs());
            }
        }
        assert!(worst <= 1, "max channel error {worst}");
    }

    #[test]
    fn fast_cube_root_matches_libm() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100_000 {
            let t: f64 = rng.random_range(DELTA * DELTA * DELTA..4.0);
            assert!((cbrt_positive(t) - t.cbrt()).abs() <= 1e-14 * t.cbrt(), "t {t}");
        }
    }

    #[test]
    fn encoder_agrees_with_binary_search() {
        let t = tables();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let cuts = t.encode_cut[..255]
            .iter()
            .copied()
            .chain(t.encode_cut[..255].iter().map(|c| c.next_down()));
        for lin in cuts.chain((0..100_000).map(|_| rng.random_range(-0.1..1.1))) {
            let search = if lin > 0.0 {
                t.encode_cut[..255].partition_point(|&cut| lin >= cut) as u8
            } else {
                0
            };
            assert_eq!(encode_channel(t, lin), search, "lin {lin}");
        }
        assert_eq!(encode_channel(t, f64::NAN), 0);
        assert_eq!(encode_channel(t, f64::INFINITY), 255);
    }

    #[test]
    fn encoder_agrees_with_direct_rounding() {
        let t = tables();
        for i in 0..=10_000 {
            let lin = i as f64 / 10_000.0;
            let v = if lin <= 0.0031308 {
                12.92 * lin
            } else {
                1.055 * lin.powf(1.0 / 2.4) - 0.055
            };
            let direct = (v * 255.0).round() as i32;
            assert!((encode_channel(t, lin) as i32 - direct).abs() <= 0, "lin {lin}");
        }
    }
}
