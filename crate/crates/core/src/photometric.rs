//! Relighting the ad to match the scene around its placement.
//!
//! Four methods are provided: a luminance shift, Reinhard-style transfer of
//! all three LAB channels, transfer of the L channel only, and per-channel
//! histogram matching. The `_lab` variants return the transferred LAB buffer
//! before it is converted back and clamped to 8 bits.

use serde::{Deserialize, Serialize};

use crate::geometry::Quad;
use crate::imaging::{lab_to_rgb, rgb_to_lab, ImageLab, ImageRgb};

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ChannelStats {
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
}

impl ChannelStats {
    pub fn of(values: impl IntoIterator<Item = f64>) -> Self {
        // Welford
        let (mut n, mut mean, mut m2) = (0usize, 0.0, 0.0);
        for v in values {
            n += 1;
            let d = v - mean;
            mean += d / n as f64;
            m2 += d * (v - mean);
        }
        if n == 0 {
            return Self::default();
        }
        Self {
            mean,
            std: (m2 / n as f64).sqrt(),
        }
    }

    /// Stats for channel `c` of a LAB image, computed in two passes.
    pub fn of_lab(img: &ImageLab, c: usize) -> Self {
        let n = img.data().len() as f64;
        let mean = img.channel(c).sum::<f64>() / n;
        let var = img.channel(c).map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        Self { mean, std: var.sqrt() }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RelightMethod {
    Brightness,
    Color,
    #[default]
    LabLight,
    Histogram,
    None,
}

impl RelightMethod {
    pub const ALL: [RelightMethod; 5] = [
        RelightMethod::Brightness,
        RelightMethod::Color,
        RelightMethod::LabLight,
        RelightMethod::Histogram,
        RelightMethod::None,
    ];

    pub fn name(self) -> &'static str {
        match self {
            RelightMethod::Brightness => "brightness",
            RelightMethod::Color => "color",
            RelightMethod::LabLight => "lab_light",
            RelightMethod::Histogram => "histogram",
            RelightMethod::None => "none",
        }
    }
}

pub fn relight(method: RelightMethod, ad: &ImageRgb, background: &ImageRgb) -> ImageRgb {
    match method {
        RelightMethod::Brightness => match_brightness(ad, background),
        RelightMethod::Color => color_transfer(ad, background),
        RelightMethod::LabLight => lab_light_transfer(ad, background),
        RelightMethod::Histogram => histogram_match(ad, background),
        RelightMethod::None => ad.clone(),
    }
}

/// `g(x) = x + (B_bg - B_ad)` on every channel, where `B` is mean BT.601 luma.
pub fn match_brightness(ad: &ImageRgb, background: &ImageRgb) -> ImageRgb {
    match_brightness_with(ad, background, 1.0)
}

/// `g(x) = alpha * x + beta` with `beta = B_bg - alpha * B_ad`.
pub fn match_brightness_with(ad: &ImageRgb, background: &ImageRgb, alpha: f64) -> ImageRgb {
    let beta = background.mean_luma() - alpha * ad.mean_luma();
    let mut out = ad.clone();
    for v in out.data_mut() {
        *v = (alpha * *v as f64 + beta).round().clamp(0.0, 255.0) as u8;
    }
    out
}

fn transfer_channel(img: &mut ImageLab, c: usize, src: ChannelStats, dst: ChannelStats) {
    // a flat source has nothing to scale and collapses onto the target mean
    let scale = if src.std > 0.0 { dst.std / src.std } else { 0.0 };
    for p in img.data_mut() {
        p[c] = (p[c] - src.mean) * scale + dst.mean;
    }
}

fn transfer_lab(ad: &ImageRgb, background: &ImageRgb, channels: &[usize]) -> ImageLab {
    let mut lab = rgb_to_lab(ad);
    let bg = rgb_to_lab(background);
    for &c in channels {
        let src = ChannelStats::of_lab(&lab, c);
        let dst = ChannelStats::of_lab(&bg, c);
        transfer_channel(&mut lab, c, src, dst);
    }
    lab
}

pub fn color_transfer_lab(ad: &ImageRgb, background: &ImageRgb) -> ImageLab {
    transfer_lab(ad, background, &[0, 1, 2])
}

pub fn color_transfer(ad: &ImageRgb, background: &ImageRgb) -> ImageRgb {
    lab_to_rgb(&color_transfer_lab(ad, background))
}

/// Transfers L only; a and b are left untouched.
pub fn lab_light_transfer_lab(ad: &ImageRgb, background: &ImageRgb) -> ImageLab {
    transfer_lab(ad, background, &[0])
}

pub fn lab_light_transfer(ad: &ImageRgb, background: &ImageRgb) -> ImageRgb {
    lab_to_rgb(&lab_light_transfer_lab(ad, background))
}

fn channel_histogram(img: &ImageRgb, c: usize) -> [u64; 256] {
    let mut h = [0u64; 256];
    for p in img.pixels() {
        h[p[c] as usize] += 1;
    }
    h
}

fn cumulative(h: &[u64; 256]) -> [u64; 256] {
    let mut acc = 0;
    h.map(|v| {
        acc += v;
        acc
    })
}

/// Lookup table sending `v` to the smallest `u` with `Cdf_target(u) >= Cdf_source(v)`.
pub fn histogram_lut(source: &[u64; 256], target: &[u64; 256]) -> [u8; 256] {
    let cs = cumulative(source);
    let ct = cumulative(target);
    let (ns, nt) = (cs[255] as u128, ct[255] as u128);
    let mut lut = [255u8; 256];
    let mut u = 0usize;
    for v in 0..256 {
        // both CDFs are monotone, so u only moves forward
        while u < 255 && (ct[u] as u128) * ns < (cs[v] as u128) * nt {
            u += 1;
        }
        lut[v] = u as u8;
    }
    lut
}

/// Per-RGB-channel histogram matching onto the background.
pub fn histogram_match(ad: &ImageRgb, background: &ImageRgb) -> ImageRgb {
    let luts: [[u8; 256]; 3] =
        [0, 1, 2].map(|c| histogram_lut(&channel_histogram(ad, c), &channel_histogram(background, c)));
    let mut out = ad.clone();
    for px in out.data_mut().chunks_exact_mut(3) {
        for c in 0..3 {
            px[c] = luts[c][px[c] as usize];
        }
    }
    out
}

/// Which pixels of the frame supply the background statistics.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StatsRegion {
    #[default]
    Frame,
    /// The quad's bounding box scaled 2x about its centre, clipped to the frame.
    Neighborhood,
}

pub fn background_region(frame: &ImageRgb, quad: &Quad, region: StatsRegion) -> ImageRgb {
    match region {
        StatsRegion::Frame => frame.clone(),
        StatsRegion::Neighborhood => {
            let (x0, y0, x1, y1) = quad.bounds();
            let (w, h) = (x1 - x0, y1 - y0);
            let (cx, cy) = ((x0 + x1) / 2.0, (y0 + y1) / 2.0);
            let left = (cx - w).floor() as i64;
            let top = (cy - h).floor() as i64;
            let right = (cx + w).ceil() as i64;
            let bottom = (cy + h).ceil() as i64;
            frame
                .crop(left, top, right - left, bottom - top)
                .unwrap_or_else(|| frame.clone())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn noise(w: usize, h: usize, seed: u64) -> ImageRgb {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ImageRgb::from_fn(w, h, |_, _| [rng.random(), rng.random(), rng.random()]).unwrap()
    }

    fn textured(w: usize, h: usize, seed: u64, base: [u8; 3], spread: u8) -> ImageRgb {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ImageRgb::from_fn(w, h, |_, _| {
            base.map(|b| b.saturating_add(rng.random_range(0..=spread)))
        })
        .unwrap()
    }

    fn max_diff(a: &ImageRgb, b: &ImageRgb) -> u8 {
        a.data()
            .iter()
            .zip(b.data())
            .map(|(x, y)| x.abs_diff(*y))
            .max()
            .unwrap()
    }

    #[test]
    fn every_method_fixes_identical_inputs() {
        let img = noise(24, 16, 1);
        for m in RelightMethod::ALL {
            assert!(max_diff(&relight(m, &img, &img), &img) <= 1, "{}", m.name());
        }
        assert_eq!(histogram_match(&img, &img), img);
    }

    #[test]
    fn brightness_examples() {
        let ad = ImageRgb::filled(4, 4, [100, 100, 100]).unwrap();
        let bg = ImageRgb::filled(8, 8, [150, 150, 150]).unwrap();
        let out = match_brightness(&ad, &bg);
        assert!((out.mean_luma() - 150.0).abs() <= 2.0);
        assert_eq!(out.pixel(0, 0), [150, 150, 150]);

        let white = ImageRgb::filled(4, 4, [255, 255, 255]).unwrap();
        let dark = ImageRgb::filled(4, 4, [5, 5, 5]).unwrap();
        assert_eq!(match_brightness(&white, &dark).pixel(1, 1), [5, 5, 5]);
        let black = ImageRgb::filled(4, 4, [0, 0, 0]).unwrap();
        assert_eq!(match_brightness(&dark, &white).pixel(0, 0), [255, 255, 255]);
        assert_eq!(match_brightness(&black, &white).pixel(0, 0), [255, 255, 255]);
        let half = ImageRgb::from_fn(2, 1, |x, _| if x == 0 { [0; 3] } else { [250; 3] }).unwrap();
        // beta = 255 - 125 = 130: 250 saturates at 255
        assert_eq!(match_brightness(&half, &white).data(), &[130, 130, 130, 255, 255, 255]);
    }

    #[test]
    fn brightness_tracks_background_mean() {
        let ad = textured(32, 32, 3, [60, 70, 80], 60);
        let bg = textured(40, 40, 4, [110, 120, 100], 40);
        assert!((match_brightness(&ad, &bg).mean_luma() - bg.mean_luma()).abs() <= 2.0);
    }

    #[test]
    fn flat_gray_onto_flat_blue() {
        let ad = ImageRgb::filled(6, 6, [128, 128, 128]).unwrap();
        let bg = ImageRgb::filled(6, 6, [20, 40, 200]).unwrap();
        let out = color_transfer(&ad, &bg);
        assert!(out.pixels().all(|p| p == out.pixel(0, 0)));
        assert!(max_diff(&out, &bg) <= 1);
    }

    #[test]
    fn color_transfer_matches_background_stats() {
        let ad = textured(30, 20, 5, [30, 90, 40], 120);
        let bg = textured(25, 35, 6, [120, 60, 90], 100);
        let lab = color_transfer_lab(&ad, &bg);
        let target = rgb_to_lab(&bg);
        for c in 0..3 {
            let got = ChannelStats::of_lab(&lab, c);
            let want = ChannelStats::of_lab(&target, c);
            assert!(
                (got.mean - want.mean).abs() < 1e-3 && (got.std - want.std).abs() < 1e-3,
                "channel {c}"
            );
        }
    }

    #[test]
    fn lab_light_keeps_chroma() {
        let ad = textured(20, 20, 7, [180, 20, 30], 50);
        let bg = textured(20, 20, 8, [200, 200, 190], 40);
        let src = rgb_to_lab(&ad);
        let lab = lab_light_transfer_lab(&ad, &bg);
        for (a, b) in src.data().iter().zip(lab.data()) {
            assert_eq!((a[1], a[2]), (b[1], b[2]));
        }
        let l = ChannelStats::of_lab(&lab, 0);
        let want = ChannelStats::of_lab(&rgb_to_lab(&bg), 0);
        assert!((l.mean - want.mean).abs() < 1e-3 && (l.std - want.std).abs() < 1e-3);
        // still red
        let out = lab_light_transfer(&ad, &bg);
        assert!(out.pixels().filter(|p| p[0] > p[1] && p[0] > p[2]).count() as f64 > 0.95 * 400.0);
    }

    #[test]
    fn lab_light_keeps_gray_neutral() {
        let ad = ImageRgb::from_fn(16, 16, |x, y| [((x * 16 + y) % 256) as u8; 3]).unwrap();
        let bg = textured(16, 16, 9, [40, 60, 200], 30);
        let out = lab_light_transfer(&ad, &bg);
        for p in out.pixels() {
            assert!(p[0].abs_diff(p[1]) <= 1 && p[1].abs_diff(p[2]) <= 1, "{p:?}");
        }
    }

    #[test]
    fn histogram_binary_onto_uniform() {
        let ad = ImageRgb::from_fn(16, 16, |x, _| if x < 8 { [0; 3] } else { [255; 3] }).unwrap();
        let bg = ImageRgb::from_fn(256, 1, |x, _| [x as u8; 3]).unwrap();
        let out = histogram_match(&ad, &bg);
        assert_eq!(out.pixel(0, 0), [127; 3]);
        assert_eq!(out.pixel(15, 0), [255; 3]);
    }

    fn lut_oracle(src: &[u64; 256], dst: &[u64; 256]) -> [u8; 256] {
        let ns: u64 = src.iter().sum();
        let nt: u64 = dst.iter().sum();
        let mut lut = [0u8; 256];
        for v in 0..256 {
            let cs: u64 = src[..=v].iter().sum();
            lut[v] = (0..256)
                .find(|&u| {
                    let ct: u64 = dst[..=u].iter().sum();
                    ct as f64 / nt as f64 >= cs as f64 / ns as f64 - 1e-15
                })
                .unwrap_or(255) as u8;
        }
        lut
    }

    #[test]
    fn histogram_lut_matches_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let a = noise(rng.random_range(3..40), rng.random_range(3..40), rng.random());
            let b = textured(
                rng.random_range(3..40),
                rng.random_range(3..40),
                rng.random(),
                [rng.random_range(0..128); 3],
                127,
            );
            for c in 0..3 {
                let (ha, hb) = (channel_histogram(&a, c), channel_histogram(&b, c));
                let lut = histogram_lut(&ha, &hb);
                assert_eq!(lut, lut_oracle(&ha, &hb));
                assert!(lut.windows(2).all(|w| w[0] <= w[1]));
            }
        }
    }

    fn cdf_gap(out: &ImageRgb, bg: &ImageRgb, c: usize) -> f64 {
        let co = cumulative(&channel_histogram(out, c));
        let cb = cumulative(&channel_histogram(bg, c));
        (0..256)
            .map(|u| (co[u] as f64 / co[255] as f64 - cb[u] as f64 / cb[255] as f64).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn histogram_cdf_within_quantization_bound() {
        // every value appears equally often, so no ad bin exceeds 1/256
        let ad = ImageRgb::from_fn(256, 4, |x, y| [x as u8, (x * 7 + y) as u8, (255 - x) as u8]).unwrap();
        let n = (256 * 4) as f64;
        for seed in 0..10 {
            let bg = textured(50, 30, seed, [30, 60, 90], 120);
            let out = histogram_match(&ad, &bg);
            for c in 0..3 {
                assert!(
                    cdf_gap(&out, &bg, c) <= 1.0 / 256.0 + 1.0 / n,
                    "seed {seed} channel {c}"
                );
            }
        }
    }

    proptest::proptest! {
        #[test]
        fn histogram_gap_bounded_by_largest_ad_bin(seed in 0u64..1000, base in 0u8..128, spread in 1u8..127) {
            let ad = textured(20, 20, seed, [base; 3], spread);
            let bg = noise(30, 30, seed + 1);
            let out = histogram_match(&ad, &bg);
            for c in 0..3 {
                let h = channel_histogram(&ad, c);
                let max_bin = *h.iter().max().unwrap() as f64 / 400.0;
                proptest::prop_assert!(cdf_gap(&out, &bg, c) <= max_bin + 1e-12);
            }
        }
    }

    #[test]
    fn neighborhood_is_doubled_bbox() {
        let frame = noise(100, 80, 2);
        let q = Quad::from_rect(40.0, 30.0, 20.0, 10.0).unwrap();
        let r = background_region(&frame, &q, StatsRegion::Neighborhood);
        assert_eq!(r.dims(), (40, 20));
        assert_eq!(r.pixel(0, 0), frame.pixel(30, 25));
        let edge = Quad::from_rect(0.0, 0.0, 20.0, 10.0).unwrap();
        assert_eq!(
            background_region(&frame, &edge, StatsRegion::Neighborhood).dims(),
            (30, 15)
        );
    }

    #[test]
    fn method_names_round_trip() {
        for m in RelightMethod::ALL {
            let s = serde_json::to_string(&m).unwrap();
            assert_eq!(s, format!("\"{}\"", m.name()));
        }
    }
}
