//! Raster types shared by every stage: 8-bit RGB and gray images, CIELAB
//! float images, binary masks and 256-bin cumulative distributions.

mod color;
mod io;
mod morph;

pub use color::{lab_to_rgb, lab_to_srgb_pixel, rgb_to_lab, srgb_to_lab_pixel};
pub use io::{load_image, load_label_image, load_mask, save_label_image, save_mask, save_png};
pub use morph::dilate;

use crate::error::{Error, Result};

fn check_dims(width: usize, height: usize, len: usize, channels: usize) -> Result<()> {
    if width == 0 || height == 0 || width.checked_mul(height).and_then(|n| n.checked_mul(channels)) != Some(len) {
        return Err(Error::InvalidDimensions { width, height, len });
    }
    Ok(())
}

/// Row-major interleaved 8-bit RGB image.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ImageRgb {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl ImageRgb {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        check_dims(width, height, data.len(), 3)?;
        Ok(Self { width, height, data })
    }

    pub fn filled(width: usize, height: usize, rgb: [u8; 3]) -> Result<Self> {
        check_dims(width, height, width * height * 3, 3)?;
        let data = rgb.iter().copied().cycle().take(width * height * 3).collect();
        Ok(Self { width, height, data })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> [u8; 3]) -> Result<Self> {
        check_dims(width, height, width * height * 3, 3)?;
        let mut data = Vec::with_capacity(width * height * 3);
        for y in 0..height {
            for x in 0..width {
                data.extend_from_slice(&f(x, y));
            }
        }
        Ok(Self { width, height, data })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [u8] {
        &mut self.data
    }

    pub fn into_raw(self) -> Vec<u8> {
        self.data
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    #[inline]
    pub fn put_pixel(&mut self, x: usize, y: usize, rgb: [u8; 3]) {
        let i = (y * self.width + x) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    pub fn pixels(&self) -> impl Iterator<Item = [u8; 3]> + '_ {
        self.data.chunks_exact(3).map(|c| [c[0], c[1], c[2]])
    }

    /// ITU-R BT.601 luma, rounded to the nearest integer.
    pub fn to_gray(&self) -> ImageGray {
        let data = self
            .pixels()
            .map(|p| luma_601(p).round().clamp(0.0, 255.0) as u8)
            .collect();
        ImageGray {
            width: self.width,
            height: self.height,
            data,
        }
    }

    /// Mean BT.601 luma on the 0..255 scale.
    pub fn mean_luma(&self) -> f64 {
        self.pixels().map(luma_601).sum::<f64>() / (self.width * self.height) as f64
    }

    /// Copy of the rectangle clipped to the image; `None` when the clip is empty.
    pub fn crop(&self, x: i64, y: i64, w: i64, h: i64) -> Option<ImageRgb> {
        let x0 = x.clamp(0, self.width as i64) as usize;
        let y0 = y.clamp(0, self.height as i64) as usize;
        let x1 = (x + w).clamp(0, self.width as i64) as usize;
        let y1 = (y + h).clamp(0, self.height as i64) as usize;
        if x1 <= x0 || y1 <= y0 {
            return None;
        }
        let mut data = Vec::with_capacity((x1 - x0) * (y1 - y0) * 3);
        for row in y0..y1 {
            let start = (row * self.width + x0) * 3;
            data.extend_from_slice(&self.data[start..start + (x1 - x0) * 3]);
        }
        Some(ImageRgb {
            width: x1 - x0,
            height: y1 - y0,
            data,
        })
    }
}

#[inline]
pub(crate) fn luma_601(p: [u8; 3]) -> f64 {
    0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64
}

/// Row-major 8-bit luminance image.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ImageGray {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl ImageGray {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        check_dims(width, height, data.len(), 1)?;
        Ok(Self { width, height, data })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> u8) -> Result<Self> {
        check_dims(width, height, width * height, 1)?;
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Ok(Self { width, height, data })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.data[y * self.width + x]
    }
}

/// CIELAB image with one `[L, a, b]` triple per pixel.
///
/// Channel values are not range-checked: statistical transfers may move them
/// outside the gamut and the conversion back to RGB clamps.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageLab {
    width: usize,
    height: usize,
    data: Vec<[f64; 3]>,
}

impl ImageLab {
    pub fn new(width: usize, height: usize, data: Vec<[f64; 3]>) -> Result<Self> {
        check_dims(width, height, data.len(), 1)?;
        if data.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("non-finite Lab value".into()));
        }
        Ok(Self { width, height, data })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[[f64; 3]] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [[f64; 3]] {
        &mut self.data
    }

    pub fn channel(&self, c: usize) -> impl Iterator<Item = f64> + '_ {
        self.data.iter().map(move |p| p[c])
    }
}

/// One boolean per pixel, `true` meaning selected / foreground.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            bits: vec![false; width * height],
        }
    }

    pub fn full(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            bits: vec![true; width * height],
        }
    }

    pub fn from_bits(width: usize, height: usize, bits: Vec<bool>) -> Result<Self> {
        check_dims(width, height, bits.len(), 1)?;
        Ok(Self { width, height, bits })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut bits = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                bits.push(f(x, y));
            }
        }
        Self { width, height, bits }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    /// Like [`get`](Self::get) but `false` outside the mask.
    #[inline]
    pub fn get_checked(&self, x: i64, y: i64) -> bool {
        x >= 0 && y >= 0 && (x as usize) < self.width && (y as usize) < self.height && self.get(x as usize, y as usize)
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.bits[y * self.width + x] = v;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    /// Errors unless `self` has the given dimensions.
    pub fn expect_dims(&self, dims: (usize, usize)) -> Result<()> {
        if self.dims() != dims {
            return Err(Error::DimensionMismatch {
                expected: dims,
                actual: self.dims(),
            });
        }
        Ok(())
    }
}

/// Empirical cumulative distribution over the 256 intensity levels.
#[derive(Clone, Debug, PartialEq)]
pub struct Cdf {
    values: [f64; 256],
    counts: [u64; 256],
    total: u64,
}

impl Cdf {
    /// `values[k]` is the fraction of samples `<= k`.
    pub fn from_samples(samples: impl IntoIterator<Item = u8>) -> Result<Self> {
        let mut hist = [0u64; 256];
        for s in samples {
            hist[s as usize] += 1;
        }
        let total: u64 = hist.iter().sum();
        if total == 0 {
            return Err(Error::EmptyImage);
        }
        let mut counts = [0u64; 256];
        let mut acc = 0u64;
        for (k, h) in hist.iter().enumerate() {
            acc += h;
            counts[k] = acc;
        }
        let mut values = [0.0; 256];
        for (v, c) in values.iter_mut().zip(counts.iter()) {
            *v = *c as f64 / total as f64;
        }
        Ok(Self { values, counts, total })
    }

    pub fn values(&self) -> &[f64; 256] {
        &self.values
    }

    /// Cumulative counts, `cumulative()[k]` = number of samples `<= k`.
    pub fn cumulative(&self) -> &[u64; 256] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    /// Largest absolute difference between two distributions.
    pub fn sup_distance(&self, other: &Cdf) -> f64 {
        self.values
            .iter()
            .zip(other.values.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

pub fn compute_cdf(img: &ImageGray) -> Result<Cdf> {
    Cdf::from_samples(img.data().iter().copied())
}

/// Separable Gaussian smoothing with sigma 1.4 over a 5-tap kernel; edges
/// are clamped.
pub fn gaussian_blur(img: &ImageGray) -> Vec<f32> {
    const K: [f32; 5] = [0.10218, 0.22964, 0.33636, 0.22964, 0.10218];
    let (w, h) = img.dims();
    let src: Vec<f32> = img.data().iter().map(|&v| v as f32).collect();
    let mut tmp = vec![0.0f32; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (k, kv) in K.iter().enumerate() {
                let xx = (x as i64 + k as i64 - 2).clamp(0, w as i64 - 1) as usize;
                acc += kv * src[y * w + xx];
            }
            tmp[y * w + x] = acc;
        }
    }
    let mut out = vec![0.0f32; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (k, kv) in K.iter().enumerate() {
                let yy = (y as i64 + k as i64 - 2).clamp(0, h as i64 - 1) as usize;
                acc += kv * tmp[yy * w + x];
            }
            out[y * w + x] = acc;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn cdf_of_constant_image_is_one_everywhere() {
        let img = ImageGray::new(4, 3, vec![0; 12]).unwrap();
        let cdf = compute_cdf(&img).unwrap();
        assert!(cdf.values().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn cdf_two_point() {
        let img = ImageGray::new(2, 1, vec![0, 255]).unwrap();
        let cdf = compute_cdf(&img).unwrap();
        assert!(cdf.values()[..255].iter().all(|&v| v == 0.5));
        assert_eq!(cdf.values()[255], 1.0);
    }

    #[test]
    fn cdf_matches_counting_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let data: Vec<u8> = (0..256).map(|_| rng.random()).collect();
        let img = ImageGray::new(16, 16, data.clone()).unwrap();
        let cdf = compute_cdf(&img).unwrap();
        for k in 0..256usize {
            let n = data.iter().filter(|&&v| v as usize <= k).count();
            assert_eq!(cdf.values()[k], n as f64 / 256.0);
        }
    }

    #[test]
    fn bad_dimensions_rejected() {
        assert!(ImageRgb::new(2, 2, vec![0; 11]).is_err());
        assert!(ImageGray::new(0, 5, vec![]).is_err());
    }

    #[test]
    fn gray_uses_bt601() {
        let img = ImageRgb::new(1, 1, vec![255, 0, 0]).unwrap();
        assert_eq!(img.to_gray().data(), &[76]);
    }

    #[test]
    fn crop_clips() {
        let img = ImageRgb::from_fn(4, 4, |x, y| [x as u8, y as u8, 0]).unwrap();
        let c = img.crop(-1, 2, 3, 5).unwrap();
        assert_eq!(c.dims(), (2, 2));
        assert_eq!(c.pixel(1, 0), [1, 2, 0]);
        assert!(img.crop(10, 10, 2, 2).is_none());
    }
}
