//! Perspective warp of the ad into its placement quad and occlusion-aware
//! compositing.
//!
//! Pixel `(x, y)` covers the square `[x, x + 1) x [y, y + 1)`; the warp maps
//! pixel centres and a frame pixel belongs to the quad when its centre does.

use crate::error::{Error, Result};
use crate::geometry::{homography_from_quads, Homography, Quad};
use crate::imaging::{dilate, BinaryMask, ImageRgb};

/// Bilinear sample at continuous pixel-index coordinates, clamped to the
/// image edge.
pub fn sample_bilinear(img: &ImageRgb, x: f64, y: f64) -> [u8; 3] {
    let (w, h) = img.dims();
    let x = x.clamp(0.0, (w - 1) as f64);
    let y = y.clamp(0.0, (h - 1) as f64);
    let x0 = x.floor() as usize;
    let y0 = y.floor() as usize;
    let x1 = (x0 + 1).min(w - 1);
    let y1 = (y0 + 1).min(h - 1);
    let (fx, fy) = (x - x0 as f64, y - y0 as f64);
    let (p00, p10, p01, p11) = (
        img.pixel(x0, y0),
        img.pixel(x1, y0),
        img.pixel(x0, y1),
        img.pixel(x1, y1),
    );
    let channel = |c: usize| {
        let top = p00[c] as f64 * (1.0 - fx) + p10[c] as f64 * fx;
        let bottom = p01[c] as f64 * (1.0 - fx) + p11[c] as f64 * fx;
        (top * (1.0 - fy) + bottom * fy).round().clamp(0.0, 255.0) as u8
    };
    // explicit rather than array::map, which left a call per channel
    [channel(0), channel(1), channel(2)]
}

/// The transform taking the ad's outline onto `dst`.
pub fn placement_homography(ad: &ImageRgb, dst: &Quad) -> Result<Homography> {
    let src = Quad::from_rect(0.0, 0.0, ad.width() as f64, ad.height() as f64)?;
    homography_from_quads(&src, dst)
}

/// Renders the ad into a frame-sized layer. Pixels outside `dst` are black
/// and absent from the returned coverage mask.
pub fn warp_ad(ad: &ImageRgb, dst: &Quad, frame_size: (usize, usize)) -> Result<(ImageRgb, BinaryMask)> {
    let (fw, fh) = frame_size;
    if fw == 0 || fh == 0 {
        return Err(Error::InvalidDimensions {
            width: fw,
            height: fh,
            len: 0,
        });
    }
    let inv = placement_homography(ad, dst)?.inverse()?;
    let mut layer = ImageRgb::filled(fw, fh, [0, 0, 0])?;
    let mut mask = BinaryMask::new(fw, fh);

    let (x0, y0, x1, y1) = dst.bounds();
    let xs = (x0.floor().max(0.0) as usize)..(x1.ceil().clamp(0.0, fw as f64) as usize);
    let ys = (y0.floor().max(0.0) as usize)..(y1.ceil().clamp(0.0, fh as f64) as usize);
    for y in ys {
        for x in xs.clone() {
            let (cx, cy) = (x as f64 + 0.5, y as f64 + 0.5);
            if !dst.contains(crate::geometry::Point::new(cx, cy)) {
                continue;
            }
            let (sx, sy) = inv.apply_raw(cx, cy);
            if !sx.is_finite() || !sy.is_finite() {
                continue;
            }
            layer.put_pixel(x, y, sample_bilinear(ad, sx - 0.5, sy - 0.5));
            mask.set(x, y, true);
        }
    }
    Ok((layer, mask))
}

/// Takes the ad layer where it is covered and not occluded, the frame
/// everywhere else.
pub fn composite(
    frame: &ImageRgb,
    ad_layer: &ImageRgb,
    ad_mask: &BinaryMask,
    occlusion: &BinaryMask,
) -> Result<ImageRgb> {
    let dims = frame.dims();
    if ad_layer.dims() != dims {
        return Err(Error::DimensionMismatch {
            expected: dims,
            actual: ad_layer.dims(),
        });
    }
    ad_mask.expect_dims(dims)?;
    occlusion.expect_dims(dims)?;
    let mut out = frame.clone();
    let src = ad_layer.data();
    for (i, px) in out.data_mut().chunks_exact_mut(3).enumerate() {
        if ad_mask.bits()[i] && !occlusion.bits()[i] {
            px.copy_from_slice(&src[i * 3..i * 3 + 3]);
        }
    }
    Ok(out)
}

/// Warps `ad` into `dst` and composites it behind `occlusion` grown by
/// `occlusion_dilation` pixels.
pub fn place_ad(
    frame: &ImageRgb,
    ad: &ImageRgb,
    dst: &Quad,
    occlusion: &BinaryMask,
    occlusion_dilation: usize,
) -> Result<ImageRgb> {
    occlusion.expect_dims(frame.dims())?;
    let (layer, mask) = warp_ad(ad, dst, frame.dims())?;
    composite(frame, &layer, &mask, &dilate(occlusion, occlusion_dilation))
}
