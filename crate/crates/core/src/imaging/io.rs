//! PNG / PPM decoding and PNG encoding.

use std::fs;
use std::io::Cursor;
use std::path::Path;

use image::{DynamicImage, ImageFormat, ImageReader};

use super::{BinaryMask, ImageRgb};
use crate::error::{Error, Result};

fn decode(path: &Path) -> Result<DynamicImage> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let reader = ImageReader::new(Cursor::new(bytes))
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?;
    match reader.format() {
        Some(ImageFormat::Png) | Some(ImageFormat::Pnm) => {}
        Some(other) => return Err(Error::format(path, format!("{other:?} is not supported"))),
        None => return Err(Error::format(path, "unrecognized image format")),
    }
    reader.decode().map_err(|e| Error::format(path, e.to_string()))
}

fn reject_wide(path: &Path, img: &DynamicImage) -> Result<()> {
    match img {
        DynamicImage::ImageLuma8(_)
        | DynamicImage::ImageLumaA8(_)
        | DynamicImage::ImageRgb8(_)
        | DynamicImage::ImageRgba8(_) => Ok(()),
        other => Err(Error::format(
            path,
            format!("{:?} samples are not supported, expected 8-bit", other.color()),
        )),
    }
}

/// Decodes an 8-bit PNG or binary PPM. Gray sources are expanded to RGB and
/// alpha is dropped; 16-bit and float sources are rejected.
pub fn load_image(path: impl AsRef<Path>) -> Result<ImageRgb> {
    let path = path.as_ref();
    let img = decode(path)?;
    reject_wide(path, &img)?;
    let rgb = img.into_rgb8();
    let (w, h) = (rgb.width() as usize, rgb.height() as usize);
    ImageRgb::new(w, h, rgb.into_raw())
}

pub fn save_png(img: &ImageRgb, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let buf = image::RgbImage::from_raw(img.width() as u32, img.height() as u32, img.data().to_vec())
        .expect("buffer length checked at construction");
    buf.save_with_format(path, ImageFormat::Png).map_err(|e| match e {
        image::ImageError::IoError(io) => Error::io(path, io),
        other => Error::format(path, other.to_string()),
    })
}

/// Any nonzero sample loads as `true`.
pub fn load_mask(path: impl AsRef<Path>) -> Result<BinaryMask> {
    let path = path.as_ref();
    let img = decode(path)?;
    reject_wide(path, &img)?;
    let luma = img.into_rgb8();
    let (w, h) = (luma.width() as usize, luma.height() as usize);
    let bits = luma.pixels().map(|p| p.0.iter().any(|&c| c != 0)).collect();
    BinaryMask::from_bits(w, h, bits)
}

/// Writes an 8-bit grayscale PNG with 0 = false, 255 = true.
pub fn save_mask(mask: &BinaryMask, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let data = mask.bits().iter().map(|&b| if b { 255 } else { 0 }).collect();
    let buf = image::GrayImage::from_raw(mask.width() as u32, mask.height() as u32, data)
        .expect("mask dimensions are consistent");
    buf.save_with_format(path, ImageFormat::Png)
        .map_err(|e| Error::format(path, e.to_string()))
}

/// Reads a single-channel 8- or 16-bit PNG as integer labels.
pub fn load_label_image(path: impl AsRef<Path>) -> Result<(usize, usize, Vec<u32>)> {
    let path = path.as_ref();
    let img = decode(path)?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let labels = match img {
        DynamicImage::ImageLuma16(buf) => buf.into_raw().into_iter().map(u32::from).collect(),
        DynamicImage::ImageLuma8(buf) => buf.into_raw().into_iter().map(u32::from).collect(),
        other => {
            return Err(Error::format(
                path,
                format!("label maps must be single-channel, got {:?}", other.color()),
            ))
        }
    };
    Ok((w, h, labels))
}

/// Writes labels as a 16-bit grayscale PNG; labels above 65535 are rejected.
pub fn save_label_image(width: usize, height: usize, labels: &[u32], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if labels.len() != width * height {
        return Err(Error::InvalidDimensions {
            width,
            height,
            len: labels.len(),
        });
    }
    let data = labels
        .iter()
        .map(|&l| u16::try_from(l).map_err(|_| Error::InvalidParameter(format!("label {l} exceeds 16 bits"))))
        .collect::<Result<Vec<u16>>>()?;
    let buf = image::ImageBuffer::<image::Luma<u16>, _>::from_raw(width as u32, height as u32, data)
        .expect("length checked above");
    buf.save_with_format(path, ImageFormat::Png)
        .map_err(|e| Error::format(path, e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn white_png_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("w.png");
        let img = ImageRgb::filled(1, 1, [255, 255, 255]).unwrap();
        save_png(&img, &p).unwrap();
        assert_eq!(load_image(&p).unwrap(), img);
    }

    #[test]
    fn labels_round_trip_at_16_bits() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("l.png");
        let labels = vec![0, 1, 300, 65_535, 7, 2];
        save_label_image(3, 2, &labels, &p).unwrap();
        assert_eq!(load_label_image(&p).unwrap(), (3, 2, labels));
        assert!(save_label_image(1, 1, &[70_000], &p).is_err());
    }

    #[test]
    fn hand_written_ppm() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.ppm");
        let mut bytes = b"P6\n2 2\n255\n".to_vec();
        let px = [1u8, 2, 3, 4, 5, 6, 250, 251, 252, 0, 128, 255];
        bytes.extend_from_slice(&px);
        fs::write(&p, bytes).unwrap();
        let img = load_image(&p).unwrap();
        assert_eq!(img.dims(), (2, 2));
        assert_eq!(img.data(), &px);
    }

    #[test]
    fn truncated_png_is_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.png");
        let img = ImageRgb::from_fn(16, 16, |x, y| [x as u8, y as u8, 7]).unwrap();
        save_png(&img, &p).unwrap();
        let bytes = fs::read(&p).unwrap();
        fs::write(&p, &bytes[..bytes.len() / 2]).unwrap();
        assert!(matches!(load_image(&p), Err(Error::Format { .. })));
    }

    #[test]
    fn missing_file_is_io_error() {
        assert!(matches!(load_image("/nonexistent/x.png"), Err(Error::Io { .. })));
    }

    #[test]
    fn sixteen_bit_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("16.png");
        let buf = image::ImageBuffer::<image::Rgb<u16>, _>::from_raw(1, 1, vec![1000u16, 2, 3]).unwrap();
        buf.save(&p).unwrap();
        assert!(matches!(load_image(&p), Err(Error::Format { .. })));
    }

    #[test]
    fn mask_round_trip_and_nonzero_is_true() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.png");
        let gray = image::GrayImage::from_raw(3, 1, vec![0, 1, 255]).unwrap();
        gray.save(&p).unwrap();
        let m = load_mask(&p).unwrap();
        assert_eq!(m.bits(), &[false, true, true]);
        save_mask(&m, &p).unwrap();
        assert_eq!(load_mask(&p).unwrap(), m);
    }

    #[test]
    fn sixteen_bit_labels() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("l.png");
        let buf = image::ImageBuffer::<image::Luma<u16>, _>::from_raw(2, 1, vec![3u16, 40000]).unwrap();
        buf.save(&p).unwrap();
        let (w, h, l) = load_label_image(&p).unwrap();
        assert_eq!((w, h), (2, 1));
        assert_eq!(l, vec![3, 40000]);
    }
}
