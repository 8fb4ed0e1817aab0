//! 8-bit RGBA raster helpers: bilinear resampling, file I/O and conversion
//! to network input planes.

use std::path::Path;

use image::{GrayImage, ImageReader, Luma, Rgba, RgbaImage};
use ndarray::Array3;

use crate::error::{Error, Result};

/// Sticker bitmap together with whether the source carried an alpha channel.
/// Alpha-less sources are stored with a constant alpha of 255.
#[derive(Debug, Clone, PartialEq)]
pub struct Sticker {
    pub image: RgbaImage,
    pub has_alpha: bool,
}

impl Sticker {
    pub fn new(image: RgbaImage, has_alpha: bool) -> Result<Self> {
        if !has_alpha && image.pixels().any(|p| p[3] != 255) {
            return Err(Error::input("sticker without alpha must have a constant 255 alpha plane"));
        }
        if image.width() == 0 || image.height() == 0 {
            return Err(Error::input("sticker image is empty"));
        }
        Ok(Sticker { image, has_alpha })
    }

    pub fn dims(&self) -> (u32, u32) {
        self.image.dimensions()
    }
}

/// Rounds half away from zero and saturates to a byte.
pub fn to_byte(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

/// Source sampling position and weight for one destination column or row,
/// using pixel-center alignment: `s = (d + 0.5)·src/dst − 0.5`, clamped.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Tap {
    pub i0: usize,
    pub i1: usize,
    pub frac: f64,
}

pub(crate) fn bilinear_taps(src: u32, dst: u32) -> Vec<Tap> {
    let max = (src - 1) as f64;
    (0..dst)
        .map(|d| {
            let s = ((d as f64 + 0.5) * src as f64 / dst as f64 - 0.5).clamp(0.0, max);
            let i0 = s.floor() as usize;
            Tap {
                i0,
                i1: (i0 + 1).min(src as usize - 1),
                frac: s - i0 as f64,
            }
        })
        .collect()
}

#[inline]
pub(crate) fn lerp4(img: &RgbaImage, tx: Tap, ty: Tap) -> [f64; 4] {
    let p00 = img.get_pixel(tx.i0 as u32, ty.i0 as u32);
    let p10 = img.get_pixel(tx.i1 as u32, ty.i0 as u32);
    let p01 = img.get_pixel(tx.i0 as u32, ty.i1 as u32);
    let p11 = img.get_pixel(tx.i1 as u32, ty.i1 as u32);
    let mut out = [0.0; 4];
    for c in 0..4 {
        let top = (1.0 - tx.frac) * p00[c] as f64 + tx.frac * p10[c] as f64;
        let bot = (1.0 - tx.frac) * p01[c] as f64 + tx.frac * p11[c] as f64;
        out[c] = (1.0 - ty.frac) * top + ty.frac * bot;
    }
    out
}

/// Bilinear resize to `width`×`height`, rounded back to bytes.
pub fn resize_bilinear(img: &RgbaImage, width: u32, height: u32) -> RgbaImage {
    let xs = bilinear_taps(img.width(), width);
    let ys = bilinear_taps(img.height(), height);
    RgbaImage::from_fn(width, height, |x, y| {
        let v = lerp4(img, xs[x as usize], ys[y as usize]);
        Rgba([to_byte(v[0]), to_byte(v[1]), to_byte(v[2]), to_byte(v[3])])
    })
}

pub fn resize_gray_bilinear(img: &GrayImage, width: u32, height: u32) -> GrayImage {
    let xs = bilinear_taps(img.width(), width);
    let ys = bilinear_taps(img.height(), height);
    GrayImage::from_fn(width, height, |x, y| {
        let (tx, ty) = (xs[x as usize], ys[y as usize]);
        let g = |i: usize, j: usize| img.get_pixel(i as u32, j as u32)[0] as f64;
        let top = (1.0 - tx.frac) * g(tx.i0, ty.i0) + tx.frac * g(tx.i1, ty.i0);
        let bot = (1.0 - tx.frac) * g(tx.i0, ty.i1) + tx.frac * g(tx.i1, ty.i1);
        Luma([to_byte((1.0 - ty.frac) * top + ty.frac * bot)])
    })
}

/// Fits `img` inside a `size`×`size` transparent canvas preserving aspect ratio.
pub fn letterbox(img: &RgbaImage, size: u32) -> RgbaImage {
    let (w, h) = img.dimensions();
    let scale = size as f64 / w.max(h) as f64;
    let nw = ((w as f64 * scale).round() as u32).clamp(1, size);
    let nh = ((h as f64 * scale).round() as u32).clamp(1, size);
    let resized = resize_bilinear(img, nw, nh);
    let mut canvas = RgbaImage::new(size, size);
    image::imageops::replace(&mut canvas, &resized, ((size - nw) / 2) as i64, ((size - nh) / 2) as i64);
    canvas
}

/// Crops a `size`×`size` window at `(x0, y0)`.
pub fn crop(img: &RgbaImage, x0: u32, y0: u32, size: u32) -> RgbaImage {
    image::imageops::crop_imm(img, x0, y0, size, size).to_image()
}

/// Channel-planar scalars in `[0, 1]`, `(4, H, W)`.
pub fn rgba_planes(img: &RgbaImage) -> Array3<f64> {
    let (w, h) = img.dimensions();
    let mut out = Array3::<f64>::zeros((4, h as usize, w as usize));
    for (x, y, p) in img.enumerate_pixels() {
        for c in 0..4 {
            out[[c, y as usize, x as usize]] = p[c] as f64 / 255.0;
        }
    }
    out
}

/// Foreground estimate for hosts without a supplied mask: pixels whose
/// luminance differs from the image median by more than 1.5 standard
/// deviations (at least 24 levels).
pub fn luminance_contrast_mask(img: &RgbaImage) -> GrayImage {
    let lum: Vec<f64> = img
        .pixels()
        .map(|p| 0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64)
        .collect();
    let mut sorted = lum.clone();
    sorted.sort_by(f64::total_cmp);
    let median = sorted[sorted.len() / 2];
    let mean = lum.iter().sum::<f64>() / lum.len() as f64;
    let std = (lum.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / lum.len() as f64).sqrt();
    let threshold = (1.5 * std).max(24.0);
    let (w, h) = img.dimensions();
    GrayImage::from_fn(w, h, |x, y| {
        let v = lum[(y * w + x) as usize];
        Luma([if (v - median).abs() > threshold { 255 } else { 0 }])
    })
}

/// Loads any supported raster as RGBA, reporting whether it had alpha.
pub fn load_rgba(path: &Path) -> Result<(RgbaImage, bool)> {
    let img = ImageReader::open(path)?.with_guessed_format()?.decode()?;
    let has_alpha = img.color().has_alpha();
    Ok((img.to_rgba8(), has_alpha))
}

pub fn load_sticker(path: &Path) -> Result<Sticker> {
    let (image, has_alpha) = load_rgba(path)?;
    Sticker::new(image, has_alpha)
}

pub fn load_gray(path: &Path) -> Result<GrayImage> {
    Ok(ImageReader::open(path)?.with_guessed_format()?.decode()?.to_luma8())
}

/// Writes a sticker as RGBA, or RGB when it has no alpha channel.
pub fn save_sticker(sticker: &Sticker, path: &Path) -> Result<()> {
    if sticker.has_alpha {
        sticker.image.save(path)?;
    } else {
        image::DynamicImage::ImageRgba8(sticker.image.clone()).to_rgb8().save(path)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_resize_is_exact() {
        let img = RgbaImage::from_fn(5, 3, |x, y| Rgba([(x * 40) as u8, (y * 70) as u8, 9, 200]));
        assert_eq!(resize_bilinear(&img, 5, 3), img);
    }

    #[test]
    fn upsampling_a_constant_stays_constant() {
        let img = RgbaImage::from_pixel(2, 2, Rgba([10, 20, 30, 40]));
        let up = resize_bilinear(&img, 7, 9);
        assert!(up.pixels().all(|p| *p == Rgba([10, 20, 30, 40])));
    }

    #[test]
    fn letterbox_keeps_aspect() {
        let img = RgbaImage::from_pixel(40, 20, Rgba([255, 0, 0, 255]));
        let lb = letterbox(&img, 16);
        assert_eq!(lb.get_pixel(8, 8)[3], 255);
        assert_eq!(lb.get_pixel(8, 0)[3], 0);
        assert_eq!(lb.get_pixel(0, 8)[3], 255);
    }

    #[test]
    fn byte_rounding_is_half_away_from_zero() {
        assert_eq!(to_byte(127.5), 128);
        assert_eq!(to_byte(127.49), 127);
        assert_eq!(to_byte(-3.0), 0);
        assert_eq!(to_byte(300.0), 255);
    }

    #[test]
    fn alpha_free_sticker_requires_opaque_plane() {
        let img = RgbaImage::from_pixel(2, 2, Rgba([0, 0, 0, 10]));
        assert!(Sticker::new(img.clone(), false).is_err());
        assert!(Sticker::new(img, true).is_ok());
    }

    #[test]
    fn contrast_mask_finds_a_bright_square() {
        let mut img = RgbaImage::from_pixel(20, 20, Rgba([40, 40, 40, 255]));
        for y in 5..10 {
            for x in 5..10 {
                img.put_pixel(x, y, Rgba([250, 250, 250, 255]));
            }
        }
        let m = luminance_contrast_mask(&img);
        assert_eq!(m.get_pixel(7, 7)[0], 255);
        assert_eq!(m.get_pixel(0, 0)[0], 0);
    }
}
