//! Final rendering of a decision: full-canvas overlay for filter-style
//! stickers, box placement for sticker-style ones.
//!
//! Blending is straight (non-premultiplied) alpha on the stored sRGB byte
//! values. Each color channel is `fg·α + bg·(1 − α)` and the alpha channel is
//! `255·α + bg_a·(1 − α)`, where `α` is the sticker alpha times the opacity
//! (times the inverse mask on the filter path). Results are rounded half away
//! from zero.

use image::{GrayImage, Rgba, RgbaImage};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::BBox;
use crate::raster::{bilinear_taps, lerp4, resize_bilinear, to_byte};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CompositeStyle {
    Filter,
    Sticker,
}

/// Everything needed to render one composition.
#[derive(Debug, Clone, PartialEq)]
pub struct CompositeSpec {
    pub style: CompositeStyle,
    pub bbox: Option<BBox>,
    pub opacity: f64,
    pub use_mask: bool,
    pub mask: Option<GrayImage>,
}

impl CompositeSpec {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.opacity) {
            return Err(Error::input(format!("opacity {} outside [0, 1]", self.opacity)));
        }
        if self.style == CompositeStyle::Sticker && self.bbox.is_none() {
            return Err(Error::input("sticker-style composition needs a box"));
        }
        if self.use_mask && self.mask.is_none() {
            return Err(Error::input("use_mask is set but no mask was supplied"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Composite {
    pub image: RgbaImage,
    /// Set when the placement box does not touch the host canvas.
    pub outside_canvas: bool,
}

/// Blends one foreground pixel over a background pixel with the given
/// effective alpha.
pub fn alpha_over(fg: Rgba<u8>, bg: Rgba<u8>, alpha: f64) -> Rgba<u8> {
    let a = alpha.clamp(0.0, 1.0);
    let mix = |f: f64, b: u8| to_byte(f * a + b as f64 * (1.0 - a));
    Rgba([
        mix(fg[0] as f64, bg[0]),
        mix(fg[1] as f64, bg[1]),
        mix(fg[2] as f64, bg[2]),
        mix(255.0, bg[3]),
    ])
}

fn blend_sampled(fg: [f64; 4], bg: Rgba<u8>, opacity: f64) -> Rgba<u8> {
    let px = Rgba([to_byte(fg[0]), to_byte(fg[1]), to_byte(fg[2]), to_byte(fg[3])]);
    alpha_over(px, bg, px[3] as f64 / 255.0 * opacity)
}

/// Pixel rectangle `[x0, x1) × [y0, y1)` covered by a normalized box, at
/// least one pixel on each side.
pub fn box_to_pixels(b: &BBox, width: u32, height: u32) -> (i64, i64, i64, i64) {
    let x0 = (b.x * width as f64).round() as i64;
    let y0 = (b.y * height as f64).round() as i64;
    let x1 = ((b.right() * width as f64).round() as i64).max(x0 + 1);
    let y1 = ((b.bottom() * height as f64).round() as i64).max(y0 + 1);
    (x0, y0, x1, y1)
}

/// Resamples `sticker` bilinearly into `bbox` and blends it onto `host`.
/// Parts of the box outside the canvas are clipped.
pub fn composite_sticker(host: &RgbaImage, sticker: &RgbaImage, bbox: &BBox, opacity: f64) -> Result<Composite> {
    bbox.validate()?;
    if !(0.0..=1.0).contains(&opacity) {
        return Err(Error::input(format!("opacity {opacity} outside [0, 1]")));
    }
    let (hw, hh) = host.dimensions();
    let (x0, y0, x1, y1) = box_to_pixels(bbox, hw, hh);
    let mut out = host.clone();

    let cx0 = x0.max(0);
    let cy0 = y0.max(0);
    let cx1 = x1.min(hw as i64);
    let cy1 = y1.min(hh as i64);
    if cx0 >= cx1 || cy0 >= cy1 {
        return Ok(Composite {
            image: out,
            outside_canvas: true,
        });
    }
    let span = |a: i64, b: i64| u32::try_from(b - a).map_err(|_| Error::input("placement box is too large"));
    let xs = bilinear_taps(sticker.width(), span(x0, x1)?);
    let ys = bilinear_taps(sticker.height(), span(y0, y1)?);
    for hy in cy0..cy1 {
        let ty = ys[(hy - y0) as usize];
        for hx in cx0..cx1 {
            let tx = xs[(hx - x0) as usize];
            let fg = lerp4(sticker, tx, ty);
            let bg = out.get_pixel(hx as u32, hy as u32);
            let blended = blend_sampled(fg, *bg, opacity);
            out.put_pixel(hx as u32, hy as u32, blended);
        }
    }
    Ok(Composite {
        image: out,
        outside_canvas: false,
    })
}

/// Stretches `sticker` over the whole host. With `use_mask`, foreground
/// regions of `mask` show the host through the overlay (overlay alpha is
/// scaled by `1 − mask`). With `transparency`, overlay opacity is
/// `filter_opacity`.
pub fn composite_filter(
    host: &RgbaImage,
    sticker: &RgbaImage,
    use_mask: bool,
    transparency: bool,
    mask: Option<&GrayImage>,
    filter_opacity: f64,
) -> Result<RgbaImage> {
    let (w, h) = host.dimensions();
    let mask = match (use_mask, mask) {
        (true, None) => return Err(Error::input("use_mask is set but no mask was supplied")),
        (true, Some(m)) if m.dimensions() != (w, h) => {
            return Err(Error::input(format!(
                "mask is {:?} but host is {:?}",
                m.dimensions(),
                (w, h)
            )))
        }
        (true, Some(m)) => Some(m),
        (false, _) => None,
    };
    if !(0.0..=1.0).contains(&filter_opacity) {
        return Err(Error::input(format!("filter opacity {filter_opacity} outside [0, 1]")));
    }
    let opacity = if transparency { filter_opacity } else { 1.0 };
    let overlay = resize_bilinear(sticker, w, h);
    let mut out = host.clone();
    for (x, y, px) in out.enumerate_pixels_mut() {
        let fg = *overlay.get_pixel(x, y);
        let keep = match mask {
            Some(m) => 1.0 - m.get_pixel(x, y)[0] as f64 / 255.0,
            None => 1.0,
        };
        *px = alpha_over(fg, *px, fg[3] as f64 / 255.0 * opacity * keep);
    }
    Ok(out)
}

/// Dispatches on `spec.style`.
pub fn composite(host: &RgbaImage, sticker: &RgbaImage, spec: &CompositeSpec) -> Result<Composite> {
    spec.validate()?;
    match spec.style {
        CompositeStyle::Sticker => composite_sticker(host, sticker, spec.bbox.as_ref().expect("validated"), spec.opacity),
        CompositeStyle::Filter => {
            let image = composite_filter(
                host,
                sticker,
                spec.use_mask,
                spec.opacity < 1.0,
                spec.mask.as_ref(),
                spec.opacity,
            )?;
            Ok(Composite {
                image,
                outside_canvas: false,
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn alpha_over_examples() {
        let fg = Rgba([200, 10, 255, 255]);
        let bg = Rgba([3, 4, 5, 255]);
        assert_eq!(alpha_over(fg, bg, 1.0), Rgba([200, 10, 255, 255]));
        assert_eq!(alpha_over(fg, bg, 0.0), bg);
        assert_eq!(alpha_over(Rgba([255, 255, 255, 255]), Rgba([0, 0, 0, 255]), 0.5)[0], 128);
    }

    #[test]
    fn transparent_sticker_leaves_host_untouched() {
        let host = RgbaImage::from_fn(9, 7, |x, y| Rgba([x as u8 * 20, y as u8 * 30, 77, 255]));
        let sticker = RgbaImage::from_pixel(4, 4, Rgba([255, 0, 0, 0]));
        let b = BBox::new(0.1, 0.2, 0.5, 0.6).unwrap();
        let c = composite_sticker(&host, &sticker, &b, 1.0).unwrap();
        assert_eq!(c.image, host);
        assert!(!c.outside_canvas);
    }

    #[test]
    fn opaque_full_cover_equals_resampled_sticker() {
        let host = RgbaImage::from_pixel(8, 8, Rgba([1, 2, 3, 255]));
        let sticker = RgbaImage::from_fn(3, 5, |x, y| Rgba([x as u8 * 90, y as u8 * 60, 10, 255]));
        let c = composite_sticker(&host, &sticker, &BBox::new(0., 0., 1., 1.).unwrap(), 1.0).unwrap();
        assert_eq!(c.image, resize_bilinear(&sticker, 8, 8));
    }

    #[test]
    fn box_outside_canvas_is_flagged() {
        let host = RgbaImage::from_pixel(8, 8, Rgba([1, 2, 3, 255]));
        let sticker = RgbaImage::from_pixel(2, 2, Rgba([9, 9, 9, 255]));
        let c = composite_sticker(&host, &sticker, &BBox::new(1.5, 0.2, 0.3, 0.3).unwrap(), 1.0).unwrap();
        assert!(c.outside_canvas);
        assert_eq!(c.image, host);
    }

    #[test]
    fn filter_examples() {
        let host = RgbaImage::from_pixel(6, 4, Rgba([10, 20, 30, 255]));
        let sticker = RgbaImage::from_fn(3, 2, |x, y| Rgba([x as u8 * 100, y as u8 * 100, 50, 255]));
        let plain = composite_filter(&host, &sticker, false, false, None, 0.6).unwrap();
        assert_eq!(plain, resize_bilinear(&sticker, 6, 4));

        let full = GrayImage::from_pixel(6, 4, image::Luma([255]));
        assert_eq!(composite_filter(&host, &sticker, true, false, Some(&full), 0.6).unwrap(), host);

        assert!(composite_filter(&host, &sticker, true, false, None, 0.6).is_err());
        let wrong = GrayImage::new(2, 2);
        assert!(composite_filter(&host, &sticker, true, false, Some(&wrong), 0.6).is_err());
    }

    #[test]
    fn spec_validation() {
        let spec = CompositeSpec {
            style: CompositeStyle::Sticker,
            bbox: None,
            opacity: 1.0,
            use_mask: false,
            mask: None,
        };
        assert!(spec.validate().is_err());
        let spec = CompositeSpec {
            style: CompositeStyle::Filter,
            bbox: None,
            opacity: 1.5,
            use_mask: false,
            mask: None,
        };
        assert!(spec.validate().is_err());
    }
}
