#![allow(dead_code)]

use image::{GrayImage, Luma, Rgba, RgbaImage};
use rand::Rng;
use sticker_core::geometry::BBox;

/// Random box pair whose edges are at least `gap` apart along each axis, so
/// no min/max in the overlap or enclosure terms sits at a tie.
pub fn separated_pair(rng: &mut impl Rng, gap: f64) -> (BBox, BBox) {
    loop {
        let a = BBox {
            x: rng.random_range(-0.5..1.0),
            y: rng.random_range(-0.5..1.0),
            w: rng.random_range(0.05..1.0),
            h: rng.random_range(0.05..1.0),
        };
        let b = BBox {
            x: rng.random_range(-0.5..1.0),
            y: rng.random_range(-0.5..1.0),
            w: rng.random_range(0.05..1.0),
            h: rng.random_range(0.05..1.0),
        };
        let xs = [a.x, a.x + a.w, b.x, b.x + b.w];
        let ys = [a.y, a.y + a.h, b.y, b.y + b.h];
        let spread = |v: [f64; 4]| {
            (0..4).all(|i| (i + 1..4).all(|j| (v[i] - v[j]).abs() > gap))
        };
        if spread(xs) && spread(ys) {
            return (a, b);
        }
    }
}

/// Relative error with a floor on the scale so near-zero components compare absolutely.
pub fn rel_err(got: f64, want: f64) -> f64 {
    (got - want).abs() / got.abs().max(want.abs()).max(1e-3)
}

pub fn random_rgba(rng: &mut impl Rng, w: u32, h: u32, opaque: bool) -> RgbaImage {
    RgbaImage::from_fn(w, h, |_, _| {
        let a = if opaque { 255 } else { rng.random_range(0..=255) };
        Rgba([rng.random(), rng.random(), rng.random(), a])
    })
}

pub fn random_gray(rng: &mut impl Rng, w: u32, h: u32) -> GrayImage {
    GrayImage::from_fn(w, h, |_, _| Luma([rng.random()]))
}

fn round_byte(v: f64) -> u8 {
    let r = if v >= 0.0 { (v + 0.5).floor() } else { (v - 0.5).ceil() };
    r.clamp(0.0, 255.0) as u8
}

/// Straight-alpha over, one channel at a time.
pub fn ref_over(fg: [u8; 4], bg: [u8; 4], alpha: f64) -> [u8; 4] {
    let a = alpha.clamp(0.0, 1.0);
    let mut out = [0u8; 4];
    for c in 0..3 {
        out[c] = round_byte(fg[c] as f64 * a + bg[c] as f64 * (1.0 - a));
    }
    out[3] = round_byte(255.0 * a + bg[3] as f64 * (1.0 - a));
    out
}

/// Bilinear sample of `src` for destination pixel `(dx, dy)` of a
/// `dw`×`dh` resampling, pixel centers aligned.
pub fn ref_sample(src: &RgbaImage, dw: u32, dh: u32, dx: u32, dy: u32) -> [u8; 4] {
    let (sw, sh) = src.dimensions();
    let pos = |d: u32, s: u32, dn: u32| -> (u32, u32, f64) {
        let p = ((d as f64 + 0.5) * s as f64 / dn as f64 - 0.5).max(0.0).min((s - 1) as f64);
        let i = p.floor() as u32;
        (i, (i + 1).min(s - 1), p - i as f64)
    };
    let (x0, x1, fx) = pos(dx, sw, dw);
    let (y0, y1, fy) = pos(dy, sh, dh);
    let mut out = [0u8; 4];
    for c in 0..4 {
        let v00 = src.get_pixel(x0, y0)[c] as f64;
        let v10 = src.get_pixel(x1, y0)[c] as f64;
        let v01 = src.get_pixel(x0, y1)[c] as f64;
        let v11 = src.get_pixel(x1, y1)[c] as f64;
        let top = v00 * (1.0 - fx) + v10 * fx;
        let bottom = v01 * (1.0 - fx) + v11 * fx;
        out[c] = round_byte(top * (1.0 - fy) + bottom * fy);
    }
    out
}

pub fn ref_sticker(host: &RgbaImage, sticker: &RgbaImage, b: &BBox, opacity: f64) -> RgbaImage {
    let (w, h) = host.dimensions();
    let x0 = round_byte_i(b.x * w as f64);
    let y0 = round_byte_i(b.y * h as f64);
    let x1 = round_byte_i((b.x + b.w) * w as f64).max(x0 + 1);
    let y1 = round_byte_i((b.y + b.h) * h as f64).max(y0 + 1);
    let mut out = host.clone();
    for py in 0..h as i64 {
        for px in 0..w as i64 {
            if px < x0 || px >= x1 || py < y0 || py >= y1 {
                continue;
            }
            let s = ref_sample(sticker, (x1 - x0) as u32, (y1 - y0) as u32, (px - x0) as u32, (py - y0) as u32);
            let bg = host.get_pixel(px as u32, py as u32).0;
            out.put_pixel(px as u32, py as u32, Rgba(ref_over(s, bg, s[3] as f64 / 255.0 * opacity)));
        }
    }
    out
}

fn round_byte_i(v: f64) -> i64 {
    if v >= 0.0 {
        (v + 0.5).floor() as i64
    } else {
        (v - 0.5).ceil() as i64
    }
}

pub fn ref_filter(host: &RgbaImage, sticker: &RgbaImage, mask: Option<&GrayImage>, opacity: f64) -> RgbaImage {
    let (w, h) = host.dimensions();
    let mut out = host.clone();
    for y in 0..h {
        for x in 0..w {
            let s = ref_sample(sticker, w, h, x, y);
            let keep = mask.map_or(1.0, |m| 1.0 - m.get_pixel(x, y)[0] as f64 / 255.0);
            let bg = host.get_pixel(x, y).0;
            out.put_pixel(x, y, Rgba(ref_over(s, bg, s[3] as f64 / 255.0 * opacity * keep)));
        }
    }
    out
}
