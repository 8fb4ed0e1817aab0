//! Synthetic scene generator.
//!
//! Every scene is a textured host with one salient target shape and its exact
//! foreground mask. Sticker-style records place a glyph sticker on a box
//! centered on the target's mask centroid whose area tracks the target's size
//! and whose aspect is the sticker's. Filter-style records stretch a
//! full-canvas overlay over the host; the overlay's kind fixes whether a mask
//! and reduced opacity are used.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use image::{GrayImage, Luma, Rgba, RgbaImage};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::dataset::{fg_mask_ref, Dataset};
use super::record::{PlacementRecord, StyleLabel};
use super::stable_hash;
use crate::error::{Error, Result};
use crate::geometry::BBox;
use crate::raster::Sticker;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    /// Host side length in pixels.
    pub image_size: u32,
    /// Fraction of stickers that are filter-style overlays.
    pub filter_fraction: f64,
    /// Average number of scenes that reuse one sticker.
    pub scenes_per_sticker: f64,
    /// Sticker box area as a multiple of the target's bounding-box area.
    pub box_area_factor: f64,
    /// Range of target half-extents, in host units.
    pub target_half_extent: (f64, f64),
    /// Range of glyph sticker aspect ratios (width / height).
    pub sticker_aspect: (f64, f64),
    /// Opacity recorded for overlays that use reduced transparency.
    pub reduced_opacity: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            image_size: 64,
            filter_fraction: 0.2,
            scenes_per_sticker: 4.0,
            box_area_factor: 1.0,
            target_half_extent: (0.08, 0.2),
            sticker_aspect: (0.6, 1.6),
            reduced_opacity: 0.6,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.image_size < 16 {
            return Err(Error::input("synthetic image size must be at least 16 pixels"));
        }
        if !(0.0..=1.0).contains(&self.filter_fraction) || !(0.0..=1.0).contains(&self.reduced_opacity) {
            return Err(Error::input("filter fraction and reduced opacity must lie in [0, 1]"));
        }
        let (lo, hi) = self.target_half_extent;
        let (alo, ahi) = self.sticker_aspect;
        if !(0.0 < lo && lo <= hi && hi < 0.5) || !(0.0 < alo && alo <= ahi) {
            return Err(Error::input("target extent and aspect ranges must be positive and ordered"));
        }
        if self.scenes_per_sticker <= 0.0 || self.box_area_factor <= 0.0 {
            return Err(Error::input("scenes per sticker and box area factor must be positive"));
        }
        Ok(())
    }

    fn sticker_count(&self, n: usize) -> usize {
        ((n as f64 / self.scenes_per_sticker).ceil() as usize).max(20)
    }

    /// Evenly interleaves filter stickers among all sticker indices.
    fn sticker_is_filter(&self, k: usize) -> bool {
        ((k + 1) as f64 * self.filter_fraction).floor() > (k as f64 * self.filter_fraction).floor()
    }
}

/// Full-canvas overlay families. The family fixes the filter labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum OverlayKind {
    Gradient,
    Stripes,
    Frame,
    Vignette,
}

impl OverlayKind {
    fn use_mask(self) -> bool {
        matches!(self, OverlayKind::Gradient | OverlayKind::Stripes)
    }

    fn transparency(self) -> bool {
        matches!(self, OverlayKind::Gradient | OverlayKind::Vignette)
    }

    fn has_alpha(self) -> bool {
        matches!(self, OverlayKind::Frame | OverlayKind::Vignette)
    }
}

enum StickerKind {
    Glyph { aspect: f64 },
    Overlay(OverlayKind),
}

pub fn sticker_id(k: usize) -> String {
    format!("s{k:05}")
}

fn sticker_ref(id: &str) -> String {
    format!("images/sticker_{id}.png")
}

fn hsv(h: f64, s: f64, v: f64) -> [u8; 3] {
    let h6 = (h.rem_euclid(1.0)) * 6.0;
    let c = v * s;
    let x = c * (1.0 - ((h6 % 2.0) - 1.0).abs());
    let (r, g, b) = match h6 as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    [r, g, b].map(|t| ((t + m) * 255.0).round().clamp(0.0, 255.0) as u8)
}

fn bright_color(rng: &mut ChaCha8Rng) -> [u8; 3] {
    hsv(rng.random(), rng.random_range(0.75..1.0), rng.random_range(0.85..1.0))
}

fn muted_color(rng: &mut ChaCha8Rng) -> [u8; 3] {
    hsv(rng.random(), rng.random_range(0.0..0.25), rng.random_range(0.25..0.6))
}

fn mix(a: [u8; 3], b: [u8; 3], t: f64) -> [f64; 3] {
    [0, 1, 2].map(|c| a[c] as f64 * (1.0 - t) + b[c] as f64 * t)
}

fn render_background(rng: &mut ChaCha8Rng, size: u32) -> RgbaImage {
    let c1 = muted_color(rng);
    let c2 = muted_color(rng);
    let pattern = rng.random_range(0..3u8);
    let angle: f64 = rng.random_range(0.0..PI);
    let period: f64 = rng.random_range(5.0..12.0);
    let (ca, sa) = (angle.cos(), angle.sin());
    let mut img = RgbaImage::new(size, size);
    for (x, y, px) in img.enumerate_pixels_mut() {
        let (u, v) = (x as f64, y as f64);
        let t = match pattern {
            0 => ((u * ca + v * sa) / size as f64 * 0.5 + 0.5).clamp(0.0, 1.0),
            1 => {
                if ((u * ca + v * sa) / period).floor() as i64 % 2 == 0 {
                    0.0
                } else {
                    1.0
                }
            }
            _ => (((u / period).floor() + (v / period).floor()) as i64 % 2) as f64,
        };
        let base = mix(c1, c2, t);
        let noise: f64 = rng.random_range(-10.0..10.0);
        *px = Rgba([
            (base[0] + noise).round().clamp(0.0, 255.0) as u8,
            (base[1] + noise).round().clamp(0.0, 255.0) as u8,
            (base[2] + noise).round().clamp(0.0, 255.0) as u8,
            255,
        ]);
    }
    img
}

fn render_glyph(rng: &mut ChaCha8Rng, aspect: f64) -> Sticker {
    let h = 40u32;
    let w = ((40.0 * aspect).round() as u32).max(4);
    let shape = rng.random_range(0..4u8);
    let fill = bright_color(rng);
    let edge = fill.map(|c| (c as f64 * 0.45) as u8);
    let spikes = rng.random_range(4..7) as f64;
    let img = RgbaImage::from_fn(w, h, |x, y| {
        // Canvas mapped to [-1, 1]² so the glyph stretches with the aspect.
        let u = (x as f64 + 0.5) / w as f64 * 2.0 - 1.0;
        let v = (y as f64 + 0.5) / h as f64 * 2.0 - 1.0;
        let r = (u * u + v * v).sqrt();
        let theta = v.atan2(u);
        let radius = match shape {
            0 => 0.9,
            1 => 0.55 + 0.35 * (0.5 + 0.5 * (spikes * theta).cos()),
            2 => 0.9 / (u.abs() + v.abs()).max(1e-9) * r,
            _ => {
                // Square.
                let m = u.abs().max(v.abs());
                0.85 * r / m.max(1e-9)
            }
        };
        if r <= radius {
            let c = if r >= radius - 0.15 { edge } else { fill };
            Rgba([c[0], c[1], c[2], 255])
        } else {
            Rgba([0, 0, 0, 0])
        }
    });
    Sticker {
        image: img,
        has_alpha: true,
    }
}

fn render_overlay(rng: &mut ChaCha8Rng, kind: OverlayKind, size: u32) -> Sticker {
    let c1 = bright_color(rng);
    let c2 = bright_color(rng);
    let angle: f64 = rng.random_range(0.0..PI);
    let (ca, sa) = (angle.cos(), angle.sin());
    let period: f64 = rng.random_range(6.0..14.0);
    let border = rng.random_range(0.1..0.18);
    let s = size as f64;
    let img = RgbaImage::from_fn(size, size, |x, y| {
        let u = (x as f64 + 0.5) / s;
        let v = (y as f64 + 0.5) / s;
        match kind {
            OverlayKind::Gradient => {
                let t = ((u - 0.5) * ca + (v - 0.5) * sa + 0.71) / 1.42;
                let c = mix(c1, c2, t.clamp(0.0, 1.0));
                Rgba([c[0] as u8, c[1] as u8, c[2] as u8, 255])
            }
            OverlayKind::Stripes => {
                let band = ((x as f64 * ca + y as f64 * sa) / period).floor() as i64 % 2 == 0;
                let c = if band { c1 } else { c2 };
                Rgba([c[0], c[1], c[2], 255])
            }
            OverlayKind::Frame => {
                let d = u.min(v).min(1.0 - u).min(1.0 - v);
                if d < border {
                    Rgba([c1[0], c1[1], c1[2], 255])
                } else {
                    Rgba([0, 0, 0, 0])
                }
            }
            OverlayKind::Vignette => {
                let r = ((u - 0.5).powi(2) + (v - 0.5).powi(2)).sqrt() / 0.5;
                let a = ((r - 0.45) / 0.55).clamp(0.0, 1.0);
                Rgba([c1[0] / 4, c1[1] / 4, c1[2] / 4, (a * 255.0).round() as u8])
            }
        }
    });
    Sticker {
        image: img,
        has_alpha: kind.has_alpha(),
    }
}

fn sticker_kind(cfg: &SynthConfig, rng: &mut ChaCha8Rng, k: usize) -> StickerKind {
    if cfg.sticker_is_filter(k) {
        let kinds = [
            OverlayKind::Gradient,
            OverlayKind::Stripes,
            OverlayKind::Frame,
            OverlayKind::Vignette,
        ];
        StickerKind::Overlay(kinds[rng.random_range(0..kinds.len())])
    } else {
        let (lo, hi) = cfg.sticker_aspect;
        // Log-uniform so wide and tall glyphs are equally likely.
        let aspect = (rng.random_range(lo.ln()..=hi.ln())).exp();
        StickerKind::Glyph { aspect }
    }
}

/// Target shape rasterized at pixel centers; returns the mask.
fn render_target(
    host: &mut RgbaImage,
    rng: &mut ChaCha8Rng,
    cx: f64,
    cy: f64,
    rx: f64,
    ry: f64,
) -> GrayImage {
    let size = host.width();
    let shape = rng.random_range(0..3u8);
    let color = bright_color(rng);
    let shade = rng.random_range(0.75..1.0);
    let mut mask = GrayImage::new(size, size);
    for y in 0..size {
        for x in 0..size {
            let u = ((x as f64 + 0.5) / size as f64 - cx) / rx;
            let v = ((y as f64 + 0.5) / size as f64 - cy) / ry;
            let inside = match shape {
                0 => u * u + v * v <= 1.0,
                1 => u.abs() <= 1.0 && v.abs() <= 1.0,
                _ => u.abs() + v.abs() <= 1.0,
            };
            if inside {
                // Vertical shading keeps the target textured but symmetric in x.
                let t = 1.0 - (1.0 - shade) * (v + 1.0) * 0.5;
                host.put_pixel(
                    x,
                    y,
                    Rgba([
                        (color[0] as f64 * t).round() as u8,
                        (color[1] as f64 * t).round() as u8,
                        (color[2] as f64 * t).round() as u8,
                        255,
                    ]),
                );
                mask.put_pixel(x, y, Luma([255]));
            }
        }
    }
    mask
}

/// Centroid of a binary mask in normalized coordinates (pixel centers).
pub fn mask_centroid(mask: &GrayImage) -> Option<(f64, f64)> {
    let (w, h) = mask.dimensions();
    let (mut sx, mut sy, mut n) = (0.0, 0.0, 0usize);
    for (x, y, p) in mask.enumerate_pixels() {
        if p[0] > 127 {
            sx += (x as f64 + 0.5) / w as f64;
            sy += (y as f64 + 0.5) / h as f64;
            n += 1;
        }
    }
    (n > 0).then(|| (sx / n as f64, sy / n as f64))
}

pub fn synth_generate(n: usize, seed: u64) -> Result<Dataset> {
    synth_generate_with(&SynthConfig::default(), n, seed)
}

/// Generates `n` scenes. Each scene and each sticker draws from its own
/// generator seeded by `(seed, id)`, so output does not depend on order.
pub fn synth_generate_with(cfg: &SynthConfig, n: usize, seed: u64) -> Result<Dataset> {
    cfg.validate()?;
    if n == 0 {
        return Err(Error::input("scene count must be at least 1"));
    }
    let size = cfg.image_size;
    let n_stickers = cfg.sticker_count(n);

    let mut kinds = Vec::with_capacity(n_stickers);
    let mut stickers = BTreeMap::new();
    for k in 0..n_stickers {
        let id = sticker_id(k);
        let mut rng = ChaCha8Rng::seed_from_u64(stable_hash(seed, &id));
        let kind = sticker_kind(cfg, &mut rng, k);
        let art = match kind {
            StickerKind::Glyph { aspect } => render_glyph(&mut rng, aspect),
            StickerKind::Overlay(o) => render_overlay(&mut rng, o, size),
        };
        stickers.insert(sticker_ref(&id), art);
        kinds.push(kind);
    }

    let mut records = Vec::with_capacity(n);
    let mut hosts = BTreeMap::new();
    let mut masks = BTreeMap::new();
    let px = 1.0 / size as f64;
    for i in 0..n {
        let record_id = format!("r{i:06}");
        let mut rng = ChaCha8Rng::seed_from_u64(stable_hash(seed, &record_id));
        let k = rng.random_range(0..n_stickers);
        let sid = sticker_id(k);
        let sref = sticker_ref(&sid);

        let (lo, hi) = cfg.target_half_extent;
        let rx = rng.random_range(lo..=hi);
        let ry = rng.random_range(lo..=hi);
        let (box_w, box_h) = match kinds[k] {
            StickerKind::Glyph { .. } => {
                let (sw, sh) = stickers[&sref].dims();
                let aspect = sw as f64 / sh as f64;
                let area = cfg.box_area_factor * 4.0 * rx * ry;
                ((area * aspect).sqrt(), (area / aspect).sqrt())
            }
            StickerKind::Overlay(_) => (1.0, 1.0),
        };
        // Keep the target on canvas and, for glyphs, the box as well.
        let (mx, my) = match kinds[k] {
            StickerKind::Glyph { .. } => (rx.max(0.5 * box_w) + px, ry.max(0.5 * box_h) + px),
            StickerKind::Overlay(_) => (rx + px, ry + px),
        };
        let cx = if mx < 0.5 { rng.random_range(mx..=1.0 - mx) } else { 0.5 };
        let cy = if my < 0.5 { rng.random_range(my..=1.0 - my) } else { 0.5 };

        let mut host = render_background(&mut rng, size);
        let mask = render_target(&mut host, &mut rng, cx, cy, rx, ry);
        let host_ref = format!("images/host_{i:06}.png");

        let rec = match kinds[k] {
            StickerKind::Glyph { .. } => {
                let (mcx, mcy) = mask_centroid(&mask).unwrap_or((cx, cy));
                let b = BBox::from_center(mcx, mcy, box_w, box_h)?;
                PlacementRecord {
                    record_id,
                    sticker_id: sid,
                    host_ref: host_ref.clone(),
                    sticker_ref: sref,
                    x: b.x,
                    y: b.y,
                    w: b.w,
                    h: b.h,
                    opacity: 1.0,
                    rotation_deg: 0.0,
                    mask_ref: None,
                    style_label: StyleLabel::Sticker,
                }
            }
            StickerKind::Overlay(kind) => PlacementRecord {
                record_id,
                sticker_id: sid,
                host_ref: host_ref.clone(),
                sticker_ref: sref,
                x: 0.0,
                y: 0.0,
                w: 1.0,
                h: 1.0,
                opacity: if kind.transparency() { cfg.reduced_opacity } else { 1.0 },
                rotation_deg: 0.0,
                mask_ref: kind.use_mask().then(|| fg_mask_ref(&host_ref)),
                style_label: StyleLabel::Filter,
            },
        };
        records.push(rec);
        hosts.insert(host_ref.clone(), host);
        masks.insert(host_ref, mask);
    }

    // Drop stickers no scene drew.
    let used: std::collections::BTreeSet<&str> = records.iter().map(|r| r.sticker_ref.as_str()).collect();
    stickers.retain(|k, _| used.contains(k.as_str()));

    Dataset::from_parts(records, hosts, masks, stickers)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn filter_stickers_are_interleaved() {
        let cfg = SynthConfig::default();
        let filters = (0..100).filter(|&k| cfg.sticker_is_filter(k)).count();
        assert_eq!(filters, 20);
    }

    #[test]
    fn small_generation_is_consistent() {
        let ds = synth_generate(30, 5).unwrap();
        assert_eq!(ds.records.len(), 30);
        for r in &ds.records {
            r.validate().unwrap();
            let host = ds.host(r).unwrap();
            assert_eq!(host.dimensions(), (64, 64));
            let st = ds.sticker(r).unwrap();
            match r.style_label {
                StyleLabel::Sticker => {
                    assert!(st.has_alpha);
                    assert!(r.coverage() < 0.25);
                    let (sw, sh) = st.dims();
                    assert!(((r.w / r.h) - sw as f64 / sh as f64).abs() < 1e-9);
                }
                StyleLabel::Filter => assert_eq!((r.x, r.y, r.w, r.h), (0.0, 0.0, 1.0, 1.0)),
                StyleLabel::Unknown => unreachable!(),
            }
        }
    }

    #[test]
    fn centroid_of_a_block() {
        let mut m = GrayImage::new(10, 10);
        for y in 2..4 {
            for x in 6..8 {
                m.put_pixel(x, y, Luma([255]));
            }
        }
        assert_eq!(mask_centroid(&m), Some((0.7, 0.3)));
        assert_eq!(mask_centroid(&GrayImage::new(3, 3)), None);
    }
}
