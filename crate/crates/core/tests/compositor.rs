mod common;

use image::{Rgba, RgbaImage};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sticker_core::compositor::*;
use sticker_core::geometry::BBox;

#[test]
fn alpha_over_matches_reference() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..10_000 {
        let fg: [u8; 4] = rng.random();
        let bg: [u8; 4] = rng.random();
        let a = rng.random_range(0.0..=1.0);
        assert_eq!(alpha_over(Rgba(fg), Rgba(bg), a).0, common::ref_over(fg, bg, a));
    }
}

#[test]
fn sticker_path_matches_reference() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for case in 0..50 {
        let host = common::random_rgba(&mut rng, 16, 16, case % 3 != 0);
        let (sw, sh) = (rng.random_range(1..24), rng.random_range(1..24));
        let sticker = common::random_rgba(&mut rng, sw, sh, case % 2 == 0);
        let b = BBox::new(
            rng.random_range(-0.3..0.9),
            rng.random_range(-0.3..0.9),
            rng.random_range(0.02..0.9),
            rng.random_range(0.02..0.9),
        )
        .unwrap();
        let opacity = if case % 4 == 0 { 1.0 } else { rng.random_range(0.0..=1.0) };
        let got = composite_sticker(&host, &sticker, &b, opacity).unwrap();
        let (x0, y0, x1, y1) = box_to_pixels(&b, 16, 16);
        assert_eq!(got.outside_canvas, x1 <= 0 || y1 <= 0 || x0 >= 16 || y0 >= 16);
        assert_eq!(got.image, common::ref_sticker(&host, &sticker, &b, opacity), "case {case}");
    }
}

#[test]
fn filter_path_matches_reference() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for case in 0..50 {
        let host = common::random_rgba(&mut rng, 16, 16, true);
        let (sw, sh) = (rng.random_range(4..40), rng.random_range(4..40));
        let sticker = common::random_rgba(&mut rng, sw, sh, case % 2 == 0);
        let mask = common::random_gray(&mut rng, 16, 16);
        let use_mask = case % 3 != 0;
        let transparency = case % 4 < 2;
        let got = composite_filter(&host, &sticker, use_mask, transparency, Some(&mask), 0.6).unwrap();
        let opacity = if transparency { 0.6 } else { 1.0 };
        let want = common::ref_filter(&host, &sticker, use_mask.then_some(&mask), opacity);
        assert_eq!(got, want, "case {case}");
        assert_eq!(got.dimensions(), host.dimensions());
    }
}

#[test]
fn identity_and_overwrite_are_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let host = common::random_rgba(&mut rng, 16, 16, true);
    let clear = RgbaImage::from_pixel(5, 5, Rgba([9, 9, 9, 0]));
    let full = BBox::new(0.0, 0.0, 1.0, 1.0).unwrap();
    assert_eq!(composite_sticker(&host, &clear, &full, 1.0).unwrap().image, host);
    let solid = common::random_rgba(&mut rng, 16, 16, true);
    assert_eq!(composite_sticker(&host, &solid, &full, 0.0).unwrap().image, host);
    assert_eq!(composite_sticker(&host, &solid, &full, 1.0).unwrap().image, solid);
    assert_eq!(composite_filter(&host, &solid, false, false, None, 0.6).unwrap(), solid);
}

#[test]
fn box_off_canvas_leaves_host_untouched() {
    let host = RgbaImage::from_pixel(16, 16, Rgba([1, 2, 3, 255]));
    let sticker = RgbaImage::from_pixel(4, 4, Rgba([200, 0, 0, 255]));
    let b = BBox::new(1.5, 0.2, 0.3, 0.3).unwrap();
    let out = composite_sticker(&host, &sticker, &b, 1.0).unwrap();
    assert!(out.outside_canvas);
    assert_eq!(out.image, host);
}

proptest! {
    #[test]
    fn full_mask_shows_the_host(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let host = common::random_rgba(&mut rng, 8, 8, true);
        let sticker = common::random_rgba(&mut rng, 8, 8, false);
        let mask = image::GrayImage::from_pixel(8, 8, image::Luma([255]));
        prop_assert_eq!(composite_filter(&host, &sticker, true, false, Some(&mask), 0.6).unwrap(), host);
    }

    #[test]
    fn blend_stays_between_inputs(fg in any::<[u8; 4]>(), bg in any::<[u8; 4]>(), a in 0.0..=1.0f64) {
        let out = alpha_over(Rgba(fg), Rgba(bg), a);
        for c in 0..3 {
            prop_assert!(out[c] >= fg[c].min(bg[c]) && out[c] <= fg[c].max(bg[c]));
        }
    }
}
