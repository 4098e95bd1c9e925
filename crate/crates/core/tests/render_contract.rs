mod common;

use image::{Rgb, RgbImage};
use mmvm_core::model::{Mask, SegmentedObject};
use mmvm_core::render::{concat_vertical, default_palette, render_prompts, tag_box, VisualPromptSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::oracles;

const GROUND: [u8; 3] = [1, 2, 3];

fn blob(w: u32, h: u32, rng: &mut ChaCha8Rng) -> Mask {
    let (cx, cy) = (rng.random_range(0.0..w as f64), rng.random_range(0.0..h as f64));
    let (rx, ry) = (rng.random_range(2.0..12.0), rng.random_range(2.0..12.0));
    let m = Mask::from_fn(w, h, |x, y| {
        let (dx, dy) = ((x as f64 - cx) / rx, (y as f64 - cy) / ry);
        dx * dx + dy * dy <= 1.0
    });
    if m.is_empty() {
        Mask::from_fn(w, h, |x, y| x == 0 && y == 0)
    } else {
        m
    }
}

#[test]
fn empty_render_is_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let img = RgbImage::from_fn(31, 17, |_, _| Rgb([rng.random(), rng.random(), rng.random()]));
    assert_eq!(render_prompts(&img, &[]).unwrap(), img);
}

#[test]
fn changed_pixels_are_bands_and_tags() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let palette = default_palette(4).unwrap();
    for case in 0..30 {
        let (w, h) = (rng.random_range(20..90u32), rng.random_range(20..90u32));
        let n = rng.random_range(1..=4usize);
        let objects: Vec<SegmentedObject> = (0..n)
            .map(|i| SegmentedObject {
                track_id: format!("t{i}"),
                frame_id: "f".into(),
                mask: blob(w, h, &mut rng),
                category: None,
            })
            .collect();
        let specs: Vec<VisualPromptSpec> = (0..n)
            .map(|i| VisualPromptSpec::new(i as u32 + 1, palette[i]).with_thickness(1 + (case % 4) as u32))
            .collect();
        let img = RgbImage::from_pixel(w, h, Rgb(GROUND));
        let marks: Vec<_> = objects.iter().zip(&specs).collect();
        let out = render_prompts(&img, &marks).unwrap();

        let bands: Vec<Vec<bool>> = objects.iter().zip(&specs).map(|(o, s)| oracles::contour_band(&o.mask, s.contour_thickness)).collect();
        let boxes: Vec<_> = objects.iter().zip(&specs).filter_map(|(o, s)| tag_box(&o.mask, s.object_tag)).collect();
        for y in 0..h {
            for x in 0..w {
                let i = (y * w + x) as usize;
                let in_tag = boxes.iter().any(|b| b.contains(x, y));
                let in_band = bands.iter().any(|b| b[i]);
                let changed = out.get_pixel(x, y).0 != GROUND;
                assert_eq!(changed, in_tag || in_band, "case {case} pixel ({x},{y})");
                if in_band && !in_tag {
                    // last band drawn wins
                    let k = bands.iter().rposition(|b| b[i]).unwrap();
                    assert_eq!(out.get_pixel(x, y).0, specs[k].contour_color);
                }
            }
        }
    }
}

#[test]
fn vertical_stacking_law() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..100 {
        let n = rng.random_range(1..5);
        let imgs: Vec<RgbImage> = (0..n)
            .map(|_| {
                let (w, h) = (rng.random_range(1..30), rng.random_range(1..30));
                RgbImage::from_fn(w, h, |_, _| Rgb([rng.random(), rng.random(), rng.random()]))
            })
            .collect();
        let out = concat_vertical(&imgs).unwrap();
        assert_eq!(out.width(), imgs.iter().map(|i| i.width()).max().unwrap());
        assert_eq!(out.height(), imgs.iter().map(|i| i.height()).sum::<u32>());
        let mut top = 0;
        for img in &imgs {
            for y in 0..img.height() {
                for x in 0..out.width() {
                    let want = if x < img.width() { *img.get_pixel(x, y) } else { Rgb([0, 0, 0]) };
                    assert_eq!(*out.get_pixel(x, top + y), want);
                }
            }
            top += img.height();
        }
    }
    assert!(concat_vertical(&[]).is_err());
}
