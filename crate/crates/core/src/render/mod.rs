//! Visual prompt rendering: colored contour bands and numbered ID tags burnt
//! into rasters, plus the vertical-concatenation fallback for single-image models.

pub mod font;
mod palette;

use std::collections::HashSet;

use image::{Rgb, RgbImage};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ImageEntry, Mask, MatchingQuestion, ObjectReferral, SegmentedObject};
pub use palette::{default_palette, PaletteError, MAX_PALETTE, MIN_CHANNEL_DISTANCE};

pub const DEFAULT_THICKNESS: u32 = 3;
pub const TAG_TEXT_WHITE: [u8; 3] = [255, 255, 255];
/// Masks whose bounding box is narrower or shorter than this get their tag
/// placed next to the object rather than over it.
pub const SMALL_OBJECT_PX: u32 = 12;
/// Default long edge for [`letterbox`].
pub const LETTERBOX_EDGE: u32 = 1024;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RenderError {
    #[error("mask of track {track_id} is {mask:?}, image is {image:?}")]
    DimensionMismatch {
        track_id: String,
        mask: (u32, u32),
        image: (u32, u32),
    },
    #[error("tag {0} used by more than one object")]
    DuplicateTag(u32),
    #[error("contour color {0:?} used by more than one object")]
    DuplicateColor([u8; 3]),
    #[error("invalid prompt spec: {0}")]
    InvalidSpec(String),
    #[error("cannot concatenate an empty image list")]
    EmptyList,
}

/// How one object is marked in an image.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VisualPromptSpec {
    #[serde(rename = "tag")]
    pub object_tag: u32,
    #[serde(rename = "color")]
    pub contour_color: [u8; 3],
    #[serde(rename = "thickness")]
    pub contour_thickness: u32,
    #[serde(rename = "text_color")]
    pub tag_text_color: [u8; 3],
    #[serde(rename = "tag_background")]
    pub tag_background_color: [u8; 3],
}

impl VisualPromptSpec {
    /// White tag text on a background matching the contour color.
    pub fn new(object_tag: u32, color: [u8; 3]) -> Self {
        Self {
            object_tag,
            contour_color: color,
            contour_thickness: DEFAULT_THICKNESS,
            tag_text_color: TAG_TEXT_WHITE,
            tag_background_color: color,
        }
    }

    pub fn with_thickness(mut self, thickness: u32) -> Self {
        self.contour_thickness = thickness;
        self
    }

    pub fn check(&self) -> Result<(), RenderError> {
        if self.object_tag == 0 {
            return Err(RenderError::InvalidSpec("tag must be positive".into()));
        }
        if self.contour_thickness == 0 {
            return Err(RenderError::InvalidSpec("thickness must be at least 1".into()));
        }
        if self.tag_background_color != self.contour_color {
            return Err(RenderError::InvalidSpec("tag background must equal contour color".into()));
        }
        Ok(())
    }
}

/// Mask minus its 4-neighbour erosion. Cells outside the raster count as unset,
/// so a mask touching the border has its border cells on the boundary.
pub fn mask_boundary(mask: &Mask) -> Mask {
    Mask::from_fn(mask.width(), mask.height(), |x, y| {
        if !mask.get(x, y) {
            return false;
        }
        let (x, y) = (x as i64, y as i64);
        !(mask.get_or_unset(x - 1, y)
            && mask.get_or_unset(x + 1, y)
            && mask.get_or_unset(x, y - 1)
            && mask.get_or_unset(x, y + 1))
    })
}

/// Boundary dilated with a square of side `2 * thickness - 1`; thickness 1 is the boundary itself.
pub fn contour_band(mask: &Mask, thickness: u32) -> Mask {
    let boundary = mask_boundary(mask);
    let r = thickness.saturating_sub(1) as i64;
    if r == 0 {
        return boundary;
    }
    let (w, h) = mask.dimensions();
    let mut band = Mask::new(w, h);
    for (bx, by) in boundary.iter_set() {
        let (bx, by) = (bx as i64, by as i64);
        for y in (by - r).max(0)..=(by + r).min(h as i64 - 1) {
            for x in (bx - r).max(0)..=(bx + r).min(w as i64 - 1) {
                band.set(x as u32, y as u32, true);
            }
        }
    }
    band
}

/// Rectangle in pixel coordinates, possibly partly outside the raster.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TagBox {
    pub x: i64,
    pub y: i64,
    pub width: u32,
    pub height: u32,
    pub scale: u32,
}

impl TagBox {
    pub fn contains(&self, x: u32, y: u32) -> bool {
        let (x, y) = (x as i64, y as i64);
        x >= self.x && y >= self.y && x < self.x + self.width as i64 && y < self.y + self.height as i64
    }
}

/// Font scale for an image: 1 up to 319 px on the short side, growing after that.
pub fn tag_scale(width: u32, height: u32) -> u32 {
    (width.min(height) / 160).max(1)
}

/// Where the tag for `mask` goes.
///
/// The anchor is the top-most, then left-most boundary cell (the first set
/// cell in row-major order). Normal objects get the box's top-left corner
/// there, shifted back inside the raster when it would overflow. Objects whose
/// bounding box is under [`SMALL_OBJECT_PX`] in either direction get the box
/// directly above the bounding box, else directly below, else directly to
/// the right, else at the anchor.
pub fn tag_box(mask: &Mask, tag: u32) -> Option<TagBox> {
    let (w, h) = mask.dimensions();
    let scale = tag_scale(w, h);
    let text = tag.to_string();
    let bw = font::text_width(&text, scale) + 2 * scale;
    let bh = font::text_height(scale) + 2 * scale;
    let (ax, ay) = mask.iter_set().next()?;
    let (x0, y0, x1, y1) = mask.bbox()?;
    let fit = |v: i64, size: u32, limit: u32| -> i64 { v.min(limit as i64 - size as i64).max(0) };
    let small = x1 - x0 + 1 < SMALL_OBJECT_PX || y1 - y0 + 1 < SMALL_OBJECT_PX;
    let (x, y) = if !small {
        (fit(ax as i64, bw, w), fit(ay as i64, bh, h))
    } else if y0 >= bh {
        (fit(x0 as i64, bw, w), (y0 - bh) as i64)
    } else if y1 + 1 + bh <= h {
        (fit(x0 as i64, bw, w), (y1 + 1) as i64)
    } else if x1 + 1 + bw <= w {
        ((x1 + 1) as i64, fit(y0 as i64, bh, h))
    } else {
        (fit(ax as i64, bw, w), fit(ay as i64, bh, h))
    };
    Some(TagBox {
        x,
        y,
        width: bw,
        height: bh,
        scale,
    })
}

fn draw_tag(img: &mut RgbImage, b: &TagBox, spec: &VisualPromptSpec) {
    let (w, h) = img.dimensions();
    for y in b.y.max(0)..(b.y + b.height as i64).min(h as i64) {
        for x in b.x.max(0)..(b.x + b.width as i64).min(w as i64) {
            img.put_pixel(x as u32, y as u32, Rgb(spec.tag_background_color));
        }
    }
    font::draw_text(
        img,
        b.x + b.scale as i64,
        b.y + b.scale as i64,
        &spec.object_tag.to_string(),
        b.scale,
        spec.tag_text_color,
    );
}

/// Burn contour bands and ID tags for `objects` into a copy of `image`.
///
/// All bands are drawn first, in list order, then all tags, so tags stay on
/// top. Pixels outside the union of bands and tag boxes are untouched.
pub fn render_prompts(
    image: &RgbImage,
    objects: &[(&SegmentedObject, &VisualPromptSpec)],
) -> Result<RgbImage, RenderError> {
    let dims = image.dimensions();
    let mut tags = HashSet::new();
    let mut colors = HashSet::new();
    for (obj, spec) in objects {
        spec.check()?;
        if obj.mask.dimensions() != dims {
            return Err(RenderError::DimensionMismatch {
                track_id: obj.track_id.clone(),
                mask: obj.mask.dimensions(),
                image: dims,
            });
        }
        if !tags.insert(spec.object_tag) {
            return Err(RenderError::DuplicateTag(spec.object_tag));
        }
        if !colors.insert(spec.contour_color) {
            return Err(RenderError::DuplicateColor(spec.contour_color));
        }
    }
    let mut out = image.clone();
    for (obj, spec) in objects {
        let band = contour_band(&obj.mask, spec.contour_thickness);
        for (x, y) in band.iter_set() {
            out.put_pixel(x, y, Rgb(spec.contour_color));
        }
    }
    for (obj, spec) in objects {
        if let Some(b) = tag_box(&obj.mask, spec.object_tag) {
            draw_tag(&mut out, &b, spec);
        }
    }
    Ok(out)
}

/// The visual prompts a question draws on one of its images: the query and
/// every option whose referral points into `entry`, in that order.
pub fn question_marks<'a>(q: &'a MatchingQuestion, entry: &'a ImageEntry) -> Vec<(&'a SegmentedObject, &'a VisualPromptSpec)> {
    std::iter::once(&q.query)
        .chain(q.options.iter().map(|o| &o.object))
        .filter_map(|r| match r {
            ObjectReferral::VisualPrompt {
                image_id,
                track_id,
                prompt,
            } if image_id == &entry.image.id => entry.object(track_id).map(|o| (o, prompt)),
            _ => None,
        })
        .collect()
}

/// Stack images top to bottom. Width is the widest input; narrower images are
/// left-aligned and padded on the right with black.
pub fn concat_vertical(images: &[RgbImage]) -> Result<RgbImage, RenderError> {
    if images.is_empty() {
        return Err(RenderError::EmptyList);
    }
    let width = images.iter().map(|i| i.width()).max().unwrap_or(0);
    let height = images.iter().map(|i| i.height()).sum();
    let mut out = RgbImage::new(width, height);
    let mut top = 0;
    for img in images {
        image::imageops::replace(&mut out, img, 0, top as i64);
        top += img.height();
    }
    Ok(out)
}

/// Scale so the long edge equals `edge` (bilinear), then pad the short edge
/// with black on the bottom/right to a square. Returns the scale factor applied.
pub fn letterbox(image: &RgbImage, edge: u32) -> (RgbImage, f64) {
    let (w, h) = image.dimensions();
    let scale = edge as f64 / w.max(h) as f64;
    let nw = ((w as f64 * scale).round() as u32).clamp(1, edge);
    let nh = ((h as f64 * scale).round() as u32).clamp(1, edge);
    let resized = image::imageops::resize(image, nw, nh, image::imageops::FilterType::Triangle);
    let mut out = RgbImage::new(edge, edge);
    image::imageops::replace(&mut out, &resized, 0, 0);
    (out, scale)
}

/// Mask counterpart of [`letterbox`] with nearest-neighbour sampling.
pub fn letterbox_mask(mask: &Mask, edge: u32) -> Mask {
    let (w, h) = mask.dimensions();
    let scale = edge as f64 / w.max(h) as f64;
    let nw = ((w as f64 * scale).round() as u32).clamp(1, edge);
    let nh = ((h as f64 * scale).round() as u32).clamp(1, edge);
    Mask::from_fn(edge, edge, |x, y| {
        if x >= nw || y >= nh {
            return false;
        }
        let sx = (((x as f64 + 0.5) * w as f64 / nw as f64) as u32).min(w - 1);
        let sy = (((y as f64 + 0.5) * h as f64 / nh as f64) as u32).min(h - 1);
        mask.get(sx, sy)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    fn obj(track: &str, mask: Mask) -> SegmentedObject {
        SegmentedObject {
            track_id: track.into(),
            frame_id: "f".into(),
            mask,
            category: None,
        }
    }

    fn diff(a: &RgbImage, b: &RgbImage) -> BTreeSet<(u32, u32)> {
        a.enumerate_pixels()
            .filter(|(x, y, p)| b.get_pixel(*x, *y) != *p)
            .map(|(x, y, _)| (x, y))
            .collect()
    }

    /// Boundary by brute force: a set cell with any 4-neighbour unset or off-raster.
    fn brute_boundary(m: &Mask) -> BTreeSet<(u32, u32)> {
        let mut out = BTreeSet::new();
        for y in 0..m.height() as i64 {
            for x in 0..m.width() as i64 {
                if !m.get(x as u32, y as u32) {
                    continue;
                }
                let nbrs = [(x - 1, y), (x + 1, y), (x, y - 1), (x, y + 1)];
                let inside = |(nx, ny): (i64, i64)| {
                    nx >= 0 && ny >= 0 && nx < m.width() as i64 && ny < m.height() as i64 && m.get(nx as u32, ny as u32)
                };
                if !nbrs.iter().all(|&n| inside(n)) {
                    out.insert((x as u32, y as u32));
                }
            }
        }
        out
    }

    fn gray(w: u32, h: u32) -> RgbImage {
        RgbImage::from_pixel(w, h, Rgb([90, 100, 110]))
    }

    #[test]
    fn empty_object_list_is_identity() {
        let img = RgbImage::from_fn(9, 7, |x, y| Rgb([x as u8 * 20, y as u8 * 30, 7]));
        assert_eq!(render_prompts(&img, &[]).unwrap(), img);
    }

    #[test]
    fn full_frame_mask_changes_border_ring_plus_tag_box() {
        let (w, h) = (20, 16);
        let img = gray(w, h);
        let o = obj("t", Mask::full(w, h));
        let spec = VisualPromptSpec::new(1, [255, 0, 0]).with_thickness(1);
        let out = render_prompts(&img, &[(&o, &spec)]).unwrap();

        let mut expected = brute_boundary(&o.mask);
        let b = tag_box(&o.mask, 1).unwrap();
        assert_eq!((b.x, b.y), (0, 0));
        for y in 0..h {
            for x in 0..w {
                if b.contains(x, y) {
                    expected.insert((x, y));
                }
            }
        }
        // ring of a 20x16 frame
        assert_eq!(brute_boundary(&o.mask).len(), 2 * 20 + 2 * 14);
        assert_eq!(diff(&img, &out), expected);
    }

    #[test]
    fn disjoint_objects_render_as_union() {
        let img = gray(60, 40);
        let a = obj("a", Mask::from_fn(60, 40, |x, y| (2..18).contains(&x) && (15..35).contains(&y)));
        let b = obj("b", Mask::from_fn(60, 40, |x, y| (35..55).contains(&x) && (15..35).contains(&y)));
        let sa = VisualPromptSpec::new(1, [255, 0, 0]);
        let sb = VisualPromptSpec::new(2, [0, 0, 255]);
        let both = render_prompts(&img, &[(&a, &sa), (&b, &sb)]).unwrap();
        let only_a = render_prompts(&img, &[(&a, &sa)]).unwrap();
        let only_b = render_prompts(&img, &[(&b, &sb)]).unwrap();
        let union: BTreeSet<_> = diff(&img, &only_a).union(&diff(&img, &only_b)).copied().collect();
        assert_eq!(diff(&img, &both), union);
    }

    #[test]
    fn band_matches_brute_force_dilation() {
        let m = Mask::from_fn(30, 25, |x, y| {
            let (dx, dy) = (x as f64 - 14.0, y as f64 - 12.0);
            dx * dx + dy * dy < 64.0
        });
        let boundary = brute_boundary(&m);
        for t in 1..4u32 {
            let r = (t - 1) as i64;
            let band: BTreeSet<_> = contour_band(&m, t).iter_set().collect();
            let mut expected = BTreeSet::new();
            for y in 0..25i64 {
                for x in 0..30i64 {
                    if boundary.iter().any(|&(bx, by)| (bx as i64 - x).abs() <= r && (by as i64 - y).abs() <= r) {
                        expected.insert((x as u32, y as u32));
                    }
                }
            }
            assert_eq!(band, expected, "thickness {t}");
        }
    }

    #[test]
    fn small_object_tag_sits_outside_the_mask() {
        let m = Mask::from_fn(40, 40, |x, y| (20..25).contains(&x) && (20..24).contains(&y));
        let b = tag_box(&m, 3).unwrap();
        for (x, y) in m.iter_set() {
            assert!(!b.contains(x, y));
        }
        assert_eq!(b.y + b.height as i64, 20);
    }

    #[test]
    fn rejects_bad_inputs() {
        let img = gray(10, 10);
        let a = obj("a", Mask::full(10, 10));
        let b = obj("b", Mask::full(10, 10));
        let wrong = obj("w", Mask::full(9, 10));
        let s1 = VisualPromptSpec::new(1, [255, 0, 0]);
        let s1b = VisualPromptSpec::new(1, [0, 255, 0]);
        let s2 = VisualPromptSpec::new(2, [255, 0, 0]);
        assert_eq!(render_prompts(&img, &[(&a, &s1), (&b, &s1b)]), Err(RenderError::DuplicateTag(1)));
        assert_eq!(
            render_prompts(&img, &[(&a, &s1), (&b, &s2)]),
            Err(RenderError::DuplicateColor([255, 0, 0]))
        );
        assert!(matches!(
            render_prompts(&img, &[(&wrong, &s1)]),
            Err(RenderError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn concat_rules() {
        let a = RgbImage::from_pixel(4, 4, Rgb([9, 9, 9]));
        let b = RgbImage::from_pixel(2, 4, Rgb([200, 1, 1]));
        assert_eq!(concat_vertical(std::slice::from_ref(&a)).unwrap(), a);
        let two = concat_vertical(&[a.clone(), a.clone()]).unwrap();
        assert_eq!(two.dimensions(), (4, 8));
        assert!((0..4).all(|y| (0..4).all(|x| two.get_pixel(x, y) == a.get_pixel(x, y))));
        let padded = concat_vertical(&[a.clone(), b]).unwrap();
        assert_eq!(padded.dimensions(), (4, 8));
        for y in 4..8 {
            for x in 2..4 {
                assert_eq!(padded.get_pixel(x, y), &Rgb([0, 0, 0]));
            }
        }
        assert_eq!(concat_vertical(&[]), Err(RenderError::EmptyList));
    }

    #[test]
    fn letterbox_pads_short_edge() {
        let img = RgbImage::from_pixel(40, 20, Rgb([50, 60, 70]));
        let (out, scale) = letterbox(&img, 64);
        assert_eq!(out.dimensions(), (64, 64));
        assert!((scale - 1.6).abs() < 1e-12);
        assert_eq!(out.get_pixel(10, 60), &Rgb([0, 0, 0]));
        let m = letterbox_mask(&Mask::full(40, 20), 64);
        assert_eq!(m.area(), 64 * 32);
    }
}
