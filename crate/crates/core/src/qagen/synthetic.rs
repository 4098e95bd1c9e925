//! Synthetic segmented videos: shapes drifting over a textured background.

use std::path::Path;

use image::RgbImage;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Frame, VideoAnnotation};
use crate::hash::derive_seed;
use crate::model::{ImageRef, SegmentedObject};
use crate::synth::{paint_scene, random_kind, spread_colors, textured_background, Shape};

pub const FRAME_WIDTH: u32 = 64;
pub const FRAME_HEIGHT: u32 = 48;
pub const FPS: f64 = 4.0;
/// Objects with fewer visible pixels are left out of a frame's annotation.
const MIN_VISIBLE: usize = 4;

pub struct SyntheticVideo {
    pub annotation: VideoAnnotation,
    pub frames: Vec<RgbImage>,
}

struct Track {
    shape: Shape,
    vx: f64,
    vy: f64,
    start: usize,
    end: usize,
}

pub fn synthetic_video(index: usize, seed: u64) -> SyntheticVideo {
    let video_id = format!("syn{index:03}");
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &["synthetic-video", &video_id]));
    let n_frames = rng.random_range(6..=14usize);
    let n_tracks = rng.random_range(2..=5usize);
    let colors = spread_colors(&mut rng, n_tracks);
    let (w, h) = (FRAME_WIDTH as f64, FRAME_HEIGHT as f64);
    let tracks: Vec<Track> = colors
        .into_iter()
        .map(|color| {
            let start = if rng.random_bool(0.7) { 0 } else { rng.random_range(0..n_frames) };
            let end = if rng.random_bool(0.7) {
                n_frames
            } else {
                rng.random_range(start + 1..=n_frames)
            };
            Track {
                shape: Shape {
                    kind: random_kind(&mut rng),
                    cx: rng.random_range(8.0..w - 8.0),
                    cy: rng.random_range(8.0..h - 8.0),
                    rx: rng.random_range(4.0..10.0),
                    ry: rng.random_range(4.0..10.0),
                    color,
                },
                vx: rng.random_range(-1.5..1.5),
                vy: rng.random_range(-1.0..1.0),
                start,
                end,
            }
        })
        .collect();
    let background = textured_background(&mut rng, FRAME_WIDTH, FRAME_HEIGHT);

    let mut frames = Vec::with_capacity(n_frames);
    let mut rasters = Vec::with_capacity(n_frames);
    for t in 0..n_frames {
        let live: Vec<(usize, Shape)> = tracks
            .iter()
            .enumerate()
            .filter(|(_, tr)| (tr.start..tr.end).contains(&t))
            .map(|(i, tr)| {
                let mut s = tr.shape.clone();
                s.cx += tr.vx * t as f64;
                s.cy += tr.vy * t as f64;
                (i, s)
            })
            .collect();
        let shapes: Vec<Shape> = live.iter().map(|(_, s)| s.clone()).collect();
        let (raster, masks) = paint_scene(&background, &shapes);
        let frame_id = format!("{video_id}-f{t:03}");
        let objects = live
            .iter()
            .zip(masks)
            .filter(|(_, m)| m.area() >= MIN_VISIBLE)
            .map(|((i, _), mask)| SegmentedObject {
                track_id: format!("{video_id}-t{i}"),
                frame_id: frame_id.clone(),
                mask,
                category: Some("shape".into()),
            })
            .collect();
        frames.push(Frame {
            image: ImageRef {
                id: frame_id.clone(),
                width: FRAME_WIDTH,
                height: FRAME_HEIGHT,
                uri: format!("frames/{video_id}/{t:03}.png"),
            },
            frame_id,
            objects,
        });
        rasters.push(raster);
    }
    SyntheticVideo {
        annotation: VideoAnnotation {
            video_id,
            fps: FPS,
            frames,
        },
        frames: rasters,
    }
}

pub fn synthetic_videos(count: usize, seed: u64) -> Vec<SyntheticVideo> {
    (0..count).map(|i| synthetic_video(i, seed)).collect()
}

/// Write every frame under `root` at its image uri.
pub fn write_frames(videos: &[SyntheticVideo], root: &Path) -> std::io::Result<()> {
    for v in videos {
        for (f, raster) in v.annotation.frames.iter().zip(&v.frames) {
            let path = root.join(&f.image.uri);
            if let Some(parent) = path.parent() {
                std::fs::create_dir_all(parent)?;
            }
            raster
                .save(&path)
                .map_err(|e| std::io::Error::other(format!("{}: {e}", path.display())))?;
        }
    }
    Ok(())
}
