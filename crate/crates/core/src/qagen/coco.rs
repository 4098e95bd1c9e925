//! Ingestion of COCO-style video instance segmentation files (YouTube-VIS layout).
//!
//! Field mapping:
//!
//! | source                               | target                                   |
//! |--------------------------------------|------------------------------------------|
//! | `videos[].id`                        | `video_id = "vid{id}"`                   |
//! | `videos[].file_names[t]`             | frame `t`: `frame_id = image.id = "vid{id}-f{t:05}"`, `image.uri = file_name` |
//! | `videos[].width/height`              | `image.width/height`                     |
//! | `annotations[].id`                   | `track_id = "trk{id}"`                   |
//! | `annotations[].segmentations[t]`     | mask in frame `t` (`null` = absent)      |
//! | `annotations[].category_id`          | `category` via `categories[].name`       |
//!
//! Segmentations may be uncompressed (`counts` as integers) or compressed
//! (`counts` as a string) COCO RLE. COCO RLE is column-major; masks are
//! transposed into the crate's row-major [`Mask`]. The files carry no frame
//! rate, so the caller supplies one.

use std::collections::HashMap;

use serde::Deserialize;
use thiserror::Error;

use super::{Frame, VideoAnnotation};
use crate::model::{ImageRef, Mask, SegmentedObject};

#[derive(Debug, Error)]
pub enum CocoError {
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("annotation {ann}: {message}")]
    Segmentation { ann: u64, message: String },
    #[error("annotation {0} references unknown video {1}")]
    UnknownVideo(u64, u64),
}

#[derive(Deserialize)]
struct CocoFile {
    videos: Vec<CocoVideo>,
    #[serde(default)]
    annotations: Vec<CocoTrack>,
    #[serde(default)]
    categories: Vec<CocoCategory>,
}

#[derive(Deserialize)]
struct CocoVideo {
    id: u64,
    width: u32,
    height: u32,
    file_names: Vec<String>,
}

#[derive(Deserialize)]
struct CocoTrack {
    id: u64,
    video_id: u64,
    #[serde(default)]
    category_id: Option<u64>,
    segmentations: Vec<Option<CocoRle>>,
}

#[derive(Deserialize)]
struct CocoCategory {
    id: u64,
    name: String,
}

#[derive(Deserialize)]
pub struct CocoRle {
    pub size: [u32; 2],
    pub counts: CocoCounts,
}

#[derive(Deserialize)]
#[serde(untagged)]
pub enum CocoCounts {
    Raw(Vec<u32>),
    Compressed(String),
}

/// Decode the compressed COCO counts string (5-bit groups, delta-coded after the third run).
pub fn decode_coco_counts(s: &str) -> Result<Vec<u32>, String> {
    let bytes = s.as_bytes();
    let mut counts: Vec<i64> = Vec::new();
    let mut p = 0;
    while p < bytes.len() {
        let mut x: i64 = 0;
        let mut k = 0;
        loop {
            if p >= bytes.len() {
                return Err("truncated counts string".into());
            }
            let c = bytes[p] as i64 - 48;
            if !(0..64).contains(&c) {
                return Err(format!("invalid character {:?}", bytes[p] as char));
            }
            x |= (c & 0x1f) << (5 * k);
            let more = c & 0x20 != 0;
            p += 1;
            k += 1;
            if !more {
                if c & 0x10 != 0 {
                    x |= -1i64 << (5 * k);
                }
                break;
            }
        }
        let m = counts.len();
        if m > 2 {
            x += counts[m - 2];
        }
        counts.push(x);
    }
    counts
        .into_iter()
        .map(|c| u32::try_from(c).map_err(|_| format!("negative run {c}")))
        .collect()
}

/// Inverse of [`decode_coco_counts`].
pub fn encode_coco_counts(counts: &[u32]) -> String {
    let mut out = String::new();
    for i in 0..counts.len() {
        let mut x = counts[i] as i64;
        if i > 2 {
            x -= counts[i - 2] as i64;
        }
        loop {
            let mut c = x & 0x1f;
            x >>= 5;
            let more = if c & 0x10 != 0 { x != -1 } else { x != 0 };
            if more {
                c |= 0x20;
            }
            out.push((c + 48) as u8 as char);
            if !more {
                break;
            }
        }
    }
    out
}

/// Column-major COCO runs to a row-major mask.
pub fn coco_rle_to_mask(rle: &CocoRle) -> Result<Mask, String> {
    let [h, w] = rle.size;
    let counts = match &rle.counts {
        CocoCounts::Raw(c) => c.clone(),
        CocoCounts::Compressed(s) => decode_coco_counts(s)?,
    };
    let total: u64 = counts.iter().map(|&c| c as u64).sum();
    if total != w as u64 * h as u64 {
        return Err(format!("runs cover {total} cells, mask has {}", w as u64 * h as u64));
    }
    let mut mask = Mask::new(w, h);
    let mut idx = 0u64;
    let mut value = false;
    for c in counts {
        if value {
            for i in idx..idx + c as u64 {
                let (x, y) = ((i / h as u64) as u32, (i % h as u64) as u32);
                mask.set(x, y, true);
            }
        }
        idx += c as u64;
        value = !value;
    }
    Ok(mask)
}

pub fn parse_coco_videos(json: &str, fps: f64) -> Result<Vec<VideoAnnotation>, CocoError> {
    let file: CocoFile = serde_json::from_str(json)?;
    let names: HashMap<u64, &str> = file.categories.iter().map(|c| (c.id, c.name.as_str())).collect();
    let mut videos: Vec<VideoAnnotation> = Vec::with_capacity(file.videos.len());
    let mut index: HashMap<u64, usize> = HashMap::new();
    for v in &file.videos {
        let video_id = format!("vid{}", v.id);
        let frames = v
            .file_names
            .iter()
            .enumerate()
            .map(|(t, name)| {
                let frame_id = format!("{video_id}-f{t:05}");
                Frame {
                    image: ImageRef {
                        id: frame_id.clone(),
                        width: v.width,
                        height: v.height,
                        uri: name.clone(),
                    },
                    frame_id,
                    objects: Vec::new(),
                }
            })
            .collect();
        index.insert(v.id, videos.len());
        videos.push(VideoAnnotation { video_id, fps, frames });
    }
    let mut tracks: Vec<&CocoTrack> = file.annotations.iter().collect();
    tracks.sort_by_key(|t| t.id);
    for t in tracks {
        let vi = *index.get(&t.video_id).ok_or(CocoError::UnknownVideo(t.id, t.video_id))?;
        let video = &mut videos[vi];
        for (frame_idx, seg) in t.segmentations.iter().enumerate() {
            let Some(seg) = seg else { continue };
            let frame = video.frames.get_mut(frame_idx).ok_or_else(|| CocoError::Segmentation {
                ann: t.id,
                message: format!("frame {frame_idx} beyond video length"),
            })?;
            let mask = coco_rle_to_mask(seg).map_err(|message| CocoError::Segmentation { ann: t.id, message })?;
            if mask.dimensions() != (frame.image.width, frame.image.height) {
                return Err(CocoError::Segmentation {
                    ann: t.id,
                    message: format!("mask {:?} does not match video size", mask.dimensions()),
                });
            }
            if mask.is_empty() {
                continue;
            }
            frame.objects.push(SegmentedObject {
                track_id: format!("trk{}", t.id),
                frame_id: frame.frame_id.clone(),
                mask,
                category: t.category_id.and_then(|c| names.get(&c)).map(|s| s.to_string()),
            });
        }
    }
    Ok(videos)
}

pub fn load_coco_videos(path: &std::path::Path, fps: f64) -> Result<Vec<VideoAnnotation>, CocoError> {
    parse_coco_videos(&std::fs::read_to_string(path)?, fps)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compressed_counts_round_trip() {
        let cases: Vec<Vec<u32>> = vec![
            vec![5],
            vec![0, 3, 2],
            vec![10, 20, 30, 5, 100, 1, 7000],
            vec![3, 1, 1, 1, 40, 2, 2, 900, 1],
        ];
        for c in cases {
            let s = encode_coco_counts(&c);
            assert_eq!(decode_coco_counts(&s).unwrap(), c, "{s}");
        }
    }

    #[test]
    fn known_pycocotools_string() {
        // pycocotools encodes runs [1, 2, 3] of a 2x3 mask as "123".
        assert_eq!(decode_coco_counts("123").unwrap(), vec![1, 2, 3]);
    }

    #[test]
    fn column_major_is_transposed() {
        // 2 rows x 3 cols; column-major runs: skip 1, set 2 -> cells (row1,col0) and (row0,col1).
        let rle = CocoRle {
            size: [2, 3],
            counts: CocoCounts::Raw(vec![1, 2, 3]),
        };
        let m = coco_rle_to_mask(&rle).unwrap();
        assert!(m.get(0, 1));
        assert!(m.get(1, 0));
        assert_eq!(m.area(), 2);
    }

    #[test]
    fn parses_a_small_file() {
        let json = r#"{
          "videos": [{"id": 7, "width": 3, "height": 2, "file_names": ["a/0.png", "a/1.png"]}],
          "categories": [{"id": 1, "name": "car"}],
          "annotations": [
            {"id": 11, "video_id": 7, "category_id": 1,
             "segmentations": [{"size": [2, 3], "counts": [0, 2, 4]}, null]},
            {"id": 12, "video_id": 7, "category_id": 1,
             "segmentations": [{"size": [2, 3], "counts": "42"}, {"size": [2, 3], "counts": [4, 2]}]}
          ]
        }"#;
        let v = parse_coco_videos(json, 6.0).unwrap();
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].frames.len(), 2);
        assert_eq!(v[0].frames[0].objects.len(), 2);
        assert_eq!(v[0].frames[1].objects.len(), 1);
        assert_eq!(v[0].frames[0].objects[0].category.as_deref(), Some("car"));
        assert_eq!(v[0].frames[0].objects[0].track_id, "trk11");
        v[0].check().unwrap();
    }
}
