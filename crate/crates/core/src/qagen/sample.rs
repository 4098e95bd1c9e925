use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{QaGenError, VideoAnnotation};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameRef {
    pub index: usize,
    pub frame_id: String,
}

/// Two sampled frames of one video and the tracks visible in both.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FramePair {
    pub video_id: String,
    pub first: FrameRef,
    pub second: FrameRef,
    pub shared_tracks: BTreeSet<String>,
}

/// Frame indices kept when sampling every `interval_seconds`.
///
/// Frame `i` is shown at `i / fps`. Ticks run at `0, interval, 2*interval, ..`
/// while the tick is earlier than the video duration `n / fps`; each tick keeps
/// the first frame at or after it, clamped to the last frame. Consecutive ticks
/// landing on the same frame keep it once.
pub fn sampled_frame_indices(frame_count: usize, fps: f64, interval_seconds: f64) -> Vec<usize> {
    let mut out: Vec<usize> = Vec::new();
    if frame_count == 0 {
        return out;
    }
    let duration = frame_count as f64 / fps;
    let mut k = 0u64;
    loop {
        let tick = k as f64 * interval_seconds;
        if tick >= duration - 1e-9 {
            break;
        }
        // tolerance absorbs tick * fps landing a hair above an integer
        let idx = ((tick * fps - 1e-9).ceil().max(0.0) as usize).min(frame_count - 1);
        if out.last() != Some(&idx) {
            out.push(idx);
        }
        k += 1;
    }
    out
}

/// Pair consecutive sampled frames, dropping pairs without a shared track.
pub fn sample_pairs(video: &VideoAnnotation, interval_seconds: f64) -> Result<Vec<FramePair>, QaGenError> {
    if !(interval_seconds > 0.0) || !interval_seconds.is_finite() {
        return Err(QaGenError::InvalidInterval(interval_seconds));
    }
    if !(video.fps > 0.0) {
        return Err(QaGenError::InvalidFps {
            video_id: video.video_id.clone(),
            fps: video.fps,
        });
    }
    if video.frames.len() < 2 {
        return Ok(Vec::new());
    }
    let kept = sampled_frame_indices(video.frames.len(), video.fps, interval_seconds);
    let mut pairs = Vec::new();
    for w in kept.windows(2) {
        let (a, b) = (&video.frames[w[0]], &video.frames[w[1]]);
        let ta: BTreeSet<&str> = a.objects.iter().map(|o| o.track_id.as_str()).collect();
        let shared: BTreeSet<String> = b
            .objects
            .iter()
            .filter(|o| ta.contains(o.track_id.as_str()))
            .map(|o| o.track_id.clone())
            .collect();
        if shared.is_empty() {
            continue;
        }
        pairs.push(FramePair {
            video_id: video.video_id.clone(),
            first: FrameRef {
                index: w[0],
                frame_id: a.frame_id.clone(),
            },
            second: FrameRef {
                index: w[1],
                frame_id: b.frame_id.clone(),
            },
            shared_tracks: shared,
        });
    }
    Ok(pairs)
}
