use std::sync::OnceLock;

use thiserror::Error;

pub const MAX_PALETTE: usize = 64;
/// Minimum Chebyshev (per-channel max) distance between any two palette colors.
pub const MIN_CHANNEL_DISTANCE: u8 = 32;

#[derive(Debug, Error, PartialEq, Eq)]
#[error("palette size {0} outside 1..={MAX_PALETTE}")]
pub struct PaletteError(pub usize);

fn hsv_to_rgb(h: f64, s: f64, v: f64) -> [u8; 3] {
    let c = v * s;
    let hp = (h / 60.0) % 6.0;
    let x = c * (1.0 - ((hp % 2.0) - 1.0).abs());
    let (r, g, b) = match hp as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    let q = |f: f64| ((f + m) * 255.0).round().clamp(0.0, 255.0) as u8;
    [q(r), q(g), q(b)]
}

fn channel_distance(a: [u8; 3], b: [u8; 3]) -> u8 {
    (0..3).map(|i| a[i].abs_diff(b[i])).max().unwrap_or(0)
}

fn build() -> Vec<[u8; 3]> {
    // Hue visiting order spreads early picks around the wheel.
    let base = [0.0, 120.0, 240.0, 60.0, 180.0, 300.0, 30.0, 150.0, 270.0, 90.0, 210.0, 330.0];
    let hues: Vec<f64> = base.iter().copied().chain(base.iter().map(|h| h + 15.0)).collect();
    let tiers = [
        (1.0, 1.0),
        (1.0, 0.75),
        (0.65, 1.0),
        (1.0, 0.5),
        (0.65, 0.75),
        (0.8, 0.9),
        (0.8, 0.6),
        (1.0, 0.35),
    ];
    let mut out: Vec<[u8; 3]> = Vec::with_capacity(MAX_PALETTE);
    for &(s, v) in &tiers {
        for &h in &hues {
            let c = hsv_to_rgb(h, s, v);
            if out.iter().all(|&p| channel_distance(p, c) >= MIN_CHANNEL_DISTANCE) {
                out.push(c);
                if out.len() == MAX_PALETTE {
                    return out;
                }
            }
        }
    }
    panic!("palette construction yielded only {} colors", out.len());
}

/// `n` deterministic, pairwise distinct, saturated colors. `default_palette(n)`
/// is always a prefix of `default_palette(64)`.
pub fn default_palette(n: usize) -> Result<Vec<[u8; 3]>, PaletteError> {
    static PALETTE: OnceLock<Vec<[u8; 3]>> = OnceLock::new();
    if !(1..=MAX_PALETTE).contains(&n) {
        return Err(PaletteError(n));
    }
    Ok(PALETTE.get_or_init(build)[..n].to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_color_is_fixed() {
        assert_eq!(default_palette(1).unwrap(), vec![[255, 0, 0]]);
        assert_eq!(default_palette(1).unwrap(), default_palette(1).unwrap());
    }

    #[test]
    fn eight_are_distinct() {
        let p = default_palette(8).unwrap();
        for i in 0..8 {
            for j in i + 1..8 {
                assert_ne!(p[i], p[j]);
            }
        }
    }

    #[test]
    fn sixty_four_exhaustive_pairwise_distance() {
        let p = default_palette(64).unwrap();
        assert_eq!(p.len(), 64);
        let mut min = u8::MAX;
        for i in 0..64 {
            for j in i + 1..64 {
                let d = (0..3).map(|k| p[i][k].abs_diff(p[j][k])).max().unwrap();
                min = min.min(d);
            }
        }
        assert!(min >= 32, "min pairwise channel distance {min}");
    }

    #[test]
    fn colors_stay_away_from_white_tag_text() {
        for c in default_palette(64).unwrap() {
            assert!(c.iter().any(|&ch| ch <= 120), "{c:?} too close to white");
        }
    }

    #[test]
    fn out_of_range_sizes_rejected() {
        assert_eq!(default_palette(0), Err(PaletteError(0)));
        assert_eq!(default_palette(65), Err(PaletteError(65)));
    }
}
