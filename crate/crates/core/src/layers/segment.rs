//! Gradient-peak boundary segmenter producing one-pixel boundary masks.
//!
//! A deterministic baseline for frames that come without masks: every strong
//! vertical intensity step becomes a boundary line.

use serde::{Deserialize, Serialize};

use crate::imaging::{gaussian_blur, FloatImage, Image};
use crate::par;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SegmentParams {
    pub smoothing_sigma: f32,
    /// Minimum |vertical gradient|, gray levels per row.
    pub min_edge: f32,
    /// Peaks closer than this keep only the stronger one.
    pub min_separation_px: usize,
}

impl Default for SegmentParams {
    fn default() -> Self {
        Self {
            smoothing_sigma: 1.5,
            min_edge: 8.0,
            min_separation_px: 4,
        }
    }
}

/// Boundary-line mask (255 on 0) at the local maxima of the absolute
/// vertical gradient.
pub fn segment_boundaries(frame: &Image, params: &SegmentParams) -> Image {
    let (w, h) = frame.dims();
    let smooth = gaussian_blur(&FloatImage::from_image(frame), params.smoothing_sigma);
    let columns = par::map_range(w, |x| {
        let g: Vec<f32> = (0..h)
            .map(|y| {
                if y == 0 || y + 1 >= h {
                    0.0
                } else {
                    0.5 * (smooth.get(x, y + 1) - smooth.get(x, y - 1)).abs()
                }
            })
            .collect();
        let mut peaks: Vec<(usize, f32)> = (1..h.saturating_sub(1))
            .filter(|&y| g[y] >= params.min_edge && g[y] >= g[y - 1] && g[y] > g[y + 1])
            .map(|y| (y, g[y]))
            .collect();
        // Strongest first; drop peaks too close to an accepted one.
        peaks.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        let mut kept: Vec<usize> = Vec::new();
        for (y, _) in peaks {
            if kept.iter().all(|&k| k.abs_diff(y) >= params.min_separation_px) {
                kept.push(y);
            }
        }
        kept
    });
    let mut mask = Image::new(w, h);
    for (x, ys) in columns.into_iter().enumerate() {
        for y in ys {
            mask.set(x, y, 255);
        }
    }
    mask
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn steps_become_lines() {
        let img = Image::from_fn(6, 100, |_, y| match y {
            0..=29 => 0,
            30..=59 => 150,
            _ => 60,
        });
        let mask = segment_boundaries(&img, &SegmentParams::default());
        let ys: Vec<usize> = (0..100).filter(|&y| mask.get(2, y) > 0).collect();
        assert_eq!(ys.len(), 2);
        assert!(ys[0].abs_diff(30) <= 1 && ys[1].abs_diff(60) <= 1, "{ys:?}");
    }

    #[test]
    fn flat_frame_has_no_boundaries() {
        let mask = segment_boundaries(&Image::filled(10, 30, 90), &SegmentParams::default());
        assert!(mask.as_slice().iter().all(|&v| v == 0));
    }
}
