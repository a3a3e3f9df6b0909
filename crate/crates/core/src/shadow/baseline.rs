//! Classical image-processing baselines for shadow handling. These are
//! benchmarks only and never feed the suppression stage.

use serde::{Deserialize, Serialize};

use super::ShadowError;
use crate::imaging::{box_blur3, clamp_round, FloatImage, Image};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "method")]
pub enum Baseline {
    /// Horizontal-gradient Sobel kernel, absolute response.
    VerticalEdge,
    /// Moving mean down each column over `n` rows.
    RollingAvg { n: usize },
    ValueScale { alpha: f64 },
    /// `max(0, I(x) - I(x - 1))`, first column 0.
    ColumnDiff,
    /// 3x3 box blur, then values below `threshold` set to 0.
    BlurThreshold { threshold: u8 },
}

pub fn classical_baseline(img: &Image, method: Baseline) -> Result<Image, ShadowError> {
    let (w, h) = img.dims();
    Ok(match method {
        Baseline::VerticalEdge => {
            let f = FloatImage::from_image(img);
            Image::from_fn(w, h, |x, y| {
                let (x, y) = (x as isize, y as isize);
                let p = |dx: isize, dy: isize| f.get_clamped(x + dx, y + dy) as f64;
                let g = (p(1, -1) + 2.0 * p(1, 0) + p(1, 1)) - (p(-1, -1) + 2.0 * p(-1, 0) + p(-1, 1));
                clamp_round(g.abs())
            })
        }
        Baseline::RollingAvg { n } => {
            if n == 0 {
                return Err(ShadowError::BadParams("rolling window must be positive".into()));
            }
            let (before, after) = (n / 2, (n - 1) / 2);
            Image::from_fn(w, h, |x, y| {
                let (a, b) = (y.saturating_sub(before), (y + after + 1).min(h));
                let sum: u32 = (a..b).map(|yy| img.get(x, yy) as u32).sum();
                clamp_round(sum as f64 / (b - a) as f64)
            })
        }
        Baseline::ValueScale { alpha } => {
            if !(alpha > 0.0) || !alpha.is_finite() {
                return Err(ShadowError::BadParams(format!("scale factor {alpha} must be positive")));
            }
            Image::from_fn(w, h, |x, y| clamp_round(alpha * img.get(x, y) as f64))
        }
        Baseline::ColumnDiff => Image::from_fn(w, h, |x, y| {
            if x == 0 {
                0
            } else {
                img.get(x, y).saturating_sub(img.get(x - 1, y))
            }
        }),
        Baseline::BlurThreshold { threshold } => {
            let blurred = box_blur3(&FloatImage::from_image(img)).to_image();
            Image::from_fn(w, h, |x, y| {
                let v = blurred.get(x, y);
                if v < threshold {
                    0
                } else {
                    v
                }
            })
        }
    })
}
