//! ILM tracing and Case-1 (vertical jitter) height registration.

use serde::{Deserialize, Serialize};

use super::RegistrationError;
use crate::imaging::{gaussian_blur, FloatImage, Image, Stack};
use crate::par;

/// Per-column ILM depth in rows from the top (`None` marks a gap).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IlmTrace {
    pub depths: Vec<Option<f64>>,
    pub mean_height: f64,
}

impl IlmTrace {
    pub fn valid_columns(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.depths
            .iter()
            .enumerate()
            .filter_map(|(x, d)| d.map(|d| (x, d)))
    }

    /// Least-squares line `depth = intercept + slope * column` through the
    /// valid samples.
    pub fn line_fit(&self) -> Option<(f64, f64)> {
        fit_line(self.valid_columns())
    }
}

pub(crate) fn fit_line(points: impl Iterator<Item = (usize, f64)>) -> Option<(f64, f64)> {
    let (mut n, mut sx, mut sy, mut sxx, mut sxy) = (0f64, 0f64, 0f64, 0f64, 0f64);
    for (x, y) in points {
        let x = x as f64;
        n += 1.0;
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    let denom = n * sxx - sx * sx;
    if n < 2.0 || denom.abs() < 1e-12 {
        return None;
    }
    let slope = (n * sxy - sx * sy) / denom;
    Some(((sy - slope * sx) / n, slope))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IlmParams {
    pub smoothing_sigma: f32,
    /// Minimum vertical gradient (gray levels per row) for a column to trace.
    pub noise_floor: f32,
    /// The ILM is the first gradient peak reaching this fraction of the
    /// column's strongest rising edge.
    pub relative_peak: f32,
}

impl Default for IlmParams {
    fn default() -> Self {
        Self {
            smoothing_sigma: 1.0,
            noise_floor: 4.0,
            relative_peak: 0.5,
        }
    }
}

/// Sub-sample offset of a peak from three samples, fitting a Gaussian
/// (parabola in log space) when all are positive and a parabola otherwise.
pub(crate) fn peak_offset(a: f32, b: f32, c: f32) -> f64 {
    let (a, b, c) = (a as f64, b as f64, c as f64);
    let offset = if a > 0.0 && b > 0.0 && c > 0.0 {
        let (la, lb, lc) = (a.ln(), b.ln(), c.ln());
        let den = la - 2.0 * lb + lc;
        if den < 0.0 {
            0.5 * (la - lc) / den
        } else {
            0.0
        }
    } else {
        let den = a - 2.0 * b + c;
        if den < 0.0 {
            0.5 * (a - c) / den
        } else {
            0.0
        }
    };
    offset.clamp(-0.5, 0.5)
}

/// Vertical central-difference profile of column `x`.
pub(crate) fn column_gradient(img: &FloatImage, x: usize) -> Vec<f32> {
    let h = img.height;
    let mut g = vec![0f32; h];
    for y in 1..h.saturating_sub(1) {
        g[y] = 0.5 * (img.get(x, y + 1) - img.get(x, y - 1));
    }
    g
}

pub fn trace_ilm(frame: &Image) -> Result<IlmTrace, RegistrationError> {
    trace_ilm_with(frame, &IlmParams::default())
}

/// Trace the ILM top-down: in each column take the first rising-edge peak
/// that is strong relative to the column and above the noise floor.
pub fn trace_ilm_with(frame: &Image, params: &IlmParams) -> Result<IlmTrace, RegistrationError> {
    let smooth = gaussian_blur(&FloatImage::from_image(frame), params.smoothing_sigma);
    let h = frame.height();
    let depths = par::map_range(frame.width(), |x| {
        let g = column_gradient(&smooth, x);
        let col_max = g.iter().cloned().fold(0.0f32, f32::max);
        let gate = params.noise_floor.max(params.relative_peak * col_max);
        if col_max < params.noise_floor {
            return None;
        }
        (1..h.saturating_sub(1))
            .find(|&y| g[y] >= gate && g[y] >= g[y - 1] && g[y] > g[y + 1])
            .map(|y| y as f64 + peak_offset(g[y - 1], g[y], g[y + 1]))
    });
    let valid: Vec<f64> = depths.iter().flatten().copied().collect();
    if valid.is_empty() {
        return Err(RegistrationError::AllGaps);
    }
    let mean_height = valid.iter().sum::<f64>() / valid.len() as f64;
    Ok(IlmTrace {
        depths,
        mean_height,
    })
}

/// Mean ILM height of every frame.
pub fn ilm_heights(stack: &Stack) -> Result<Vec<f64>, RegistrationError> {
    par::map_indexed(stack.frames(), |_, f| trace_ilm(f).map(|t| t.mean_height))
        .into_iter()
        .collect()
}

/// Flag frames whose mean ILM height moved by more than `drop_threshold_px`
/// relative to any of the previous `window - 1` frames. Each run of flagged
/// consecutive frames contributes its first index; the central index is
/// always included.
pub fn select_reference_frames(
    stack: &Stack,
    drop_threshold_px: f64,
    window: usize,
) -> Result<Vec<usize>, RegistrationError> {
    let window = window.max(2);
    if stack.len() < window {
        return Err(RegistrationError::TooFewFrames {
            frames: stack.len(),
            needed: window,
        });
    }
    let heights = ilm_heights(stack)?;
    Ok(references_from_heights(&heights, drop_threshold_px, window))
}

pub(crate) fn references_from_heights(heights: &[f64], threshold: f64, window: usize) -> Vec<usize> {
    let n = heights.len();
    let mut flagged = vec![false; n];
    for i in 0..n {
        for j in i + 1..(i + window).min(n) {
            if (heights[j] - heights[i]).abs() > threshold {
                flagged[j] = true;
            }
        }
    }
    let mut refs: Vec<usize> = (0..n)
        .filter(|&j| flagged[j] && (j == 0 || !flagged[j - 1]))
        .collect();
    refs.push(n / 2);
    refs.sort_unstable();
    refs.dedup();
    refs
}

/// Roll `frame` so its mean ILM height matches `reference_height`.
/// Returns the aligned frame and the applied downward shift in rows.
pub fn height_align(frame: &Image, reference_height: f64) -> Result<(Image, i64), RegistrationError> {
    let h = trace_ilm(frame)?.mean_height;
    let shift = (reference_height - h).round() as i64;
    Ok((frame.roll_rows(shift), shift))
}

/// Height registration of every frame against the central frame.
pub fn height_adjust_register(stack: &Stack) -> Result<(Stack, Vec<i64>), RegistrationError> {
    if stack.is_empty() {
        return Err(RegistrationError::TooFewFrames { frames: 0, needed: 1 });
    }
    let reference = trace_ilm(stack.frame(stack.len() / 2))?.mean_height;
    let aligned = par::map_indexed(stack.frames(), |_, f| height_align(f, reference))
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;
    let (frames, offsets): (Vec<_>, Vec<_>) = aligned.into_iter().unzip();
    Ok((stack.replace_frames(frames)?, offsets))
}
