//! Shadow columns as dips of the column-mean profile below its running median.

use serde::{Deserialize, Serialize};

use super::ShadowRegion;
use crate::imaging::{Image, Stack};
use crate::par;

const PROFILE_SMOOTHING: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectParams {
    /// A column is shadowed when it falls below `(1 - dip_fraction)` of the
    /// local median.
    pub dip_fraction: f64,
    /// Minimum running-median window in columns. The window is widened to
    /// more than twice the widest accepted region so that a shadow never
    /// fills half of it and drags the median down.
    pub median_window: usize,
    pub min_width: usize,
    /// Widest accepted region as a fraction of the frame width.
    pub max_width_frac: f64,
}

impl Default for DetectParams {
    fn default() -> Self {
        Self {
            dip_fraction: 0.25,
            median_window: 51,
            min_width: 2,
            max_width_frac: 0.2,
        }
    }
}

fn column_means(frame: &Image) -> Vec<f64> {
    let (w, h) = frame.dims();
    let mut sums = vec![0u64; w];
    for y in 0..h {
        for (s, &v) in sums.iter_mut().zip(frame.row(y)) {
            *s += v as u64;
        }
    }
    sums.into_iter().map(|s| s as f64 / h as f64).collect()
}

/// Centered moving mean; windows shrink at the borders.
fn moving_mean(v: &[f64], window: usize) -> Vec<f64> {
    let r = window / 2;
    (0..v.len())
        .map(|i| {
            let (a, b) = (i.saturating_sub(r), (i + r + 1).min(v.len()));
            v[a..b].iter().sum::<f64>() / (b - a) as f64
        })
        .collect()
}

/// Centered running median; windows shrink at the borders.
fn running_median(v: &[f64], window: usize) -> Vec<f64> {
    let r = window / 2;
    (0..v.len())
        .map(|i| {
            let (a, b) = (i.saturating_sub(r), (i + r + 1).min(v.len()));
            let mut w = v[a..b].to_vec();
            w.sort_by(f64::total_cmp);
            let n = w.len();
            if n % 2 == 1 {
                w[n / 2]
            } else {
                0.5 * (w[n / 2 - 1] + w[n / 2])
            }
        })
        .collect()
}

/// Column intervals of one frame that dip below the local background.
///
/// Marks come from the smoothed profile, which suppresses single noisy
/// columns; each marked run is then grown over neighbouring columns whose raw
/// mean is also below the threshold, recovering the edges that smoothing blurs.
pub fn detect_shadow_columns(frame: &Image, frame_index: usize, params: &DetectParams) -> Vec<ShadowRegion> {
    let w = frame.width();
    if w == 0 || frame.height() == 0 {
        return Vec::new();
    }
    let raw = column_means(frame);
    let smooth = moving_mean(&raw, PROFILE_SMOOTHING);
    let max_width = params.max_width_frac * w as f64;
    let window = params
        .median_window
        .max(2 * max_width.ceil() as usize + 3)
        .min(if w % 2 == 1 { w } else { w - 1 }.max(1));
    let median = running_median(&smooth, window);
    let factor = 1.0 - params.dip_fraction;
    let below = |profile: &[f64], x: usize| profile[x] < factor * median[x];

    let mut runs: Vec<(usize, usize)> = Vec::new();
    let mut x = 0;
    while x < w {
        if below(&smooth, x) {
            let start = x;
            while x < w && below(&smooth, x) {
                x += 1;
            }
            runs.push((start, x));
        } else {
            x += 1;
        }
    }
    for run in &mut runs {
        while run.0 > 0 && below(&raw, run.0 - 1) {
            run.0 -= 1;
        }
        while run.1 < w && below(&raw, run.1) {
            run.1 += 1;
        }
    }
    // Growing can make neighbouring runs touch.
    let mut merged: Vec<(usize, usize)> = Vec::new();
    for r in runs {
        match merged.last_mut() {
            Some(last) if r.0 <= last.1 => last.1 = last.1.max(r.1),
            _ => merged.push(r),
        }
    }
    merged
        .into_iter()
        .filter(|&(a, b)| b - a >= params.min_width && (b - a) as f64 <= max_width)
        .map(|(a, b)| ShadowRegion::columns(frame_index, a, b))
        .collect()
}

/// Detection on every frame, regions ordered by frame then column.
pub fn detect_stack_shadows(stack: &Stack, params: &DetectParams) -> Vec<ShadowRegion> {
    par::map_indexed(stack.frames(), |i, f| detect_shadow_columns(f, i, params))
        .into_iter()
        .flatten()
        .collect()
}
