//! Retinal slab quadrilateral from the ILM and the deepest falling edge.

use nalgebra::Point2;
use serde::{Deserialize, Serialize};

use super::ilm::{column_gradient, fit_line, peak_offset, trace_ilm_with, IlmParams};
use super::RegistrationError;
use crate::imaging::{gaussian_blur, FloatImage, Image};
use crate::par;

/// Samples further than this from the fitted edge line are treated as
/// outliers and excluded from the refit and from the endpoint search.
const OUTLIER_PX: f64 = 3.0;

/// Corners in order: top-left, top-right, bottom-right, bottom-left.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlabQuad {
    pub corners: [(f64, f64); 4],
}

impl SlabQuad {
    pub fn points(&self) -> [Point2<f64>; 4] {
        self.corners.map(|(x, y)| Point2::new(x, y))
    }
}

/// Per-column depth of the deepest strong falling edge (bright above, dark below).
pub fn trace_bottom(frame: &Image, params: &IlmParams) -> Vec<Option<f64>> {
    let smooth = gaussian_blur(&FloatImage::from_image(frame), params.smoothing_sigma);
    let h = frame.height();
    par::map_range(frame.width(), |x| {
        let g: Vec<f32> = column_gradient(&smooth, x).into_iter().map(|v| -v).collect();
        let col_max = g.iter().cloned().fold(0.0f32, f32::max);
        if col_max < params.noise_floor {
            return None;
        }
        let gate = params.noise_floor.max(params.relative_peak * col_max);
        (1..h.saturating_sub(1))
            .rev()
            .find(|&y| g[y] >= gate && g[y] > g[y - 1] && g[y] >= g[y + 1])
            .map(|y| y as f64 + peak_offset(g[y - 1], g[y], g[y + 1]))
    })
}

/// Robust line through a trace: fit, drop samples off the line, refit.
/// Returns `(intercept, slope, first_inlier_col, last_inlier_col)`.
fn robust_edge(depths: &[Option<f64>]) -> Option<(f64, f64, usize, usize)> {
    let valid = || depths.iter().enumerate().filter_map(|(x, d)| d.map(|d| (x, d)));
    let (mut b, mut m) = fit_line(valid())?;
    for _ in 0..3 {
        let inliers: Vec<_> = valid()
            .filter(|&(x, d)| (d - (b + m * x as f64)).abs() <= OUTLIER_PX)
            .collect();
        let (nb, nm) = fit_line(inliers.iter().copied())?;
        b = nb;
        m = nm;
    }
    let inliers: Vec<usize> = valid()
        .filter(|&(x, d)| (d - (b + m * x as f64)).abs() <= OUTLIER_PX)
        .map(|(x, _)| x)
        .collect();
    Some((b, m, *inliers.first()?, *inliers.last()?))
}

/// Quadrilateral bounding the slab: each edge trace is summarized by a line
/// evaluated at its leftmost and rightmost supporting columns.
pub fn estimate_slab_quad(frame: &Image) -> Result<SlabQuad, RegistrationError> {
    estimate_slab_quad_with(frame, &IlmParams::default())
}

pub fn estimate_slab_quad_with(frame: &Image, params: &IlmParams) -> Result<SlabQuad, RegistrationError> {
    let top = trace_ilm_with(frame, params).map_err(|_| RegistrationError::NoSlab)?;
    let bottom = trace_bottom(frame, params);
    let (tb, tm, tl, tr) = robust_edge(&top.depths).ok_or(RegistrationError::NoSlab)?;
    let (bb, bm, bl, br) = robust_edge(&bottom).ok_or(RegistrationError::NoSlab)?;
    let at = |b: f64, m: f64, x: usize| (x as f64, b + m * x as f64);
    let quad = SlabQuad {
        corners: [at(tb, tm, tl), at(tb, tm, tr), at(bb, bm, br), at(bb, bm, bl)],
    };
    if quad.corners[3].1 <= quad.corners[0].1 || quad.corners[2].1 <= quad.corners[1].1 {
        return Err(RegistrationError::NoSlab);
    }
    Ok(quad)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn slab(w: usize, h: usize, top: f64, bottom: f64, tilt: f64) -> Image {
        Image::from_fn(w, h, |x, y| {
            let y = y as f64;
            let off = tilt * x as f64;
            let rise = ((y - top - off + 1.0) / 2.0).clamp(0.0, 1.0);
            let fall = ((bottom + off + 1.0 - y) / 2.0).clamp(0.0, 1.0);
            (150.0 * rise.min(fall)).round() as u8
        })
    }

    #[test]
    fn flat_slab_corners() {
        let q = estimate_slab_quad(&slab(120, 330, 40.0, 290.0, 0.0)).unwrap();
        let expected = [(0.0, 40.0), (119.0, 40.0), (119.0, 290.0), (0.0, 290.0)];
        for (c, e) in q.corners.iter().zip(expected) {
            assert!((c.0 - e.0).abs() <= 1.0 && (c.1 - e.1).abs() <= 1.0, "{c:?} vs {e:?}");
        }
    }

    #[test]
    fn tilted_slab_follows_tilt() {
        let q = estimate_slab_quad(&slab(200, 330, 40.0, 200.0, 0.1)).unwrap();
        assert!((q.corners[1].1 - (40.0 + 0.1 * 199.0)).abs() <= 1.0);
        assert!((q.corners[2].1 - (200.0 + 0.1 * 199.0)).abs() <= 1.0);
    }

    #[test]
    fn blank_frame_has_no_slab() {
        assert!(matches!(
            estimate_slab_quad(&Image::new(64, 64)),
            Err(RegistrationError::NoSlab)
        ));
    }
}
