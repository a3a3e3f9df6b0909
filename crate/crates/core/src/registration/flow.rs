//! Dense coarse-to-fine Lucas-Kanade optical flow.
//!
//! At each pyramid level the target is warped by the current estimate and a
//! windowed 2x2 least-squares system is solved at every pixel. Window sums
//! come from integral images, so an iteration costs O(pixels) regardless of
//! window size. A small ridge term keeps textureless pixels (and the
//! unconstrained direction along straight edges) from drifting.

use serde::{Deserialize, Serialize};

use super::warp::{warp_flow_float, FlowField};
use super::RegistrationError;
use crate::imaging::{gaussian_blur, FloatImage, Image};
use crate::par;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FlowParams {
    pub pyramid_levels: usize,
    /// Side of the square aggregation window, pixels (odd).
    pub window: usize,
    pub iterations: usize,
    /// Gaussian pre-smoothing applied at every level.
    pub presmooth_sigma: f32,
    /// Ridge added to the normal equations, per window pixel (gray^2 / px^2).
    pub regularization: f32,
}

impl Default for FlowParams {
    fn default() -> Self {
        Self {
            pyramid_levels: 3,
            window: 15,
            iterations: 10,
            presmooth_sigma: 1.0,
            regularization: 1.0,
        }
    }
}

fn upsample_flow(u: &[f32], cw: usize, ch: usize, w: usize, h: usize) -> Vec<f32> {
    let coarse = FloatImage {
        width: cw,
        height: ch,
        data: u.to_vec(),
    };
    let mut out = vec![0f32; w * h];
    par::for_each_row(&mut out, w, |y, row| {
        for (x, o) in row.iter_mut().enumerate() {
            *o = 2.0 * coarse.sample_clamped(x as f64 / 2.0, y as f64 / 2.0);
        }
    });
    out
}

fn refine_level(
    reference: &FloatImage,
    target: &FloatImage,
    u: &mut [f32],
    v: &mut [f32],
    params: &FlowParams,
) {
    let (w, h) = (reference.width, reference.height);
    let radius = params.window / 2;
    let area = ((2 * radius + 1) * (2 * radius + 1)) as f32;
    let lambda = params.regularization * area;
    let max_step = radius.max(1) as f32;
    let (rgx, rgy) = reference.gradients();

    for _ in 0..params.iterations {
        let warped = warp_flow_float(target, u, v);
        let (wgx, wgy) = warped.gradients();
        let gx = rgx.zip_map(&wgx, |a, b| 0.5 * (a + b));
        let gy = rgy.zip_map(&wgy, |a, b| 0.5 * (a + b));
        let it = warped.zip_map(reference, |a, b| a - b);

        let sxx = gx.zip_map(&gx, |a, b| a * b).box_sum(radius);
        let sxy = gx.zip_map(&gy, |a, b| a * b).box_sum(radius);
        let syy = gy.zip_map(&gy, |a, b| a * b).box_sum(radius);
        let sxt = gx.zip_map(&it, |a, b| a * b).box_sum(radius);
        let syt = gy.zip_map(&it, |a, b| a * b).box_sum(radius);

        let mut max_update = 0f32;
        for i in 0..w * h {
            let a = sxx.data[i] + lambda;
            let b = sxy.data[i];
            let d = syy.data[i] + lambda;
            let det = a * d - b * b;
            if det <= 0.0 {
                continue;
            }
            let du = -(d * sxt.data[i] - b * syt.data[i]) / det;
            let dv = -(a * syt.data[i] - b * sxt.data[i]) / det;
            let du = du.clamp(-max_step, max_step);
            let dv = dv.clamp(-max_step, max_step);
            u[i] += du;
            v[i] += dv;
            max_update = max_update.max(du.abs()).max(dv.abs());
        }
        if max_update < 1e-3 {
            break;
        }
    }
}

/// Estimate `(u, v)` per pixel such that `reference(x, y) ~ target(x + u, y + v)`.
pub fn optical_flow(
    reference: &Image,
    target: &Image,
    params: &FlowParams,
) -> Result<FlowField, RegistrationError> {
    if reference.dims() != target.dims() {
        return Err(RegistrationError::DimensionMismatch {
            a: reference.dims(),
            b: target.dims(),
        });
    }
    let levels = params.pyramid_levels.max(1);
    let mut ref_pyr = vec![FloatImage::from_image(reference)];
    let mut tgt_pyr = vec![FloatImage::from_image(target)];
    for _ in 1..levels {
        let (r, t) = (ref_pyr.last().unwrap(), tgt_pyr.last().unwrap());
        if r.width < 16 || r.height < 16 {
            break;
        }
        let (r, t) = (r.downsample(), t.downsample());
        ref_pyr.push(r);
        tgt_pyr.push(t);
    }

    let top = ref_pyr.len() - 1;
    let (mut cw, mut ch) = (ref_pyr[top].width, ref_pyr[top].height);
    let mut u = vec![0f32; cw * ch];
    let mut v = vec![0f32; cw * ch];
    for level in (0..=top).rev() {
        let r = gaussian_blur(&ref_pyr[level], params.presmooth_sigma);
        let t = gaussian_blur(&tgt_pyr[level], params.presmooth_sigma);
        if (r.width, r.height) != (cw, ch) {
            u = upsample_flow(&u, cw, ch, r.width, r.height);
            v = upsample_flow(&v, cw, ch, r.width, r.height);
            cw = r.width;
            ch = r.height;
        }
        refine_level(&r, &t, &mut u, &mut v, params);
    }
    Ok(FlowField {
        width: cw,
        height: ch,
        u,
        v,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blobs(w: usize, h: usize) -> Image {
        Image::from_fn(w, h, |x, y| {
            let (xf, yf) = (x as f64, y as f64);
            let v = 120.0
                + 50.0 * (xf / 7.0).sin() * (yf / 9.0).cos()
                + 30.0 * ((xf + yf) / 13.0).sin();
            v as u8
        })
    }

    #[test]
    fn identical_images_give_zero_flow() {
        let img = blobs(64, 64);
        let f = optical_flow(&img, &img, &FlowParams::default()).unwrap();
        let (mu, mv) = f.median();
        assert!(mu.abs() < 0.05 && mv.abs() < 0.05);
    }

    #[test]
    fn recovers_small_translation() {
        let w = 96;
        let reference = blobs(w, w);
        // target(x, y) = reference(x - 2, y - 1)  =>  (u, v) = (2, 1)
        let target = Image::from_fn(w, w, |x, y| reference.get(x.saturating_sub(2), y.saturating_sub(1)));
        let f = optical_flow(&reference, &target, &FlowParams::default()).unwrap();
        let (mu, mv) = f.median();
        assert!((mu - 2.0).abs() < 0.3 && (mv - 1.0).abs() < 0.3, "{mu} {mv}");
    }

    #[test]
    fn dimension_mismatch() {
        assert!(matches!(
            optical_flow(&Image::new(8, 8), &Image::new(8, 9), &FlowParams::default()),
            Err(RegistrationError::DimensionMismatch { .. })
        ));
    }
}
