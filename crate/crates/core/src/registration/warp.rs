//! Inverse-mapped bilinear resampling by a homography or a dense flow field.

use serde::{Deserialize, Serialize};

use super::{Homography, RegistrationError};
use crate::imaging::{clamp_round, FloatImage, Image};
use crate::par;

/// Dense per-pixel displacement: `reference(x, y) ~ target(x + u, y + v)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowField {
    pub width: usize,
    pub height: usize,
    pub u: Vec<f32>,
    pub v: Vec<f32>,
}

impl FlowField {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            u: vec![0.0; width * height],
            v: vec![0.0; width * height],
        }
    }

    pub fn constant(width: usize, height: usize, u: f32, v: f32) -> Self {
        Self {
            width,
            height,
            u: vec![u; width * height],
            v: vec![v; width * height],
        }
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> (f32, f32) {
        let i = y * self.width + x;
        (self.u[i], self.v[i])
    }

    pub fn median(&self) -> (f32, f32) {
        (median(&self.u), median(&self.v))
    }
}

fn median(v: &[f32]) -> f32 {
    if v.is_empty() {
        return f32::NAN;
    }
    let mut s = v.to_vec();
    s.sort_by(|a, b| a.total_cmp(b));
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

/// Resample `img` so that `out(p) = img(h^-1 p)`; samples falling outside
/// the source are 0.
pub fn warp_perspective(img: &Image, h: &Homography) -> Result<Image, RegistrationError> {
    if h.matrix().determinant().abs() <= 1e-12 {
        return Err(RegistrationError::Degenerate("homography is singular".into()));
    }
    let src = FloatImage::from_image(img);
    let inv = h.inverse();
    let (w, hgt) = img.dims();
    let mut out = vec![0u8; w * hgt];
    par::for_each_row(&mut out, w, |y, row| {
        for (x, o) in row.iter_mut().enumerate() {
            *o = inv
                .apply(x as f64, y as f64)
                .and_then(|(sx, sy)| src.sample(sx, sy))
                .map_or(0, |v| clamp_round(v as f64));
        }
    });
    Ok(Image::from_vec(w, hgt, out).expect("dimensions preserved"))
}

/// Resample `img` at `(x + u, y + v)`; out-of-bounds samples are 0.
pub fn warp_flow(img: &Image, flow: &FlowField) -> Result<Image, RegistrationError> {
    if (flow.width, flow.height) != img.dims() {
        return Err(RegistrationError::DimensionMismatch {
            a: img.dims(),
            b: (flow.width, flow.height),
        });
    }
    let src = FloatImage::from_image(img);
    let w = img.width();
    let mut out = vec![0u8; w * img.height()];
    par::for_each_row(&mut out, w, |y, row| {
        for (x, o) in row.iter_mut().enumerate() {
            let (u, v) = flow.at(x, y);
            *o = src
                .sample(x as f64 + u as f64, y as f64 + v as f64)
                .map_or(0, |s| clamp_round(s as f64));
        }
    });
    Ok(Image::from_vec(w, img.height(), out).expect("dimensions preserved"))
}

/// Float variant used inside iterative estimators; borders replicate.
pub(crate) fn warp_flow_float(img: &FloatImage, u: &[f32], v: &[f32]) -> FloatImage {
    let w = img.width;
    let mut out = FloatImage::zeros(w, img.height);
    par::for_each_row(&mut out.data, w, |y, row| {
        for (x, o) in row.iter_mut().enumerate() {
            let i = y * w + x;
            *o = img.sample_clamped(x as f64 + u[i] as f64, y as f64 + v[i] as f64);
        }
    });
    out
}
