//! Difference-of-Gaussians blob detector with gradient-histogram descriptors.

use std::f64::consts::PI;

use super::{DetectorParams, Keypoint};
use crate::imaging::{gaussian_blur, FloatImage, Image};
use crate::par;

const BASE_SIGMA: f32 = 1.6;
/// Blur already present in a captured image.
const INPUT_SIGMA: f32 = 0.5;
const ORI_BINS: usize = 36;
const DESC_GRID: usize = 4;
const DESC_BINS: usize = 8;
pub const DESCRIPTOR_LEN: usize = DESC_GRID * DESC_GRID * DESC_BINS;
/// Bin width of the descriptor grid in units of keypoint sigma.
const DESC_BIN_SCALE: f64 = 3.0;
const DESC_CLIP: f32 = 0.2;

struct Octave {
    gauss: Vec<FloatImage>,
    dog: Vec<FloatImage>,
    sigmas: Vec<f32>,
}

fn build_octaves(img: &Image, octaves: usize, scales: usize) -> Vec<Octave> {
    let k = 2f32.powf(1.0 / scales as f32);
    let mut base = gaussian_blur(
        &FloatImage::from_image(img),
        (BASE_SIGMA * BASE_SIGMA - INPUT_SIGMA * INPUT_SIGMA).sqrt(),
    );
    let mut out = Vec::new();
    for _ in 0..octaves {
        if base.width < 16 || base.height < 16 {
            break;
        }
        let sigmas: Vec<f32> = (0..scales + 3).map(|i| BASE_SIGMA * k.powi(i as i32)).collect();
        let mut gauss = vec![base.clone()];
        for i in 1..scales + 3 {
            let inc = (sigmas[i].powi(2) - sigmas[i - 1].powi(2)).sqrt();
            let next = gaussian_blur(&gauss[i - 1], inc);
            gauss.push(next);
        }
        let dog = gauss
            .windows(2)
            .map(|p| p[1].zip_map(&p[0], |a, b| a - b))
            .collect();
        // The image at twice the base sigma seeds the next octave.
        let seed = &gauss[scales];
        base = subsample(seed);
        out.push(Octave { gauss, dog, sigmas });
    }
    out
}

fn subsample(img: &FloatImage) -> FloatImage {
    let (w, h) = (img.width / 2, img.height / 2);
    let mut out = FloatImage::zeros(w, h);
    for y in 0..h {
        for x in 0..w {
            out.data[y * w + x] = img.get(2 * x, 2 * y);
        }
    }
    out
}

fn is_extremum(dog: &[FloatImage], s: usize, x: usize, y: usize) -> bool {
    let v = dog[s].get(x, y);
    let (mut is_max, mut is_min) = (true, true);
    for layer in &dog[s - 1..=s + 1] {
        for yy in y - 1..=y + 1 {
            for xx in x - 1..=x + 1 {
                let n = layer.get(xx, yy);
                if std::ptr::eq(layer, &dog[s]) && xx == x && yy == y {
                    continue;
                }
                is_max &= v > n;
                is_min &= v < n;
            }
            if !is_max && !is_min {
                return false;
            }
        }
    }
    is_max || is_min
}

/// Principal-curvature ratio test on the 2x2 spatial Hessian.
fn passes_edge_test(d: &FloatImage, x: usize, y: usize, r: f32) -> bool {
    let v = d.get(x, y);
    let dxx = d.get(x + 1, y) + d.get(x - 1, y) - 2.0 * v;
    let dyy = d.get(x, y + 1) + d.get(x, y - 1) - 2.0 * v;
    let dxy = 0.25 * (d.get(x + 1, y + 1) - d.get(x - 1, y + 1) - d.get(x + 1, y - 1) + d.get(x - 1, y - 1));
    let tr = dxx + dyy;
    let det = dxx * dyy - dxy * dxy;
    det > 0.0 && tr * tr * r < (r + 1.0).powi(2) * det
}

fn grad(img: &FloatImage, x: isize, y: isize) -> (f32, f32) {
    let gx = 0.5 * (img.get_clamped(x + 1, y) - img.get_clamped(x - 1, y));
    let gy = 0.5 * (img.get_clamped(x, y + 1) - img.get_clamped(x, y - 1));
    (gx, gy)
}

fn dominant_orientation(img: &FloatImage, x: usize, y: usize, sigma: f64) -> f64 {
    let ws = 1.5 * sigma;
    let r = (3.0 * ws).round() as isize;
    let mut hist = [0f64; ORI_BINS];
    for dy in -r..=r {
        for dx in -r..=r {
            let (gx, gy) = grad(img, x as isize + dx, y as isize + dy);
            let mag = (gx as f64).hypot(gy as f64);
            let w = (-((dx * dx + dy * dy) as f64) / (2.0 * ws * ws)).exp();
            let ang = (gy as f64).atan2(gx as f64).rem_euclid(2.0 * PI);
            let bin = ((ang / (2.0 * PI) * ORI_BINS as f64) as usize).min(ORI_BINS - 1);
            hist[bin] += w * mag;
        }
    }
    // Smooth circularly, then interpolate the peak.
    let smooth: Vec<f64> = (0..ORI_BINS)
        .map(|i| {
            0.25 * hist[(i + ORI_BINS - 1) % ORI_BINS] + 0.5 * hist[i] + 0.25 * hist[(i + 1) % ORI_BINS]
        })
        .collect();
    let (best, _) = smooth
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc });
    let (l, c, r) = (
        smooth[(best + ORI_BINS - 1) % ORI_BINS],
        smooth[best],
        smooth[(best + 1) % ORI_BINS],
    );
    let den = l - 2.0 * c + r;
    let off = if den < 0.0 { 0.5 * (l - r) / den } else { 0.0 };
    let ang = (best as f64 + 0.5 + off) * 2.0 * PI / ORI_BINS as f64;
    if ang > PI {
        ang - 2.0 * PI
    } else {
        ang
    }
}

/// 4x4 spatial cells by 8 orientation bins, rotated to the keypoint angle,
/// trilinearly accumulated, normalized, clipped at 0.2 and renormalized.
fn describe(img: &FloatImage, x: f64, y: f64, sigma: f64, angle: f64) -> Vec<f32> {
    let bin_w = DESC_BIN_SCALE * sigma;
    let half = DESC_GRID as f64 / 2.0;
    let radius = (bin_w * (half + 0.5) * std::f64::consts::SQRT_2).ceil() as isize;
    let (s, c) = angle.sin_cos();
    let mut hist = vec![0f32; DESCRIPTOR_LEN];
    let (cx, cy) = (x.round() as isize, y.round() as isize);
    for dy in -radius..=radius {
        for dx in -radius..=radius {
            let (px, py) = ((cx + dx) as f64 - x, (cy + dy) as f64 - y);
            // Rotate into the keypoint frame, in bin units.
            let rx = (c * px + s * py) / bin_w;
            let ry = (-s * px + c * py) / bin_w;
            let (bx, by) = (rx + half - 0.5, ry + half - 0.5);
            if bx <= -1.0 || by <= -1.0 || bx >= DESC_GRID as f64 || by >= DESC_GRID as f64 {
                continue;
            }
            let (gx, gy) = grad(img, cx + dx, cy + dy);
            let mag = (gx as f64).hypot(gy as f64);
            if mag == 0.0 {
                continue;
            }
            let w = (-(rx * rx + ry * ry) / (2.0 * half * half)).exp();
            let ori = ((gy as f64).atan2(gx as f64) - angle).rem_euclid(2.0 * PI);
            let bo = ori / (2.0 * PI) * DESC_BINS as f64;
            let (x0, y0, o0) = (bx.floor(), by.floor(), bo.floor());
            let (fx, fy, fo) = (bx - x0, by - y0, bo - o0);
            for (iy, wy) in [(y0 as isize, 1.0 - fy), (y0 as isize + 1, fy)] {
                if iy < 0 || iy >= DESC_GRID as isize {
                    continue;
                }
                for (ix, wx) in [(x0 as isize, 1.0 - fx), (x0 as isize + 1, fx)] {
                    if ix < 0 || ix >= DESC_GRID as isize {
                        continue;
                    }
                    for (io, wo) in [(o0 as usize, 1.0 - fo), (o0 as usize + 1, fo)] {
                        let idx = (iy as usize * DESC_GRID + ix as usize) * DESC_BINS + io % DESC_BINS;
                        hist[idx] += (mag * w * wx * wy * wo) as f32;
                    }
                }
            }
        }
    }
    normalize(&mut hist);
    hist.iter_mut().for_each(|v| *v = v.min(DESC_CLIP));
    normalize(&mut hist);
    hist
}

fn normalize(v: &mut [f32]) {
    let n = v.iter().map(|x| x * x).sum::<f32>().sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
}

/// Scale-space extrema of the DoG pyramid with their descriptors, in
/// base-image coordinates.
pub fn detect(img: &Image, params: &DetectorParams) -> Vec<(Keypoint, Vec<f32>)> {
    let scales = params.dog_scales.max(1);
    let octaves = build_octaves(img, params.dog_octaves.max(1), scales);
    // Intensities are 0..255, the contrast threshold is specified for 0..1.
    let contrast = params.dog_contrast * 255.0 / scales as f32;
    let edge_r = params.dog_edge_ratio;
    let mut found = Vec::new();
    for (o, oct) in octaves.iter().enumerate() {
        let (w, h) = (oct.dog[0].width, oct.dog[0].height);
        let factor = (1usize << o) as f64;
        let rows = par::map_range(h.saturating_sub(2), |row| {
            let y = row + 1;
            let mut local = Vec::new();
            for s in 1..=scales {
                for x in 1..w - 1 {
                    let v = oct.dog[s].get(x, y);
                    if v.abs() < contrast || !is_extremum(&oct.dog, s, x, y) {
                        continue;
                    }
                    if !passes_edge_test(&oct.dog[s], x, y, edge_r) {
                        continue;
                    }
                    let g = &oct.gauss[s];
                    let sigma = oct.sigmas[s] as f64;
                    let angle = dominant_orientation(g, x, y, sigma);
                    let desc = describe(g, x as f64, y as f64, sigma, angle);
                    local.push((
                        Keypoint {
                            x: x as f64 * factor,
                            y: y as f64 * factor,
                            score: v.abs(),
                            orientation: angle,
                            scale: sigma * factor,
                        },
                        desc,
                    ));
                }
            }
            local
        });
        found.extend(rows.into_iter().flatten());
    }
    found
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blob_is_detected_near_center() {
        let img = Image::from_fn(64, 64, |x, y| {
            let d2 = (x as f64 - 32.0).powi(2) + (y as f64 - 32.0).powi(2);
            (40.0 + 180.0 * (-d2 / (2.0 * 16.0)).exp()) as u8
        });
        let kps = detect(&img, &DetectorParams::default());
        assert!(kps
            .iter()
            .any(|(k, d)| (k.x - 32.0).abs() <= 2.0 && (k.y - 32.0).abs() <= 2.0 && d.len() == DESCRIPTOR_LEN));
    }

    #[test]
    fn descriptor_is_unit_norm() {
        let img = FloatImage::from_image(&Image::from_fn(40, 40, |x, y| ((x * 5 + y * 3) % 97) as u8));
        let d = describe(&img, 20.0, 20.0, 2.0, 0.3);
        let n: f32 = d.iter().map(|v| v * v).sum();
        assert!((n - 1.0).abs() < 1e-4);
    }
}
