use super::{clamp_round, Image};
use crate::par;

/// Row-major single-precision working image.
#[derive(Debug, Clone, PartialEq)]
pub struct FloatImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f32>,
}

impl FloatImage {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![0.0; width * height],
        }
    }

    pub fn from_image(img: &Image) -> Self {
        Self {
            width: img.width(),
            height: img.height(),
            data: img.as_slice().iter().map(|&v| v as f32).collect(),
        }
    }

    pub fn to_image(&self) -> Image {
        let data = self.data.iter().map(|&v| clamp_round(v as f64)).collect();
        Image::from_vec(self.width, self.height, data).expect("dimensions preserved")
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.data[y * self.width + x]
    }

    /// Sample with coordinates clamped to the image border.
    #[inline]
    pub fn get_clamped(&self, x: isize, y: isize) -> f32 {
        let x = x.clamp(0, self.width as isize - 1) as usize;
        let y = y.clamp(0, self.height as isize - 1) as usize;
        self.data[y * self.width + x]
    }

    /// Bilinear sample; `None` outside `[0, w-1] x [0, h-1]`.
    #[inline]
    pub fn sample(&self, x: f64, y: f64) -> Option<f32> {
        const EPS: f64 = 1e-9;
        let maxx = (self.width - 1) as f64;
        let maxy = (self.height - 1) as f64;
        if !(x >= -EPS && y >= -EPS && x <= maxx + EPS && y <= maxy + EPS) {
            return None;
        }
        Some(self.sample_clamped(x, y))
    }

    /// Bilinear sample with border replication.
    #[inline]
    pub fn sample_clamped(&self, x: f64, y: f64) -> f32 {
        let maxx = (self.width - 1) as f64;
        let maxy = (self.height - 1) as f64;
        let x = x.clamp(0.0, maxx);
        let y = y.clamp(0.0, maxy);
        let x0 = x.floor() as usize;
        let y0 = y.floor() as usize;
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let fx = (x - x0 as f64) as f32;
        let fy = (y - y0 as f64) as f32;
        let top = self.get(x0, y0) * (1.0 - fx) + self.get(x1, y0) * fx;
        let bottom = self.get(x0, y1) * (1.0 - fx) + self.get(x1, y1) * fx;
        top * (1.0 - fy) + bottom * fy
    }

    /// Central-difference gradients `(d/dx, d/dy)` with replicated borders.
    pub fn gradients(&self) -> (FloatImage, FloatImage) {
        let (w, h) = (self.width, self.height);
        let mut gx = FloatImage::zeros(w, h);
        let mut gy = FloatImage::zeros(w, h);
        par::for_each_row(&mut gx.data, w, |y, row| {
            for (x, out) in row.iter_mut().enumerate() {
                let xi = x as isize;
                *out = 0.5
                    * (self.get_clamped(xi + 1, y as isize) - self.get_clamped(xi - 1, y as isize));
            }
        });
        par::for_each_row(&mut gy.data, w, |y, row| {
            for (x, out) in row.iter_mut().enumerate() {
                let yi = y as isize;
                *out = 0.5
                    * (self.get_clamped(x as isize, yi + 1) - self.get_clamped(x as isize, yi - 1));
            }
        });
        (gx, gy)
    }

    /// Halve resolution after a light blur.
    pub fn downsample(&self) -> FloatImage {
        let blurred = gaussian_blur(self, 1.0);
        let w = self.width.div_ceil(2).max(1);
        let h = self.height.div_ceil(2).max(1);
        let mut out = FloatImage::zeros(w, h);
        par::for_each_row(&mut out.data, w, |y, row| {
            for (x, v) in row.iter_mut().enumerate() {
                *v = blurred.get((2 * x).min(self.width - 1), (2 * y).min(self.height - 1));
            }
        });
        out
    }

    /// Sums over a `(2r+1)^2` window clamped to the image, via an integral image.
    pub fn box_sum(&self, radius: usize) -> FloatImage {
        let (w, h) = (self.width, self.height);
        let iw = w + 1;
        let mut integral = vec![0f64; iw * (h + 1)];
        for y in 0..h {
            let mut acc = 0f64;
            for x in 0..w {
                acc += self.data[y * w + x] as f64;
                integral[(y + 1) * iw + x + 1] = integral[y * iw + x + 1] + acc;
            }
        }
        let mut out = FloatImage::zeros(w, h);
        par::for_each_row(&mut out.data, w, |y, row| {
            let y0 = y.saturating_sub(radius);
            let y1 = (y + radius + 1).min(h);
            for (x, v) in row.iter_mut().enumerate() {
                let x0 = x.saturating_sub(radius);
                let x1 = (x + radius + 1).min(w);
                let s = integral[y1 * iw + x1] - integral[y0 * iw + x1] - integral[y1 * iw + x0]
                    + integral[y0 * iw + x0];
                *v = s as f32;
            }
        });
        out
    }

    pub fn map(&self, f: impl Fn(f32) -> f32) -> FloatImage {
        FloatImage {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &FloatImage, f: impl Fn(f32, f32) -> f32) -> FloatImage {
        debug_assert_eq!(self.data.len(), other.data.len());
        FloatImage {
            width: self.width,
            height: self.height,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }
}

fn gaussian_kernel(sigma: f32) -> Vec<f32> {
    let radius = (3.0 * sigma).ceil().max(1.0) as usize;
    let mut k: Vec<f32> = (0..=2 * radius)
        .map(|i| {
            let d = i as f32 - radius as f32;
            (-d * d / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let s: f32 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    k
}

/// Separable Gaussian blur with replicated borders. `sigma <= 0` is a copy.
pub fn gaussian_blur(img: &FloatImage, sigma: f32) -> FloatImage {
    if sigma <= 0.0 {
        return img.clone();
    }
    let k = gaussian_kernel(sigma);
    let r = (k.len() / 2) as isize;
    let (w, h) = (img.width, img.height);
    let mut tmp = FloatImage::zeros(w, h);
    par::for_each_row(&mut tmp.data, w, |y, row| {
        for (x, out) in row.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (i, kv) in k.iter().enumerate() {
                acc += kv * img.get_clamped(x as isize + i as isize - r, y as isize);
            }
            *out = acc;
        }
    });
    let mut out = FloatImage::zeros(w, h);
    par::for_each_row(&mut out.data, w, |y, row| {
        for (x, o) in row.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (i, kv) in k.iter().enumerate() {
                acc += kv * tmp.get_clamped(x as isize, y as isize + i as isize - r);
            }
            *o = acc;
        }
    });
    out
}

/// 3x3 mean filter with replicated borders.
pub fn box_blur3(img: &FloatImage) -> FloatImage {
    let (w, h) = (img.width, img.height);
    let mut out = FloatImage::zeros(w, h);
    par::for_each_row(&mut out.data, w, |y, row| {
        for (x, o) in row.iter_mut().enumerate() {
            let mut acc = 0.0;
            for dy in -1..=1 {
                for dx in -1..=1 {
                    acc += img.get_clamped(x as isize + dx, y as isize + dy);
                }
            }
            *o = acc / 9.0;
        }
    });
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(w: usize, h: usize) -> FloatImage {
        let mut f = FloatImage::zeros(w, h);
        for y in 0..h {
            for x in 0..w {
                f.data[y * w + x] = (2 * x + 3 * y) as f32;
            }
        }
        f
    }

    #[test]
    fn blur_preserves_constant() {
        let f = FloatImage {
            width: 9,
            height: 7,
            data: vec![42.0; 63],
        };
        let b = gaussian_blur(&f, 1.7);
        assert!(b.data.iter().all(|v| (v - 42.0).abs() < 1e-4));
        let b3 = box_blur3(&f);
        assert!(b3.data.iter().all(|v| (v - 42.0).abs() < 1e-4));
    }

    #[test]
    fn bilinear_is_exact_on_linear_ramp() {
        let f = ramp(8, 8);
        let v = f.sample(2.25, 3.5).unwrap();
        assert!((v - (2.0 * 2.25 + 3.0 * 3.5) as f32).abs() < 1e-4);
        assert!(f.sample(-0.1, 1.0).is_none());
        assert!(f.sample(7.0, 7.0).is_some());
        assert!(f.sample(7.01, 0.0).is_none());
    }

    #[test]
    fn gradients_of_ramp() {
        let (gx, gy) = ramp(8, 8).gradients();
        assert!((gx.get(4, 4) - 2.0).abs() < 1e-6);
        assert!((gy.get(4, 4) - 3.0).abs() < 1e-6);
    }

    #[test]
    fn box_sum_matches_brute_force() {
        let f = ramp(7, 5);
        let s = f.box_sum(2);
        for y in 0usize..5 {
            for x in 0usize..7 {
                let mut acc = 0.0;
                for yy in y.saturating_sub(2)..(y + 3).min(5) {
                    for xx in x.saturating_sub(2)..(x + 3).min(7) {
                        acc += f.get(xx, yy);
                    }
                }
                assert!((s.get(x, y) - acc).abs() < 1e-3);
            }
        }
    }
}
