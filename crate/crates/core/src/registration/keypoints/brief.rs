//! BRIEF binary descriptors and intensity-centroid orientation.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::imaging::FloatImage;

/// Patch side used to size the sampling distribution.
pub const PATCH_SIZE: f32 = 31.0;
/// Sampling offsets are kept inside this radius so that any rotation of the
/// pattern stays inside the orientation patch.
pub const PAIR_RADIUS: f32 = 13.0;
pub const ORIENTATION_RADIUS: i32 = 15;
/// Keypoints closer than this to the border get no descriptor.
pub const DESCRIPTOR_MARGIN: usize = 16;

/// Point-pair test locations `(x1, y1, x2, y2)` relative to the keypoint,
/// drawn from an isotropic Gaussian with a fixed seed.
pub fn brief_pattern(bits: usize, seed: u64) -> Vec<[f32; 4]> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0f32, PATCH_SIZE / 5.0).expect("positive sigma");
    let draw = |rng: &mut ChaCha8Rng| -> (f32, f32) {
        loop {
            let x = normal.sample(rng).round();
            let y = normal.sample(rng).round();
            if x * x + y * y <= PAIR_RADIUS * PAIR_RADIUS {
                return (x, y);
            }
        }
    };
    (0..bits)
        .map(|_| loop {
            let (x1, y1) = draw(&mut rng);
            let (x2, y2) = draw(&mut rng);
            if (x1, y1) != (x2, y2) {
                break [x1, y1, x2, y2];
            }
        })
        .collect()
}

/// Orientation from the intensity centroid of a disc around the keypoint.
pub fn centroid_orientation(img: &FloatImage, x: usize, y: usize) -> f64 {
    let r = ORIENTATION_RADIUS;
    let (mut m10, mut m01) = (0f64, 0f64);
    for dy in -r..=r {
        for dx in -r..=r {
            if dx * dx + dy * dy > r * r {
                continue;
            }
            let v = img.get_clamped(x as isize + dx as isize, y as isize + dy as isize) as f64;
            m10 += dx as f64 * v;
            m01 += dy as f64 * v;
        }
    }
    m01.atan2(m10)
}

/// Bit i is set when the first sample of pair i is brighter than the second.
/// The pattern is rotated by `angle` (0 for unsteered BRIEF).
pub fn describe(smoothed: &FloatImage, x: f64, y: f64, angle: f64, pattern: &[[f32; 4]]) -> Vec<u8> {
    let (s, c) = angle.sin_cos();
    let mut out = vec![0u8; pattern.len().div_ceil(8)];
    for (i, p) in pattern.iter().enumerate() {
        let (x1, y1, x2, y2) = (p[0] as f64, p[1] as f64, p[2] as f64, p[3] as f64);
        let a = smoothed.sample_clamped(x + c * x1 - s * y1, y + s * x1 + c * y1);
        let b = smoothed.sample_clamped(x + c * x2 - s * y2, y + s * x2 + c * y2);
        if a > b {
            out[i / 8] |= 1 << (i % 8);
        }
    }
    out
}
