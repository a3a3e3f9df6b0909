//! Keypoint detection and description: DoG, FAST+BRIEF and ORB.

pub mod brief;
pub mod dog;
pub mod fast;

use serde::{Deserialize, Serialize};

use super::RegistrationError;
use crate::imaging::{gaussian_blur, FloatImage, Image};

pub const MIN_IMAGE_SIDE: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Keypoint {
    pub x: f64,
    pub y: f64,
    pub score: f32,
    /// Radians; 0 for orientation-free detectors.
    pub orientation: f64,
    /// Detection scale in pixels (1 for single-scale detectors).
    pub scale: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Descriptor {
    /// `bits` comparison results packed little-endian into bytes.
    Binary { bits: usize, data: Vec<u8> },
    Real(Vec<f32>),
}

impl Descriptor {
    pub fn is_binary(&self) -> bool {
        matches!(self, Descriptor::Binary { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KeypointAlgo {
    Dog,
    FastBrief,
    Orb,
}

impl KeypointAlgo {
    pub fn name(self) -> &'static str {
        match self {
            KeypointAlgo::Dog => "dog",
            KeypointAlgo::FastBrief => "fast_brief",
            KeypointAlgo::Orb => "orb",
        }
    }
}

impl std::str::FromStr for KeypointAlgo {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "dog" => Ok(KeypointAlgo::Dog),
            "fast_brief" => Ok(KeypointAlgo::FastBrief),
            "orb" => Ok(KeypointAlgo::Orb),
            other => Err(format!("unknown keypoint algorithm '{other}'")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectorParams {
    /// FAST intensity threshold `t`.
    pub fast_threshold: u8,
    /// FAST contiguous arc length `n`.
    pub fast_arc: usize,
    pub max_keypoints: usize,
    /// BRIEF length; one of 128, 256, 512.
    pub descriptor_bits: usize,
    pub pattern_seed: u64,
    pub brief_smoothing_sigma: f32,
    /// Contrast threshold for intensities scaled to [0, 1].
    pub dog_contrast: f32,
    pub dog_edge_ratio: f32,
    pub dog_octaves: usize,
    pub dog_scales: usize,
}

impl Default for DetectorParams {
    fn default() -> Self {
        Self {
            fast_threshold: 20,
            fast_arc: 9,
            max_keypoints: 500,
            descriptor_bits: 256,
            pattern_seed: 0xb1ef_5eed,
            brief_smoothing_sigma: 2.0,
            dog_contrast: 0.04,
            dog_edge_ratio: 10.0,
            dog_octaves: 4,
            dog_scales: 3,
        }
    }
}

/// Harris corner response from a 7x7 window of structure-tensor sums.
fn harris(gx: &FloatImage, gy: &FloatImage, x: usize, y: usize) -> f32 {
    let (mut a, mut b, mut c) = (0f32, 0f32, 0f32);
    for dy in -3isize..=3 {
        for dx in -3isize..=3 {
            let (xx, yy) = (x as isize + dx, y as isize + dy);
            let (ix, iy) = (gx.get_clamped(xx, yy), gy.get_clamped(xx, yy));
            a += ix * ix;
            b += ix * iy;
            c += iy * iy;
        }
    }
    a * c - b * b - 0.04 * (a + c) * (a + c)
}

/// Keep the `max` strongest entries; ties keep detection order.
fn strongest<T>(mut items: Vec<(f32, T)>, max: usize) -> Vec<(f32, T)> {
    items.sort_by(|a, b| b.0.total_cmp(&a.0));
    items.truncate(max);
    items
}

fn detect_fast(img: &Image, params: &DetectorParams, oriented: bool) -> Vec<(Keypoint, Descriptor)> {
    let (w, h) = img.dims();
    let corners = fast::fast_corners(img, params.fast_threshold, params.fast_arc);
    let scored: Vec<_> = corners
        .into_iter()
        .map(|(x, y)| (x, y, fast::fast_score(img, x, y, params.fast_threshold)))
        .collect();
    let m = brief::DESCRIPTOR_MARGIN;
    let kept: Vec<_> = fast::non_max_suppression(&scored, w, h)
        .into_iter()
        .filter(|&(x, y, _)| x >= m && y >= m && x + m < w && y + m < h)
        .collect();

    let float = FloatImage::from_image(img);
    let ranked = if oriented {
        let (gx, gy) = float.gradients();
        strongest(
            kept.into_iter()
                .map(|(x, y, _)| (harris(&gx, &gy, x, y), (x, y)))
                .collect(),
            params.max_keypoints,
        )
    } else {
        strongest(
            kept.into_iter().map(|(x, y, s)| (s, (x, y))).collect(),
            params.max_keypoints,
        )
    };

    let smoothed = gaussian_blur(&float, params.brief_smoothing_sigma);
    let pattern = brief::brief_pattern(params.descriptor_bits, params.pattern_seed);
    ranked
        .into_iter()
        .map(|(score, (x, y))| {
            let angle = if oriented {
                brief::centroid_orientation(&float, x, y)
            } else {
                0.0
            };
            let data = brief::describe(&smoothed, x as f64, y as f64, angle, &pattern);
            (
                Keypoint {
                    x: x as f64,
                    y: y as f64,
                    score,
                    orientation: angle,
                    scale: 1.0,
                },
                Descriptor::Binary {
                    bits: params.descriptor_bits,
                    data,
                },
            )
        })
        .collect()
}

/// Detect and describe keypoints with the chosen algorithm.
pub fn detect_keypoints(
    img: &Image,
    algo: KeypointAlgo,
    params: &DetectorParams,
) -> Result<Vec<(Keypoint, Descriptor)>, RegistrationError> {
    if img.width() < MIN_IMAGE_SIDE || img.height() < MIN_IMAGE_SIDE {
        return Err(RegistrationError::ImageTooSmall {
            width: img.width(),
            height: img.height(),
            min: MIN_IMAGE_SIDE,
        });
    }
    if !matches!(params.descriptor_bits, 128 | 256 | 512) {
        return Err(RegistrationError::BadParams(format!(
            "descriptor_bits must be 128, 256 or 512, got {}",
            params.descriptor_bits
        )));
    }
    Ok(match algo {
        KeypointAlgo::FastBrief => detect_fast(img, params, false),
        KeypointAlgo::Orb => detect_fast(img, params, true),
        KeypointAlgo::Dog => {
            let found = dog::detect(img, params);
            strongest(
                found.into_iter().map(|(k, d)| (k.score, (k, d))).collect(),
                params.max_keypoints,
            )
            .into_iter()
            .map(|(_, (k, d))| (k, Descriptor::Real(d)))
            .collect()
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_image_has_no_keypoints() {
        let img = Image::filled(64, 64, 120);
        for algo in [KeypointAlgo::Dog, KeypointAlgo::FastBrief, KeypointAlgo::Orb] {
            assert!(detect_keypoints(&img, algo, &DetectorParams::default())
                .unwrap()
                .is_empty());
        }
    }

    #[test]
    fn small_image_rejected() {
        assert!(matches!(
            detect_keypoints(&Image::new(31, 64), KeypointAlgo::Orb, &DetectorParams::default()),
            Err(RegistrationError::ImageTooSmall { .. })
        ));
    }

    #[test]
    fn algo_names_round_trip() {
        for algo in [KeypointAlgo::Dog, KeypointAlgo::FastBrief, KeypointAlgo::Orb] {
            assert_eq!(algo.name().parse::<KeypointAlgo>().unwrap(), algo);
        }
    }
}
