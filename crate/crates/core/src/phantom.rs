//! Seeded synthetic B-scan stacks with exact ground truth.
//!
//! Each frame is rendered as horizontal bands (optionally tilted), rolled by
//! its vertical jitter, optionally warped by a homography, attenuated in
//! shadow columns and finally multiplied by log-normal speckle.

use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::imaging::{clamp_round, Image, Stack};
use crate::par;
use crate::registration::{warp_perspective, Homography};
use crate::shadow::ShadowRegion;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum PhantomError {
    #[error("invalid phantom spec: {0}")]
    SpecInvalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub name: String,
    pub thickness_px: f64,
    pub intensity: f64,
}

impl LayerSpec {
    pub fn new(name: &str, thickness_px: f64, intensity: f64) -> Self {
        Self {
            name: name.to_string(),
            thickness_px,
            intensity,
        }
    }
}

/// Vertical displacement per frame, in rows (positive moves content down).
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Jitter {
    #[default]
    None,
    Offsets { px: Vec<i64> },
    /// Frames from `at_frame` onward are shifted by `px`.
    Step { at_frame: usize, px: i64 },
    /// Independent uniform offsets in `[-max_px, max_px]`.
    Random { max_px: i64 },
}

/// Per-frame projective distortion about the frame center.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum WarpSpec {
    Random {
        max_shift_px: f64,
        max_rotation_deg: f64,
        max_scale: f64,
        max_perspective: f64,
        /// Leave the central frame undistorted.
        #[serde(default)]
        keep_center: bool,
    },
    /// One row-major matrix per frame.
    Explicit { matrices: Vec<[f64; 9]> },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShadowSpec {
    pub col_start: usize,
    pub width: usize,
    /// Multiplier applied to the shadowed columns, in (0, 1].
    pub attenuation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhantomSpec {
    pub width: usize,
    pub height: usize,
    pub frame_count: usize,
    pub layers: Vec<LayerSpec>,
    /// ILM depth at column 0.
    pub ilm_depth_px: f64,
    #[serde(default)]
    pub tilt_px_per_col: f64,
    #[serde(default)]
    pub background_intensity: f64,
    #[serde(default)]
    pub jitter: Jitter,
    #[serde(default)]
    pub warp: Option<WarpSpec>,
    #[serde(default)]
    pub shadows: Vec<ShadowSpec>,
    #[serde(default)]
    pub speckle_sigma: f64,
    #[serde(default)]
    pub seed: u64,
}

/// Layer thicknesses (px) of the mouse retina reference table.
pub const TABLE1_LAYERS: [(&str, f64); 7] = [
    ("RNFL", 20.0),
    ("GCL+IPL", 53.0),
    ("INL", 25.0),
    ("OPL", 21.0),
    ("ONL", 52.0),
    ("ELM", 12.0),
    ("PR", 81.0),
];

const TABLE1_INTENSITIES: [f64; 7] = [200.0, 140.0, 70.0, 150.0, 60.0, 210.0, 120.0];

impl PhantomSpec {
    /// Flat, noise-free phantom with the reference layer thicknesses.
    pub fn table1(width: usize, height: usize, frame_count: usize) -> Self {
        Self {
            width,
            height,
            frame_count,
            layers: TABLE1_LAYERS
                .iter()
                .zip(TABLE1_INTENSITIES)
                .map(|(&(n, t), i)| LayerSpec::new(n, t, i))
                .collect(),
            ilm_depth_px: 40.0,
            tilt_px_per_col: 0.0,
            background_intensity: 0.0,
            jitter: Jitter::None,
            warp: None,
            shadows: Vec::new(),
            speckle_sigma: 0.0,
            seed: 0,
        }
    }

    pub fn total_thickness(&self) -> f64 {
        self.layers.iter().map(|l| l.thickness_px).sum()
    }

    /// Names of the layer boundaries, top to bottom: `ILM`, one `upper/lower`
    /// name per interface (lower name cut at its first `+`), `last-end`.
    pub fn boundary_names(&self) -> Vec<String> {
        let mut names = vec!["ILM".to_string()];
        for pair in self.layers.windows(2) {
            let lower = pair[1].name.split('+').next().unwrap_or(&pair[1].name);
            names.push(format!("{}/{}", pair[0].name, lower));
        }
        if let Some(last) = self.layers.last() {
            names.push(format!("{}-end", last.name));
        }
        names
    }

    pub fn validate(&self) -> Result<(), PhantomError> {
        let bad = |m: String| Err(PhantomError::SpecInvalid(m));
        if self.width == 0 || self.height == 0 || self.frame_count == 0 {
            return bad("width, height and frame_count must be positive".into());
        }
        if self.layers.is_empty() {
            return bad("at least one layer is required".into());
        }
        if let Some(l) = self.layers.iter().find(|l| !(l.thickness_px > 0.0)) {
            return bad(format!("layer {} has non-positive thickness", l.name));
        }
        if let Some(l) = self.layers.iter().find(|l| !(0.0..=255.0).contains(&l.intensity)) {
            return bad(format!("layer {} intensity outside 0..255", l.name));
        }
        if !(0.0..=255.0).contains(&self.background_intensity) {
            return bad("background intensity outside 0..255".into());
        }
        let last_col = (self.width - 1) as f64;
        let tops = [self.ilm_depth_px, self.ilm_depth_px + self.tilt_px_per_col * last_col];
        if tops.iter().any(|&t| t < 0.0 || t + self.total_thickness() >= self.height as f64) {
            return bad("layer stack does not fit inside the frame".into());
        }
        for s in &self.shadows {
            if !(s.attenuation > 0.0 && s.attenuation <= 1.0) {
                return bad(format!("shadow attenuation {} outside (0, 1]", s.attenuation));
            }
            if s.width == 0 || s.col_start + s.width > self.width {
                return bad(format!("shadow at column {} exceeds the frame", s.col_start));
            }
        }
        if !(self.speckle_sigma >= 0.0) {
            return bad("speckle sigma must be non-negative".into());
        }
        match &self.jitter {
            Jitter::Offsets { px } if px.len() != self.frame_count => {
                return bad(format!("{} jitter offsets for {} frames", px.len(), self.frame_count));
            }
            Jitter::Random { max_px } if *max_px < 0 => return bad("negative jitter range".into()),
            _ => {}
        }
        if let Some(WarpSpec::Explicit { matrices }) = &self.warp {
            if matrices.len() != self.frame_count {
                return bad(format!("{} warp matrices for {} frames", matrices.len(), self.frame_count));
            }
        }
        Ok(())
    }

    /// Undistorted boundary depths at column `x`, top to bottom.
    fn boundary_depths(&self, x: usize) -> Vec<f64> {
        let mut d = self.ilm_depth_px + self.tilt_px_per_col * x as f64;
        let mut out = vec![d];
        for l in &self.layers {
            d += l.thickness_px;
            out.push(d);
        }
        out
    }
}

/// Exact boundaries and applied distortions for every frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub boundary_names: Vec<String>,
    pub layer_names: Vec<String>,
    /// `boundaries[frame][boundary][column]`; `None` where the boundary left
    /// the field of view.
    pub boundaries: Vec<Vec<Vec<Option<f64>>>>,
    pub offsets: Vec<i64>,
    pub warps: Vec<Option<Homography>>,
    pub shadow_regions: Vec<ShadowRegion>,
}

impl GroundTruth {
    /// One-pixel boundary lines (255 on 0) at the rounded ground-truth depths.
    pub fn boundary_mask(&self, frame: usize, width: usize, height: usize) -> Image {
        let mut mask = Image::new(width, height);
        for boundary in &self.boundaries[frame] {
            for (x, d) in boundary.iter().enumerate() {
                if let Some(d) = d {
                    let y = d.round();
                    if y >= 0.0 && (y as usize) < height {
                        mask.set(x, y as usize, 255);
                    }
                }
            }
        }
        mask
    }

    pub fn boundary_masks(&self, width: usize, height: usize) -> Vec<Image> {
        (0..self.boundaries.len())
            .map(|i| self.boundary_mask(i, width, height))
            .collect()
    }
}

/// Stream ids keep the frame, warp and jitter draws independent of each other
/// and of evaluation order.
fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

const JITTER_STREAM: u64 = 1 << 40;
const WARP_STREAM: u64 = 2 << 40;

fn offsets(spec: &PhantomSpec) -> Vec<i64> {
    let n = spec.frame_count;
    match &spec.jitter {
        Jitter::None => vec![0; n],
        Jitter::Offsets { px } => px.clone(),
        Jitter::Step { at_frame, px } => (0..n).map(|i| if i >= *at_frame { *px } else { 0 }).collect(),
        Jitter::Random { max_px } => {
            let mut rng = stream_rng(spec.seed, JITTER_STREAM);
            (0..n).map(|_| rng.gen_range(-*max_px..=*max_px)).collect()
        }
    }
}

fn warps(spec: &PhantomSpec) -> Result<Vec<Option<Homography>>, PhantomError> {
    let n = spec.frame_count;
    let invalid = |e: crate::registration::RegistrationError| PhantomError::SpecInvalid(e.to_string());
    match &spec.warp {
        None => Ok(vec![None; n]),
        Some(WarpSpec::Explicit { matrices }) => matrices
            .iter()
            .map(|m| Homography::try_from(*m).map(Some).map_err(invalid))
            .collect(),
        Some(WarpSpec::Random {
            max_shift_px,
            max_rotation_deg,
            max_scale,
            max_perspective,
            keep_center,
        }) => {
            let (cx, cy) = ((spec.width - 1) as f64 / 2.0, (spec.height - 1) as f64 / 2.0);
            // Perspective terms are specified for coordinates normalized by the frame size.
            let norm = spec.width.max(spec.height) as f64;
            (0..n)
                .map(|i| {
                    if *keep_center && i == n / 2 {
                        return Ok(None);
                    }
                    let mut rng = stream_rng(spec.seed, WARP_STREAM + i as u64);
                    let mut sym = |m: f64| if m > 0.0 { rng.gen_range(-m..=m) } else { 0.0 };
                    let (tx, ty) = (sym(*max_shift_px), sym(*max_shift_px));
                    let theta = sym(*max_rotation_deg).to_radians();
                    let s = 1.0 + sym(*max_scale);
                    let (px, py) = (sym(*max_perspective) / norm, sym(*max_perspective) / norm);
                    let (sn, cs) = theta.sin_cos();
                    let to_origin = Matrix3::new(1.0, 0.0, -cx, 0.0, 1.0, -cy, 0.0, 0.0, 1.0);
                    let back = Matrix3::new(1.0, 0.0, cx + tx, 0.0, 1.0, cy + ty, 0.0, 0.0, 1.0);
                    let rs = Matrix3::new(s * cs, -s * sn, 0.0, s * sn, s * cs, 0.0, px, py, 1.0);
                    Homography::new(back * rs * to_origin).map(Some).map_err(invalid)
                })
                .collect()
        }
    }
}

/// Band intensity at fractional depth `y` given the boundary depths; each
/// boundary is a linear ramp from `d - 1` to `d + 1`.
fn band_value(spec: &PhantomSpec, depths: &[f64], y: f64) -> f64 {
    let ramp = |d: f64| ((y - d + 1.0) / 2.0).clamp(0.0, 1.0);
    let mut v = spec.background_intensity;
    let mut prev = spec.background_intensity;
    for (k, &d) in depths.iter().enumerate() {
        let next = spec.layers.get(k).map_or(spec.background_intensity, |l| l.intensity);
        v += (next - prev) * ramp(d);
        prev = next;
    }
    v
}

/// Boundary depth under a homography: the line through the undistorted
/// boundary maps to `H^-T l`.
fn warped_depths(line_at: impl Fn(usize) -> f64, h: &Homography, width: usize) -> Vec<Option<f64>> {
    let p0 = Vector3::new(0.0, line_at(0), 1.0);
    let p1 = Vector3::new((width - 1).max(1) as f64, line_at((width - 1).max(1)), 1.0);
    let l = p0.cross(&p1);
    let hinv = h.inverse();
    let m = hinv.matrix().transpose() * l;
    (0..width)
        .map(|x| {
            if m.y.abs() < 1e-12 {
                return None;
            }
            let y = -(m.x * x as f64 + m.z) / m.y;
            // Only report depths whose preimage lies inside the source frame.
            let (sx, _) = hinv.apply(x as f64, y)?;
            (sx >= 0.0 && sx <= (width - 1) as f64).then_some(y)
        })
        .collect()
}

/// Render the stack and its ground truth.
pub fn generate_phantom(spec: &PhantomSpec) -> Result<(Stack, GroundTruth), PhantomError> {
    spec.validate()?;
    let (w, h) = (spec.width, spec.height);
    let offsets = offsets(spec);
    let warps = warps(spec)?;
    let columns: Vec<Vec<f64>> = (0..w).map(|x| spec.boundary_depths(x)).collect();
    let base = Image::from_fn(w, h, |x, y| clamp_round(band_value(spec, &columns[x], y as f64)));

    let mut attenuation = vec![1.0f64; w];
    for s in &spec.shadows {
        for a in &mut attenuation[s.col_start..s.col_start + s.width] {
            *a *= s.attenuation;
        }
    }

    let frames = par::map_range(spec.frame_count, |i| {
        let mut img = base.roll_rows(offsets[i]);
        if let Some(hm) = &warps[i] {
            img = warp_perspective(&img, hm).expect("validated homography");
        }
        let mut rng = stream_rng(spec.seed, i as u64);
        let sigma = spec.speckle_sigma;
        let mut data = img.into_vec();
        for (k, px) in data.iter_mut().enumerate() {
            let mut v = *px as f64 * attenuation[k % w];
            if sigma > 0.0 {
                let z: f64 = rng.sample(StandardNormal);
                v *= (sigma * z - 0.5 * sigma * sigma).exp();
            }
            *px = clamp_round(v);
        }
        Image::from_vec(w, h, data).expect("dimensions preserved")
    });

    let boundaries = (0..spec.frame_count)
        .map(|i| {
            let shift = offsets[i] as f64;
            (0..=spec.layers.len())
                .map(|b| {
                    let depth_at = |x: usize| columns[x][b] + shift;
                    match &warps[i] {
                        None => (0..w)
                            .map(|x| Some(depth_at(x)).filter(|d| *d >= 0.0 && *d < h as f64))
                            .collect(),
                        Some(hm) => warped_depths(depth_at, hm, w),
                    }
                })
                .collect()
        })
        .collect();

    let shadow_regions = (0..spec.frame_count)
        .flat_map(|i| {
            spec.shadows
                .iter()
                .map(move |s| ShadowRegion::columns(i, s.col_start, s.col_start + s.width))
        })
        .collect();

    let stack = Stack::new(frames).map_err(|e| PhantomError::SpecInvalid(e.to_string()))?;
    Ok((
        stack,
        GroundTruth {
            boundary_names: spec.boundary_names(),
            layer_names: spec.layers.iter().map(|l| l.name.clone()).collect(),
            boundaries,
            offsets,
            warps,
            shadow_regions,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table1_boundaries_spaced_by_thickness() {
        let (_, gt) = generate_phantom(&PhantomSpec::table1(64, 330, 1)).unwrap();
        let b = &gt.boundaries[0];
        let mut expected = 40.0;
        for (k, (_, t)) in TABLE1_LAYERS.iter().enumerate() {
            assert_eq!(b[k][10], Some(expected));
            expected += t;
            assert_eq!(b[k + 1][10].unwrap() - b[k][10].unwrap(), *t);
        }
        assert_eq!(
            gt.boundary_names,
            ["ILM", "RNFL/GCL", "GCL+IPL/INL", "INL/OPL", "OPL/ONL", "ONL/ELM", "ELM/PR", "PR-end"]
        );
    }

    #[test]
    fn static_noise_free_frames_identical() {
        let (stack, _) = generate_phantom(&PhantomSpec::table1(40, 330, 3)).unwrap();
        assert_eq!(stack.frame(0), stack.frame(1));
        assert_eq!(stack.frame(1), stack.frame(2));
    }

    #[test]
    fn deterministic_for_seed() {
        let mut spec = PhantomSpec::table1(48, 330, 4);
        spec.speckle_sigma = 0.2;
        spec.jitter = Jitter::Random { max_px: 5 };
        spec.seed = 11;
        let a = generate_phantom(&spec).unwrap();
        let b = generate_phantom(&spec).unwrap();
        assert_eq!(a, b);
        spec.seed = 12;
        assert_ne!(a.0, generate_phantom(&spec).unwrap().0);
    }

    #[test]
    fn layer_interiors_have_base_intensity() {
        let spec = PhantomSpec::table1(20, 330, 1);
        let (stack, gt) = generate_phantom(&spec).unwrap();
        for (k, layer) in spec.layers.iter().enumerate() {
            let top = gt.boundaries[0][k][0].unwrap() as usize + 2;
            let bottom = gt.boundaries[0][k + 1][0].unwrap() as usize - 2;
            for y in top..=bottom {
                assert_eq!(stack.frame(0).get(5, y) as f64, layer.intensity);
            }
        }
    }

    #[test]
    fn jitter_offsets_move_boundaries() {
        let mut spec = PhantomSpec::table1(20, 340, 3);
        spec.jitter = Jitter::Offsets { px: vec![0, 2, 5] };
        let (stack, gt) = generate_phantom(&spec).unwrap();
        assert_eq!(gt.offsets, vec![0, 2, 5]);
        assert_eq!(gt.boundaries[2][0][3], Some(45.0));
        assert_eq!(stack.frame(2).roll_rows(-5).row(100), stack.frame(0).row(100));
    }

    #[test]
    fn invalid_specs_rejected() {
        let mut spec = PhantomSpec::table1(20, 200, 1);
        assert!(spec.validate().is_err());
        spec.height = 400;
        spec.shadows.push(ShadowSpec {
            col_start: 5,
            width: 3,
            attenuation: 0.0,
        });
        assert!(spec.validate().is_err());
        spec.shadows[0].attenuation = 0.5;
        spec.validate().unwrap();
        spec.layers[0].thickness_px = 0.0;
        assert!(spec.validate().is_err());
    }

    #[test]
    fn warped_boundaries_follow_the_homography() {
        let mut spec = PhantomSpec::table1(200, 400, 1);
        spec.tilt_px_per_col = 0.05;
        let h = Homography::try_from([1.0, 0.02, 3.0, -0.01, 1.01, 4.0, 0.0, 1e-5, 1.0]).unwrap();
        spec.warp = Some(WarpSpec::Explicit {
            matrices: vec![h.to_row_major()],
        });
        let (_, gt) = generate_phantom(&spec).unwrap();
        let inv = h.inverse();
        for b in 0..gt.boundary_names.len() {
            for x in [20usize, 100, 180] {
                let y = gt.boundaries[0][b][x].unwrap();
                let (sx, sy) = inv.apply(x as f64, y).unwrap();
                let expected = 40.0 + 0.05 * sx + spec.layers[..b].iter().map(|l| l.thickness_px).sum::<f64>();
                assert!((sy - expected).abs() < 1e-6);
            }
        }
    }
}
