//! Two-pass stack registration.
//!
//! Pass 1 aligns every frame to its nearest first-pass reference (by index).
//! Pass 2 aligns the result to the central reference. Frames whose first-pass
//! reference already is the central reference are not registered again.
//! A frame that fails to register is passed through unchanged and flagged.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use nalgebra::Point2;
use serde::{Deserialize, Serialize};

use super::flow::{optical_flow, FlowParams};
use super::homography::{estimate_homography_ransac, homography_from_quad, Homography, RansacParams};
use super::ilm::{select_reference_frames, trace_ilm};
use super::keypoints::{detect_keypoints, Descriptor, DetectorParams, Keypoint, KeypointAlgo};
use super::matching::{match_descriptors, DEFAULT_RATIO};
use super::slab::{estimate_slab_quad, SlabQuad};
use super::warp::{warp_flow, warp_perspective};
use super::RegistrationError;
use crate::imaging::{Image, Stack};
use crate::metrics::{pearson_correlation, MetricReport};
use crate::par;

/// Minimum RANSAC consensus for a keypoint registration to be accepted.
pub const MIN_INLIERS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Height,
    Keypoint,
    Flow,
    Hybrid,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Height => "height",
            Method::Keypoint => "keypoint",
            Method::Flow => "flow",
            Method::Hybrid => "hybrid",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "height" => Ok(Method::Height),
            "keypoint" => Ok(Method::Keypoint),
            "flow" => Ok(Method::Flow),
            "hybrid" => Ok(Method::Hybrid),
            other => Err(format!("unknown registration method '{other}'")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegistrationPlan {
    pub pass1_refs: Vec<usize>,
    pub pass2_ref: usize,
    pub method: Method,
    pub algo: KeypointAlgo,
    #[serde(default)]
    pub detector: DetectorParams,
    #[serde(default)]
    pub ransac: RansacParams,
    #[serde(default)]
    pub flow: FlowParams,
    #[serde(default = "default_ratio")]
    pub match_ratio: f64,
}

fn default_ratio() -> f64 {
    DEFAULT_RATIO
}

impl RegistrationPlan {
    /// Single reference at the central frame.
    pub fn central(frame_count: usize, method: Method) -> Self {
        let c = frame_count / 2;
        Self {
            pass1_refs: vec![c],
            pass2_ref: c,
            method,
            algo: KeypointAlgo::Orb,
            detector: DetectorParams::default(),
            ransac: RansacParams::default(),
            flow: FlowParams::default(),
            match_ratio: DEFAULT_RATIO,
        }
    }

    /// Explicit first-pass references; the central frame is the second-pass reference.
    pub fn with_refs(frame_count: usize, method: Method, refs: &[usize]) -> Self {
        let mut refs = refs.to_vec();
        refs.sort_unstable();
        refs.dedup();
        Self {
            pass1_refs: refs,
            ..Self::central(frame_count, method)
        }
    }

    /// References chosen from ILM height changes.
    pub fn auto(
        stack: &Stack,
        method: Method,
        drop_threshold_px: f64,
        window: usize,
    ) -> Result<Self, RegistrationError> {
        let refs = select_reference_frames(stack, drop_threshold_px, window)?;
        Ok(Self::with_refs(stack.len(), method, &refs))
    }

    pub fn validate(&self, frame_count: usize) -> Result<(), RegistrationError> {
        let bad = |what: String| Err(RegistrationError::InvalidPlan(what));
        if self.pass1_refs.is_empty() {
            return bad("no first-pass references".into());
        }
        if let Some(&r) = self.pass1_refs.iter().find(|&&r| r >= frame_count) {
            return bad(format!("reference {r} outside 0..{frame_count}"));
        }
        if self.pass2_ref >= frame_count {
            return bad(format!("central reference {} outside 0..{frame_count}", self.pass2_ref));
        }
        if self.pass1_refs.windows(2).any(|w| w[0] >= w[1]) {
            return bad("first-pass references must be sorted and unique".into());
        }
        Ok(())
    }

    /// Nearest first-pass reference by index; ties go to the lower index.
    pub fn nearest_ref(&self, frame: usize) -> usize {
        *self
            .pass1_refs
            .iter()
            .min_by_key(|&&r| (r.abs_diff(frame), r))
            .expect("validated plan has references")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum FrameStatus {
    Ok,
    Failed(String),
}

impl fmt::Display for FrameStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FrameStatus::Ok => f.write_str("ok"),
            FrameStatus::Failed(reason) => write!(f, "failed: {reason}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameOutcome {
    pub frame_index: usize,
    /// Reference the frame was registered to in its last pass.
    pub reference_index: usize,
    /// Correlation with the central reference after registration.
    pub correlation: f64,
    pub status: FrameStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegistrationReport {
    pub method: Method,
    pub frames: Vec<FrameOutcome>,
    pub correlation: MetricReport,
}

impl RegistrationReport {
    pub fn failed_frames(&self) -> impl Iterator<Item = usize> + '_ {
        self.frames
            .iter()
            .filter(|f| f.status != FrameStatus::Ok)
            .map(|f| f.frame_index)
    }
}

/// Everything about a reference frame that does not depend on the target.
enum Prepared {
    Height(f64),
    Keypoints(Vec<(Keypoint, Descriptor)>),
    Flow,
    Hybrid(SlabQuad),
}

struct Reference {
    image: Image,
    prepared: Result<Prepared, RegistrationError>,
}

fn prepare(image: &Image, plan: &RegistrationPlan) -> Reference {
    let prepared = match plan.method {
        Method::Height => trace_ilm(image).map(|t| Prepared::Height(t.mean_height)),
        Method::Keypoint => detect_keypoints(image, plan.algo, &plan.detector).map(Prepared::Keypoints),
        Method::Flow => Ok(Prepared::Flow),
        Method::Hybrid => estimate_slab_quad(image).map(Prepared::Hybrid),
    };
    Reference {
        image: image.clone(),
        prepared,
    }
}

/// Per-frame RANSAC seed; independent of scheduling.
fn frame_seed(seed: u64, pass: u64, frame: usize) -> u64 {
    let mut z = seed ^ (pass << 56) ^ (frame as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// A homography is implausible when it moves an image corner by more than
/// half the frame, flips orientation or changes area by more than 2x.
fn plausible(h: &Homography, w: usize, hgt: usize) -> bool {
    let m = h.matrix();
    let det = m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)];
    if !(0.5..=2.0).contains(&det) {
        return false;
    }
    let limit = 0.5 * w.max(hgt) as f64;
    let (wf, hf) = ((w - 1) as f64, (hgt - 1) as f64);
    [(0.0, 0.0), (wf, 0.0), (wf, hf), (0.0, hf)].iter().all(|&(x, y)| {
        h.apply(x, y)
            .is_some_and(|(px, py)| (px - x).hypot(py - y) <= limit)
    })
}

fn keypoint_homography(
    reference: &[(Keypoint, Descriptor)],
    target: &Image,
    plan: &RegistrationPlan,
    seed: u64,
) -> Result<Homography, RegistrationError> {
    let found = detect_keypoints(target, plan.algo, &plan.detector)?;
    let ref_desc: Vec<Descriptor> = reference.iter().map(|(_, d)| d.clone()).collect();
    let tgt_desc: Vec<Descriptor> = found.iter().map(|(_, d)| d.clone()).collect();
    let matches = match_descriptors(&tgt_desc, &ref_desc, plan.match_ratio)?;
    if matches.len() < MIN_INLIERS {
        return Err(RegistrationError::InsufficientMatches {
            found: matches.len(),
            needed: MIN_INLIERS,
        });
    }
    let src: Vec<_> = matches
        .iter()
        .map(|m| Point2::new(found[m.index_a].0.x, found[m.index_a].0.y))
        .collect();
    let dst: Vec<_> = matches
        .iter()
        .map(|m| Point2::new(reference[m.index_b].0.x, reference[m.index_b].0.y))
        .collect();
    let params = RansacParams { seed, ..plan.ransac };
    let result = estimate_homography_ransac(&src, &dst, &params)?;
    if result.inlier_count() < MIN_INLIERS {
        return Err(RegistrationError::InsufficientMatches {
            found: result.inlier_count(),
            needed: MIN_INLIERS,
        });
    }
    Ok(result.homography)
}

fn register_to(
    reference: &Reference,
    target: &Image,
    plan: &RegistrationPlan,
    seed: u64,
) -> Result<Image, RegistrationError> {
    let prepared = reference.prepared.as_ref().map_err(Clone::clone)?;
    let (w, h) = target.dims();
    match prepared {
        Prepared::Height(ref_h) => {
            let shift = (ref_h - trace_ilm(target)?.mean_height).round() as i64;
            Ok(target.roll_rows(shift))
        }
        Prepared::Keypoints(ref_kps) => {
            let hom = keypoint_homography(ref_kps, target, plan, seed)?;
            if !plausible(&hom, w, h) {
                return Err(RegistrationError::Degenerate("implausible keypoint homography".into()));
            }
            warp_perspective(target, &hom)
        }
        Prepared::Flow => {
            let flow = optical_flow(&reference.image, target, &plan.flow)?;
            warp_flow(target, &flow)
        }
        Prepared::Hybrid(ref_quad) => {
            let quad = estimate_slab_quad(target)?;
            let hom = homography_from_quad(&quad.points(), &ref_quad.points())?;
            if !plausible(&hom, w, h) {
                return Err(RegistrationError::Degenerate("implausible slab homography".into()));
            }
            let coarse = warp_perspective(target, &hom)?;
            let flow = optical_flow(&reference.image, &coarse, &plan.flow)?;
            warp_flow(&coarse, &flow)
        }
    }
}

/// Register a single target to a single reference image with `plan.method`.
pub fn register_pair(
    reference: &Image,
    target: &Image,
    plan: &RegistrationPlan,
) -> Result<Image, RegistrationError> {
    if reference.dims() != target.dims() {
        return Err(RegistrationError::DimensionMismatch {
            a: reference.dims(),
            b: target.dims(),
        });
    }
    register_to(&prepare(reference, plan), target, plan, plan.ransac.seed)
}

/// Two-pass registration of a whole stack.
pub fn register_stack(
    stack: &Stack,
    plan: &RegistrationPlan,
) -> Result<(Stack, RegistrationReport), RegistrationError> {
    let n = stack.len();
    if n == 0 {
        return Err(RegistrationError::TooFewFrames { frames: 0, needed: 1 });
    }
    plan.validate(n)?;
    let seed = plan.ransac.seed;

    let refs1: BTreeMap<usize, Reference> = plan
        .pass1_refs
        .iter()
        .zip(par::map_indexed(&plan.pass1_refs, |_, &r| prepare(stack.frame(r), plan)))
        .map(|(&r, p)| (r, p))
        .collect();
    let pass1 = par::map_range(n, |i| {
        let r = plan.nearest_ref(i);
        let frame = stack.frame(i);
        if i == r {
            return (frame.clone(), r, FrameStatus::Ok);
        }
        match register_to(&refs1[&r], frame, plan, frame_seed(seed, 1, i)) {
            Ok(img) => (img, r, FrameStatus::Ok),
            Err(e) => (frame.clone(), r, FrameStatus::Failed(e.to_string())),
        }
    });

    let c = plan.pass2_ref;
    let central = prepare(&pass1[c].0, plan);
    let pass2 = par::map_range(n, |i| {
        let (img, r, status) = &pass1[i];
        if i == c || *r == c {
            return (img.clone(), *r, status.clone());
        }
        match register_to(&central, img, plan, frame_seed(seed, 2, i)) {
            Ok(out) => (out, c, status.clone()),
            Err(e) => (img.clone(), c, FrameStatus::Failed(e.to_string())),
        }
    });

    let reference = &pass2[c].0;
    let frames: Vec<FrameOutcome> = par::map_indexed(&pass2, |i, (img, r, status)| FrameOutcome {
        frame_index: i,
        reference_index: *r,
        correlation: pearson_correlation(img, reference).unwrap_or(0.0),
        status: status.clone(),
    });
    let correlation = MetricReport::from_values(frames.iter().map(|f| f.correlation).collect());
    let registered = stack.replace_frames(pass2.into_iter().map(|(img, _, _)| img).collect())?;
    Ok((
        registered,
        RegistrationReport {
            method: plan.method,
            frames,
            correlation,
        },
    ))
}

/// Correlation of every frame with frame `reference`, as a report.
pub fn correlation_to(stack: &Stack, reference: usize) -> MetricReport {
    let r = stack.frame(reference);
    MetricReport::from_values(par::map_indexed(stack.frames(), |_, f| {
        pearson_correlation(f, r).unwrap_or(0.0)
    }))
}
