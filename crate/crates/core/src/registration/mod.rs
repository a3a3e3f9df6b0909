//! Frame registration: ILM height alignment, keypoint homographies, dense
//! optical flow, and the slab-quad plus flow hybrid.

pub mod flow;
pub mod homography;
pub mod ilm;
pub mod keypoints;
pub mod matching;
pub mod slab;
pub mod stack;
pub mod warp;

use thiserror::Error;

use crate::imaging::ImagingError;

pub use flow::{optical_flow, FlowParams};
pub use homography::{
    estimate_homography_ransac, fit_homography_dlt, homography_from_quad, Homography, RansacParams,
    RansacResult,
};
pub use ilm::{
    height_adjust_register, height_align, ilm_heights, select_reference_frames, trace_ilm, trace_ilm_with,
    IlmParams, IlmTrace,
};
pub use keypoints::{detect_keypoints, Descriptor, DetectorParams, Keypoint, KeypointAlgo};
pub use matching::{match_descriptors, Match};
pub use slab::{estimate_slab_quad, SlabQuad};
pub use stack::{
    correlation_to, register_pair, register_stack, FrameOutcome, FrameStatus, Method, RegistrationPlan,
    RegistrationReport,
};
pub use warp::{warp_flow, warp_perspective, FlowField};

#[derive(Debug, Clone, Error)]
pub enum RegistrationError {
    #[error("degenerate configuration: {0}")]
    Degenerate(String),
    #[error("insufficient matches: found {found}, need {needed}")]
    InsufficientMatches { found: usize, needed: usize },
    #[error("dimension mismatch: {a:?} vs {b:?}")]
    DimensionMismatch { a: (usize, usize), b: (usize, usize) },
    #[error("no column produced an ILM trace")]
    AllGaps,
    #[error("stack has {frames} frames, need at least {needed}")]
    TooFewFrames { frames: usize, needed: usize },
    #[error("image {width}x{height} is smaller than {min}x{min}")]
    ImageTooSmall { width: usize, height: usize, min: usize },
    #[error("descriptors of different kinds cannot be matched")]
    MixedDescriptorKinds,
    #[error("no retinal slab found")]
    NoSlab,
    #[error("invalid registration plan: {0}")]
    InvalidPlan(String),
    #[error("invalid parameters: {0}")]
    BadParams(String),
    #[error("{0}")]
    Imaging(String),
}

impl From<ImagingError> for RegistrationError {
    fn from(e: ImagingError) -> Self {
        RegistrationError::Imaging(e.to_string())
    }
}
