//! Shadow columns: detection, classical baselines, annotation import,
//! brightness suppression and the suppression-strength search.

pub mod alpha;
pub mod baseline;
pub mod coco;
pub mod detect;
pub mod suppress;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use alpha::{optimize_alpha, AlphaPoint, AlphaResult, AlphaSearch};
pub use baseline::{classical_baseline, Baseline};
pub use coco::{import_coco_regions, CocoImport};
pub use detect::{detect_shadow_columns, detect_stack_shadows, DetectParams};
pub use suppress::{region_stats, suppress_shadows, suppress_stack, SuppressMode};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ShadowError {
    #[error("invalid parameters: {0}")]
    BadParams(String),
    #[error("region {region:?} exceeds frame {width}x{height}")]
    RegionOutOfBounds {
        region: ShadowRegion,
        width: usize,
        height: usize,
    },
    #[error("malformed annotation file: {0}")]
    Malformed(String),
    #[error("no annotated image matches a frame of the stack")]
    NoMatchingFrames,
    #[error("no shadow regions given")]
    NoRegions,
    #[error("{0}")]
    Io(String),
}

/// Rectangular shadow on one frame: columns `[col_start, col_end)` and rows
/// `[row_start, row_end)`; missing row bounds mean the full height.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ShadowRegion {
    pub frame_index: usize,
    pub col_start: usize,
    pub col_end: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub row_start: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub row_end: Option<usize>,
}

impl ShadowRegion {
    /// Full-height region.
    pub fn columns(frame_index: usize, col_start: usize, col_end: usize) -> Self {
        Self {
            frame_index,
            col_start,
            col_end,
            row_start: None,
            row_end: None,
        }
    }

    pub fn width(&self) -> usize {
        self.col_end.saturating_sub(self.col_start)
    }

    pub fn rows(&self, height: usize) -> (usize, usize) {
        (self.row_start.unwrap_or(0), self.row_end.unwrap_or(height))
    }

    pub fn check(&self, width: usize, height: usize) -> Result<(), ShadowError> {
        let (r0, r1) = self.rows(height);
        if self.col_start >= self.col_end || self.col_end > width || r0 >= r1 || r1 > height {
            return Err(ShadowError::RegionOutOfBounds {
                region: *self,
                width,
                height,
            });
        }
        Ok(())
    }
}

/// Sort regions and merge column-overlapping or touching ones on the same
/// frame; merged row bounds are the union.
pub fn merge_regions(mut regions: Vec<ShadowRegion>) -> Vec<ShadowRegion> {
    regions.sort();
    let mut out: Vec<ShadowRegion> = Vec::with_capacity(regions.len());
    for r in regions {
        match out.last_mut() {
            Some(last) if last.frame_index == r.frame_index && r.col_start <= last.col_end => {
                last.col_end = last.col_end.max(r.col_end);
                last.row_start = match (last.row_start, r.row_start) {
                    (Some(a), Some(b)) => Some(a.min(b)),
                    _ => None,
                };
                last.row_end = match (last.row_end, r.row_end) {
                    (Some(a), Some(b)) => Some(a.max(b)),
                    _ => None,
                };
            }
            _ => out.push(r),
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn merging_joins_overlaps_per_frame() {
        let merged = merge_regions(vec![
            ShadowRegion::columns(0, 10, 20),
            ShadowRegion::columns(1, 15, 18),
            ShadowRegion::columns(0, 18, 25),
            ShadowRegion::columns(0, 30, 32),
        ]);
        assert_eq!(
            merged,
            vec![
                ShadowRegion::columns(0, 10, 25),
                ShadowRegion::columns(0, 30, 32),
                ShadowRegion::columns(1, 15, 18),
            ]
        );
    }

    #[test]
    fn bounds_checked() {
        assert!(ShadowRegion::columns(0, 5, 5).check(10, 10).is_err());
        assert!(ShadowRegion::columns(0, 5, 11).check(10, 10).is_err());
        ShadowRegion::columns(0, 0, 10).check(10, 10).unwrap();
    }
}
