//! Layer boundaries from boundary-line masks, gap filling and thickness.

pub mod gaps;
pub mod reference;
pub mod segment;
pub mod thickness;
pub mod trace;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::imaging::Image;

pub use gaps::{interpolate_gaps, GapFlag, DEFAULT_MAX_GAP_COLS};
pub use reference::{check_printed, compare_reference, parse_reference_csv, Discrepancy, PrintedRow, ReferenceComparison};
pub use segment::{segment_boundaries, SegmentParams};
pub use thickness::{compute_thickness, LayerThickness, ThicknessReport};
pub use trace::trace_boundaries;

pub const DEFAULT_BOUNDARIES: [&str; 8] = [
    "ILM",
    "RNFL/GCL",
    "GCL+IPL/INL",
    "INL/OPL",
    "OPL/ONL",
    "ONL/ELM",
    "ELM/PR",
    "PR-end",
];

pub const DEFAULT_LAYERS: [&str; 7] = ["RNFL", "GCL+IPL", "INL", "OPL", "ONL", "ELM", "PR"];

#[derive(Debug, Clone, Error, PartialEq)]
pub enum LayersError {
    #[error("mask has no foreground pixels")]
    NoBoundaries,
    #[error("need at least {needed} boundaries, got {found}")]
    TooFewBoundaries { found: usize, needed: usize },
    #[error("mask looks like filled regions: a run of {run} rows exceeds {limit:.1}")]
    FilledMask { run: usize, limit: f64 },
    #[error("layer {0} has no column where both of its boundaries are present")]
    NoOverlapColumns(String),
    #[error("unknown layer '{0}'")]
    UnknownLayer(String),
    #[error("invalid parameters: {0}")]
    BadParams(String),
    #[error("malformed reference table: {0}")]
    MalformedReference(String),
}

/// Per-boundary, per-column subpixel depths (`None` marks a gap).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryMap {
    pub boundary_names: Vec<String>,
    /// Layer `k` lies between boundaries `k` and `k + 1`.
    pub layer_names: Vec<String>,
    pub width: usize,
    pub depths: Vec<Vec<Option<f64>>>,
}

impl BoundaryMap {
    /// Default names for `count` boundaries: the retinal scheme when `count`
    /// is 8, generic `B0..`/`L0..` otherwise.
    pub fn default_names(count: usize) -> (Vec<String>, Vec<String>) {
        if count == DEFAULT_BOUNDARIES.len() {
            (
                DEFAULT_BOUNDARIES.iter().map(|s| s.to_string()).collect(),
                DEFAULT_LAYERS.iter().map(|s| s.to_string()).collect(),
            )
        } else {
            (
                (0..count).map(|k| format!("B{k}")).collect(),
                (0..count.saturating_sub(1)).map(|k| format!("L{k}")).collect(),
            )
        }
    }

    pub fn new(depths: Vec<Vec<Option<f64>>>, width: usize) -> Self {
        let (boundary_names, layer_names) = Self::default_names(depths.len());
        Self {
            boundary_names,
            layer_names,
            width,
            depths,
        }
    }

    pub fn with_names(mut self, boundary_names: Vec<String>, layer_names: Vec<String>) -> Result<Self, LayersError> {
        if boundary_names.len() != self.depths.len() || layer_names.len() + 1 != self.depths.len() {
            return Err(LayersError::BadParams(format!(
                "{} boundaries need {} boundary names and {} layer names",
                self.depths.len(),
                self.depths.len(),
                self.depths.len().saturating_sub(1)
            )));
        }
        self.boundary_names = boundary_names;
        self.layer_names = layer_names;
        Ok(self)
    }

    pub fn boundary_count(&self) -> usize {
        self.depths.len()
    }

    pub fn gap_count(&self) -> usize {
        self.depths.iter().flatten().filter(|d| d.is_none()).count()
    }

    /// One-pixel lines (255 on 0) at the rounded depths.
    pub fn to_mask(&self, height: usize) -> Image {
        let mut mask = Image::new(self.width, height);
        for b in &self.depths {
            for (x, d) in b.iter().enumerate() {
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
}
