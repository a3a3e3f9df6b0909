//! Linear gap filling along each boundary.

use serde::{Deserialize, Serialize};

use super::BoundaryMap;

pub const DEFAULT_MAX_GAP_COLS: usize = 40;

/// A gap left unfilled: columns `[col_start, col_end)` of one boundary.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GapFlag {
    pub boundary: String,
    pub col_start: usize,
    pub col_end: usize,
    /// True when the gap touches the left or right frame edge.
    pub at_edge: bool,
}

/// Fill interior gaps of at most `max_gap_cols` columns by linear
/// interpolation; every other gap is returned as a flag.
pub fn interpolate_gaps(map: &BoundaryMap, max_gap_cols: usize) -> (BoundaryMap, Vec<GapFlag>) {
    let mut out = map.clone();
    let mut flags = Vec::new();
    for (k, depths) in out.depths.iter_mut().enumerate() {
        let w = depths.len();
        let mut x = 0;
        while x < w {
            if depths[x].is_some() {
                x += 1;
                continue;
            }
            let start = x;
            while x < w && depths[x].is_none() {
                x += 1;
            }
            let end = x;
            let at_edge = start == 0 || end == w;
            if !at_edge && end - start <= max_gap_cols {
                let (a, b) = (depths[start - 1].unwrap(), depths[end].unwrap());
                let span = (end - start + 1) as f64;
                for (i, d) in depths[start..end].iter_mut().enumerate() {
                    let t = (i + 1) as f64 / span;
                    *d = Some(a + t * (b - a));
                }
            } else {
                flags.push(GapFlag {
                    boundary: map.boundary_names[k].clone(),
                    col_start: start,
                    col_end: end,
                    at_edge,
                });
            }
        }
    }
    (out, flags)
}
