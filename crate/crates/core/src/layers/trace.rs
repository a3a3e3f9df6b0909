//! Boundary depths from a boundary-line mask.

use super::{BoundaryMap, LayersError};
use crate::imaging::Image;
use crate::par;

#[derive(Debug, Clone, Copy)]
struct Run {
    center: f64,
    len: usize,
}

fn column_runs(mask: &Image, x: usize) -> Vec<Run> {
    let mut runs = Vec::new();
    let mut y = 0;
    let h = mask.height();
    while y < h {
        if mask.get(x, y) != 0 {
            let start = y;
            while y < h && mask.get(x, y) != 0 {
                y += 1;
            }
            runs.push(Run {
                center: (start + y - 1) as f64 / 2.0,
                len: y - start,
            });
        } else {
            y += 1;
        }
    }
    runs
}

fn median(mut v: Vec<f64>) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}

/// Order-preserving assignment of run centers to reference depths.
///
/// Minimizes the summed distance of matched pairs, charging `gate` for every
/// unmatched run or boundary; pairs further apart than `gate` never match.
fn assign(centers: &[f64], reference: &[f64], gate: f64) -> Vec<Option<f64>> {
    let (m, k) = (centers.len(), reference.len());
    // cost[i][j]: best cost using the first i runs and first j boundaries.
    let mut cost = vec![vec![f64::INFINITY; k + 1]; m + 1];
    let mut step = vec![vec![0u8; k + 1]; m + 1];
    cost[0][0] = 0.0;
    for i in 0..=m {
        for j in 0..=k {
            let c = cost[i][j];
            if !c.is_finite() {
                continue;
            }
            let mut relax = |ni: usize, nj: usize, add: f64, s: u8| {
                if c + add < cost[ni][nj] {
                    cost[ni][nj] = c + add;
                    step[ni][nj] = s;
                }
            };
            if i < m && j < k {
                let d = (centers[i] - reference[j]).abs();
                if d <= gate {
                    relax(i + 1, j + 1, d, 1);
                }
            }
            if i < m {
                relax(i + 1, j, gate, 2);
            }
            if j < k {
                relax(i, j + 1, gate, 3);
            }
        }
    }
    let mut out = vec![None; k];
    let (mut i, mut j) = (m, k);
    while i > 0 || j > 0 {
        match step[i][j] {
            1 => {
                out[j - 1] = Some(centers[i - 1]);
                i -= 1;
                j -= 1;
            }
            2 => i -= 1,
            _ => j -= 1,
        }
    }
    out
}

/// Trace `expected_count` boundaries from a mask of one-pixel boundary lines.
///
/// Columns with exactly `expected_count` runs are assigned in order. Every
/// other column is matched against the nearest such column, so missing
/// boundaries become gaps and spurious runs are dropped.
pub fn trace_boundaries(mask: &Image, expected_count: usize) -> Result<BoundaryMap, LayersError> {
    if expected_count < 2 {
        return Err(LayersError::TooFewBoundaries {
            found: expected_count,
            needed: 2,
        });
    }
    let w = mask.width();
    let runs: Vec<Vec<Run>> = par::map_range(w, |x| column_runs(mask, x));
    if runs.iter().all(Vec::is_empty) {
        return Err(LayersError::NoBoundaries);
    }

    let slab = median(
        runs.iter()
            .filter(|r| !r.is_empty())
            .map(|r| {
                let first = r.first().unwrap();
                let last = r.last().unwrap();
                last.center - first.center + (first.len + last.len) as f64 / 2.0
            })
            .collect(),
    )
    .unwrap_or(0.0);
    let limit = 3f64.max(0.25 * slab);
    if let Some(run) = runs.iter().flatten().find(|r| r.len as f64 > limit) {
        return Err(LayersError::FilledMask { run: run.len, limit });
    }

    let full: Vec<bool> = runs.iter().map(|r| r.len() == expected_count).collect();
    // Nearest full column to the left and right of every column.
    let mut left = vec![None; w];
    let mut last = None;
    for x in 0..w {
        if full[x] {
            last = Some(x);
        }
        left[x] = last;
    }
    let mut right = vec![None; w];
    let mut next = None;
    for x in (0..w).rev() {
        if full[x] {
            next = Some(x);
        }
        right[x] = next;
    }

    let columns: Vec<Vec<Option<f64>>> = par::map_range(w, |x| {
        let centers: Vec<f64> = runs[x].iter().map(|r| r.center).collect();
        if full[x] {
            return centers.into_iter().map(Some).collect();
        }
        let nearest = match (left[x], right[x]) {
            (Some(l), Some(r)) => Some(if x - l <= r - x { l } else { r }),
            (l, r) => l.or(r),
        };
        match nearest {
            Some(n) => {
                let reference: Vec<f64> = runs[n].iter().map(|r| r.center).collect();
                let spacing = reference
                    .windows(2)
                    .map(|p| p[1] - p[0])
                    .fold(f64::INFINITY, f64::min);
                let gate = (0.5 * spacing).clamp(2.0, 10.0);
                assign(&centers, &reference, gate)
            }
            // No column is complete: assign top-down.
            None => (0..expected_count).map(|k| centers.get(k).copied()).collect(),
        }
    });

    let depths = (0..expected_count)
        .map(|k| columns.iter().map(|c| c[k]).collect())
        .collect();
    Ok(BoundaryMap::new(depths, w))
}
