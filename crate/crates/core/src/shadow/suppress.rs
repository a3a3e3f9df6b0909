//! Brightness lift inside shadow regions.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{ShadowError, ShadowRegion};
use crate::imaging::{clamp_round, HistogramStats, Image, Stack};
use crate::par;

/// Bit depth of the gray values.
const BIT_DEPTH: i32 = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SuppressMode {
    /// `alpha * (2^(n-1) - old) / 2^(n-1)` with `n = 8`.
    Verbatim,
    /// `old + alpha * (255 - old) / 255`.
    #[default]
    ComplementBoost,
}

impl SuppressMode {
    pub fn name(self) -> &'static str {
        match self {
            SuppressMode::Verbatim => "verbatim",
            SuppressMode::ComplementBoost => "complement_boost",
        }
    }

    /// New value of one pixel.
    pub fn apply(self, old: u8, alpha: f64) -> u8 {
        let old = old as f64;
        match self {
            SuppressMode::Verbatim => {
                let half = 2f64.powi(BIT_DEPTH - 1);
                clamp_round(alpha * (half - old) / half)
            }
            SuppressMode::ComplementBoost => clamp_round(old + alpha * (255.0 - old) / 255.0),
        }
    }

    pub fn lut(self, alpha: f64) -> [u8; 256] {
        std::array::from_fn(|v| self.apply(v as u8, alpha))
    }
}

impl fmt::Display for SuppressMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SuppressMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "verbatim" => Ok(SuppressMode::Verbatim),
            "complement_boost" => Ok(SuppressMode::ComplementBoost),
            other => Err(format!("unknown suppression mode '{other}'")),
        }
    }
}

fn region_mask(regions: &[&ShadowRegion], w: usize, h: usize) -> Result<Vec<bool>, ShadowError> {
    let mut mask = vec![false; w * h];
    for r in regions {
        r.check(w, h)?;
        let (r0, r1) = r.rows(h);
        for y in r0..r1 {
            mask[y * w + r.col_start..y * w + r.col_end].fill(true);
        }
    }
    Ok(mask)
}

fn check_alpha(alpha: f64) -> Result<(), ShadowError> {
    if alpha > 0.0 && alpha.is_finite() {
        Ok(())
    } else {
        Err(ShadowError::BadParams(format!("alpha {alpha} must be positive")))
    }
}

/// Apply the lift to every pixel covered by `regions` (regardless of their
/// frame index); every other pixel is copied.
pub fn suppress_shadows(
    img: &Image,
    regions: &[ShadowRegion],
    alpha: f64,
    mode: SuppressMode,
) -> Result<Image, ShadowError> {
    check_alpha(alpha)?;
    let (w, h) = img.dims();
    let mask = region_mask(&regions.iter().collect::<Vec<_>>(), w, h)?;
    let lut = mode.lut(alpha);
    let mut out = img.clone();
    for (px, &m) in out.as_mut_slice().iter_mut().zip(&mask) {
        if m {
            *px = lut[*px as usize];
        }
    }
    Ok(out)
}

/// Suppress every frame with the regions attached to it.
pub fn suppress_stack(
    stack: &Stack,
    regions: &[ShadowRegion],
    alpha: f64,
    mode: SuppressMode,
) -> Result<Stack, ShadowError> {
    check_alpha(alpha)?;
    let frames = par::map_indexed(stack.frames(), |i, f| {
        let own: Vec<ShadowRegion> = regions.iter().filter(|r| r.frame_index == i).copied().collect();
        suppress_shadows(f, &own, alpha, mode)
    })
    .into_iter()
    .collect::<Result<Vec<_>, _>>()?;
    stack
        .replace_frames(frames)
        .map_err(|e| ShadowError::BadParams(e.to_string()))
}

/// Histogram of the pixels covered by the regions, each pixel counted once.
pub fn region_histogram(stack: &Stack, regions: &[ShadowRegion]) -> Result<[u64; 256], ShadowError> {
    let (w, h) = (stack.width(), stack.height());
    let per_frame = par::map_indexed(stack.frames(), |i, f| {
        let own: Vec<&ShadowRegion> = regions.iter().filter(|r| r.frame_index == i).collect();
        let mask = region_mask(&own, w, h)?;
        let mut hist = [0u64; 256];
        for (&v, &m) in f.as_slice().iter().zip(&mask) {
            if m {
                hist[v as usize] += 1;
            }
        }
        Ok(hist)
    });
    let mut total = [0u64; 256];
    for hist in per_frame {
        for (t, v) in total.iter_mut().zip(hist?) {
            *t += v;
        }
    }
    if let Some(r) = regions.iter().find(|r| r.frame_index >= stack.len()) {
        return Err(ShadowError::BadParams(format!("region on frame {} outside the stack", r.frame_index)));
    }
    Ok(total)
}

/// Mean, standard deviation and zero count of the pixels inside the regions.
pub fn region_stats(stack: &Stack, regions: &[ShadowRegion]) -> Result<HistogramStats, ShadowError> {
    Ok(HistogramStats::from_histogram(region_histogram(stack, regions)?))
}
