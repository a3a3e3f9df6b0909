//! Grid search for the suppression strength.

use serde::{Deserialize, Serialize};

use super::suppress::{region_histogram, SuppressMode};
use super::{ShadowError, ShadowRegion};
use crate::imaging::{HistogramStats, Stack};
use crate::par;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AlphaSearch {
    pub alpha_min: f64,
    pub alpha_max: f64,
    pub alpha_step: f64,
    pub w_mean: f64,
    pub w_std: f64,
    pub w_zero: f64,
    pub mode: SuppressMode,
}

impl Default for AlphaSearch {
    fn default() -> Self {
        Self {
            alpha_min: 1.0,
            alpha_max: 2.0,
            alpha_step: 0.05,
            w_mean: 1.0,
            w_std: 1.0,
            w_zero: 1.0,
            mode: SuppressMode::ComplementBoost,
        }
    }
}

impl AlphaSearch {
    pub fn validate(&self) -> Result<(), ShadowError> {
        let bad = |m: &str| Err(ShadowError::BadParams(m.into()));
        if !(self.alpha_min > 0.0 && self.alpha_min <= self.alpha_max && self.alpha_max.is_finite()) {
            return bad("need 0 < alpha_min <= alpha_max");
        }
        if !(self.alpha_step > 0.0) {
            return bad("alpha_step must be positive");
        }
        let weights = [self.w_mean, self.w_std, self.w_zero];
        if weights.iter().any(|w| !(*w >= 0.0)) || weights.iter().all(|&w| w == 0.0) {
            return bad("weights must be non-negative with at least one positive");
        }
        Ok(())
    }

    /// Grid points `alpha_min + k * alpha_step` up to `alpha_max`.
    pub fn grid(&self) -> Vec<f64> {
        let steps = ((self.alpha_max - self.alpha_min) / self.alpha_step + 1e-9).floor() as usize;
        (0..=steps).map(|k| self.alpha_min + k as f64 * self.alpha_step).collect()
    }

    /// Objective from baseline and suppressed statistics. A zero baseline
    /// makes the corresponding ratio undefined; that term contributes 0.
    pub fn objective(&self, before: &HistogramStats, after: &HistogramStats) -> f64 {
        let ratio = |a: f64, b: f64| if b == 0.0 { 0.0 } else { a / b };
        self.w_zero * ratio(after.zero_count as f64, before.zero_count as f64)
            + self.w_std * ratio(after.std_dev, before.std_dev)
            - self.w_mean * ratio(after.mean, before.mean)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlphaPoint {
    pub alpha: f64,
    pub objective: f64,
    pub mean: f64,
    pub std_dev: f64,
    pub zeros: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaResult {
    pub alpha: f64,
    pub baseline: AlphaPoint,
    pub trace: Vec<AlphaPoint>,
}

/// Evaluate the objective at every grid point on the pixels inside the
/// regions and return the minimizer (smallest alpha on ties).
pub fn optimize_alpha(
    stack: &Stack,
    regions: &[ShadowRegion],
    search: &AlphaSearch,
) -> Result<AlphaResult, ShadowError> {
    if regions.is_empty() {
        return Err(ShadowError::NoRegions);
    }
    search.validate()?;
    let hist = region_histogram(stack, regions)?;
    let before = HistogramStats::from_histogram(hist);
    let trace = par::map_range(search.grid().len(), |k| {
        let alpha = search.grid()[k];
        let lut = search.mode.lut(alpha);
        let mut mapped = [0u64; 256];
        for (v, &count) in hist.iter().enumerate() {
            mapped[lut[v] as usize] += count;
        }
        let after = HistogramStats::from_histogram(mapped);
        AlphaPoint {
            alpha,
            objective: search.objective(&before, &after),
            mean: after.mean,
            std_dev: after.std_dev,
            zeros: after.zero_count,
        }
    });
    let best = trace
        .iter()
        .fold(None::<&AlphaPoint>, |best, p| match best {
            Some(b) if b.objective <= p.objective => Some(b),
            _ => Some(p),
        })
        .expect("grid is never empty");
    Ok(AlphaResult {
        alpha: best.alpha,
        baseline: AlphaPoint {
            alpha: 0.0,
            objective: search.objective(&before, &before),
            mean: before.mean,
            std_dev: before.std_dev,
            zeros: before.zero_count,
        },
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::Image;

    fn shadowed() -> (Stack, Vec<ShadowRegion>) {
        let frames = (0..2)
            .map(|i| Image::from_fn(40, 30, move |x, y| ((x * 3 + y * 7 + i) % 60) as u8))
            .collect();
        (
            Stack::new(frames).unwrap(),
            vec![ShadowRegion::columns(0, 10, 20), ShadowRegion::columns(1, 5, 9)],
        )
    }

    #[test]
    fn grid_is_inclusive() {
        let g = AlphaSearch::default().grid();
        assert_eq!(g.len(), 21);
        assert!((g[20] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn mean_only_picks_largest_alpha() {
        let (stack, regions) = shadowed();
        let search = AlphaSearch {
            w_std: 0.0,
            w_zero: 0.0,
            ..Default::default()
        };
        let r = optimize_alpha(&stack, &regions, &search).unwrap();
        assert!((r.alpha - 2.0).abs() < 1e-12);
    }

    #[test]
    fn no_regions() {
        let (stack, _) = shadowed();
        assert_eq!(
            optimize_alpha(&stack, &[], &AlphaSearch::default()),
            Err(ShadowError::NoRegions)
        );
    }

    #[test]
    fn invalid_search() {
        let s = AlphaSearch {
            alpha_step: 0.0,
            ..Default::default()
        };
        assert!(s.validate().is_err());
        let s = AlphaSearch {
            w_mean: 0.0,
            w_std: 0.0,
            w_zero: 0.0,
            ..Default::default()
        };
        assert!(s.validate().is_err());
    }
}
