//! Quality metrics: Pearson correlation, SNR and Dice overlap, plus the
//! profile peak counter used to count layer bands.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::imaging::{HistogramStats, Image};

/// Cap applied when the background has zero variance.
pub const SNR_CAP_DB: f64 = 99.0;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("image sizes differ: {a:?} vs {b:?}")]
    DimensionMismatch { a: (usize, usize), b: (usize, usize) },
    #[error("correlation is undefined for two constant images")]
    ConstantInput,
}

fn check_dims(a: &Image, b: &Image) -> Result<(), MetricsError> {
    if a.dims() != b.dims() {
        return Err(MetricsError::DimensionMismatch {
            a: a.dims(),
            b: b.dims(),
        });
    }
    Ok(())
}

/// Pearson correlation over all pixels.
///
/// When exactly one image is constant the covariance is zero and 0.0 is
/// returned; two constant images have no defined correlation.
pub fn pearson_correlation(a: &Image, b: &Image) -> Result<f64, MetricsError> {
    check_dims(a, b)?;
    let n = a.as_slice().len() as f64;
    let (mut sa, mut sb) = (0f64, 0f64);
    for (&x, &y) in a.as_slice().iter().zip(b.as_slice()) {
        sa += x as f64;
        sb += y as f64;
    }
    let (ma, mb) = (sa / n, sb / n);
    let (mut cov, mut va, mut vb) = (0f64, 0f64, 0f64);
    for (&x, &y) in a.as_slice().iter().zip(b.as_slice()) {
        let dx = x as f64 - ma;
        let dy = y as f64 - mb;
        cov += dx * dy;
        va += dx * dx;
        vb += dy * dy;
    }
    match (va > 0.0, vb > 0.0) {
        (false, false) => Err(MetricsError::ConstantInput),
        (true, true) => Ok((cov / (va.sqrt() * vb.sqrt())).clamp(-1.0, 1.0)),
        _ => Ok(0.0),
    }
}

/// Otsu threshold: the smallest intensity assigned to the foreground class.
pub fn otsu_threshold(histogram: &[u64]) -> usize {
    let total: u64 = histogram.iter().sum();
    if total == 0 {
        return 0;
    }
    let sum_all: f64 = histogram
        .iter()
        .enumerate()
        .map(|(v, &c)| v as f64 * c as f64)
        .sum();
    let (mut w_bg, mut sum_bg) = (0f64, 0f64);
    let mut best = (f64::NEG_INFINITY, 0usize);
    for (t, &c) in histogram.iter().enumerate().take(histogram.len() - 1) {
        w_bg += c as f64;
        sum_bg += t as f64 * c as f64;
        let w_fg = total as f64 - w_bg;
        if w_bg == 0.0 || w_fg == 0.0 {
            continue;
        }
        let m_bg = sum_bg / w_bg;
        let m_fg = (sum_all - sum_bg) / w_fg;
        let between = w_bg * w_fg * (m_bg - m_fg).powi(2);
        if between > best.0 {
            best = (between, t + 1);
        }
    }
    best.1
}

/// `20 log10(mean_fg / std_bg)` with an Otsu foreground/background split,
/// capped at [`SNR_CAP_DB`].
pub fn snr_db(img: &Image) -> f64 {
    let stats = HistogramStats::from_pixels(img.as_slice());
    let t = otsu_threshold(&stats.histogram);
    if t == 0 {
        return SNR_CAP_DB;
    }
    let hist = &stats.histogram;
    let (mut n_bg, mut s_bg) = (0f64, 0f64);
    for (v, &c) in hist.iter().enumerate().take(t) {
        n_bg += c as f64;
        s_bg += v as f64 * c as f64;
    }
    let (mut n_fg, mut s_fg) = (0f64, 0f64);
    for (v, &c) in hist.iter().enumerate().skip(t) {
        n_fg += c as f64;
        s_fg += v as f64 * c as f64;
    }
    if n_bg == 0.0 || n_fg == 0.0 {
        return SNR_CAP_DB;
    }
    let m_bg = s_bg / n_bg;
    let var_bg = hist
        .iter()
        .enumerate()
        .take(t)
        .map(|(v, &c)| (v as f64 - m_bg).powi(2) * c as f64)
        .sum::<f64>()
        / n_bg;
    if var_bg <= 0.0 {
        return SNR_CAP_DB;
    }
    (20.0 * (s_fg / n_fg / var_bg.sqrt()).log10()).min(SNR_CAP_DB)
}

/// Dice overlap of two binary masks (non-zero pixels are foreground).
/// Two empty masks score 1.0.
pub fn dice(a: &Image, b: &Image) -> Result<f64, MetricsError> {
    check_dims(a, b)?;
    let (mut inter, mut na, mut nb) = (0u64, 0u64, 0u64);
    for (&x, &y) in a.as_slice().iter().zip(b.as_slice()) {
        let (x, y) = (x != 0, y != 0);
        na += x as u64;
        nb += y as u64;
        inter += (x && y) as u64;
    }
    if na + nb == 0 {
        return Ok(1.0);
    }
    Ok(2.0 * inter as f64 / (na + nb) as f64)
}

/// Per-frame metric values with aggregates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub values: Vec<f64>,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

impl MetricReport {
    pub fn from_values(values: Vec<f64>) -> Self {
        if values.is_empty() {
            return Self {
                values,
                mean: f64::NAN,
                min: f64::NAN,
                max: f64::NAN,
            };
        }
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        Self {
            values,
            mean: mean.clamp(min, max),
            min,
            max,
        }
    }
}

/// Indices of local maxima whose topographic prominence is at least
/// `min_prominence`. Plateaus report their left-middle sample.
pub fn find_peaks(profile: &[f64], min_prominence: f64) -> Vec<usize> {
    let n = profile.len();
    let mut peaks = Vec::new();
    let mut i = 1;
    while i + 1 < n {
        if profile[i] > profile[i - 1] {
            let mut j = i;
            while j + 1 < n && profile[j + 1] == profile[i] {
                j += 1;
            }
            if j + 1 < n && profile[j + 1] < profile[i] {
                peaks.push((i + j) / 2);
            }
            i = j + 1;
        } else {
            i += 1;
        }
    }
    peaks
        .into_iter()
        .filter(|&p| prominence(profile, p) >= min_prominence)
        .collect()
}

fn prominence(profile: &[f64], p: usize) -> f64 {
    let h = profile[p];
    let mut left_min = h;
    for &v in profile[..p].iter().rev() {
        if v > h {
            break;
        }
        left_min = left_min.min(v);
    }
    let mut right_min = h;
    for &v in &profile[p + 1..] {
        if v > h {
            break;
        }
        right_min = right_min.min(v);
    }
    h - left_min.max(right_min)
}
