use serde::{Deserialize, Serialize};

use super::Image;

/// Intensity statistics over a set of 8-bit pixels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramStats {
    pub mean: f64,
    /// Population standard deviation.
    pub std_dev: f64,
    pub zero_count: u64,
    pub histogram: Vec<u64>,
}

impl HistogramStats {
    pub fn from_histogram(histogram: [u64; 256]) -> Self {
        let n: u64 = histogram.iter().sum();
        let (mean, std_dev) = if n == 0 {
            (0.0, 0.0)
        } else {
            let nf = n as f64;
            let mean = histogram
                .iter()
                .enumerate()
                .map(|(v, &c)| v as f64 * c as f64)
                .sum::<f64>()
                / nf;
            let var = histogram
                .iter()
                .enumerate()
                .map(|(v, &c)| (v as f64 - mean).powi(2) * c as f64)
                .sum::<f64>()
                / nf;
            (mean, var.sqrt())
        };
        Self {
            mean,
            std_dev,
            zero_count: histogram[0],
            histogram: histogram.to_vec(),
        }
    }

    pub fn from_pixels<'a>(pixels: impl IntoIterator<Item = &'a u8>) -> Self {
        let mut h = [0u64; 256];
        for &p in pixels {
            h[p as usize] += 1;
        }
        Self::from_histogram(h)
    }

    pub fn pixel_count(&self) -> u64 {
        self.histogram.iter().sum()
    }
}

/// Statistics over all pixels of the given frames (one image or a whole stack).
pub fn histogram_stats<'a>(frames: impl IntoIterator<Item = &'a Image>) -> HistogramStats {
    let mut h = [0u64; 256];
    for f in frames {
        for &p in f.as_slice() {
            h[p as usize] += 1;
        }
    }
    HistogramStats::from_histogram(h)
}
