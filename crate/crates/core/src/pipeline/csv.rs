//! CSV artifacts: comma separated, header row, `\n` endings, reals with six
//! decimals.

use std::fmt::Write as _;

use crate::registration::RegistrationReport;
use crate::shadow::{AlphaResult, ShadowRegion};

pub fn real(v: f64) -> String {
    format!("{v:.6}")
}

pub fn registration_csv(report: &RegistrationReport) -> String {
    let mut out = String::from("frame_index,method,reference_index,correlation,status\n");
    for f in &report.frames {
        let status = f.status.to_string().replace(',', ";");
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            f.frame_index,
            report.method,
            f.reference_index,
            real(f.correlation),
            status
        );
    }
    out
}

pub fn shadow_csv(regions: &[ShadowRegion], source: &str) -> String {
    let mut out = String::from("frame_index,col_start,col_end,source\n");
    for r in regions {
        let _ = writeln!(out, "{},{},{},{}", r.frame_index, r.col_start, r.col_end, source);
    }
    out
}

pub fn alpha_csv(result: &AlphaResult) -> String {
    let mut out = String::from("alpha,J,mean,std,zeros\n");
    for p in &result.trace {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            real(p.alpha),
            real(p.objective),
            real(p.mean),
            real(p.std_dev),
            p.zeros
        );
    }
    out
}

pub fn metrics_csv(correlation: &[f64], snr_db: &[f64]) -> String {
    let mut out = String::from("frame_index,correlation,snr_db\n");
    for (i, (c, s)) in correlation.iter().zip(snr_db).enumerate() {
        let _ = writeln!(out, "{i},{},{}", real(*c), real(*s));
    }
    out
}
