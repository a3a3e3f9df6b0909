//! Comparison of measured thickness against a published table.

use serde::{Deserialize, Serialize};

use super::thickness::ThicknessReport;
use super::LayersError;

/// Tolerance for printed values, half a unit in the last printed decimal of
/// two-decimal figures.
const PRINT_TOL: f64 = 0.005;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceComparison {
    pub layer: String,
    pub estimated_um: f64,
    pub reference_um: f64,
    pub percent_error: f64,
}

fn normalize(name: &str) -> String {
    name.chars().filter(|c| !c.is_whitespace()).collect::<String>().to_uppercase()
}

fn is_total(report: &ThicknessReport, name: &str) -> bool {
    let n = normalize(name);
    n == normalize(&report.total.name) || n == "TOTAL"
}

/// Estimated micrometers for a layer name; `A+B` composites sum their parts
/// unless a layer with the composite name exists.
fn estimate_um(report: &ThicknessReport, name: &str) -> Result<f64, LayersError> {
    let key = normalize(name);
    if is_total(report, name) {
        return Ok(report.total.mean_um);
    }
    if let Some(l) = report.layers.iter().find(|l| normalize(&l.name) == key) {
        return Ok(l.mean_um);
    }
    if key.contains('+') {
        let mut sum = 0.0;
        for part in key.split('+') {
            sum += report
                .layers
                .iter()
                .find(|l| normalize(&l.name) == part)
                .ok_or_else(|| LayersError::UnknownLayer(name.to_string()))?
                .mean_um;
        }
        return Ok(sum);
    }
    Err(LayersError::UnknownLayer(name.to_string()))
}

/// Attach per-layer percent errors and their mean (total row excluded from
/// the mean).
pub fn compare_reference(report: &ThicknessReport, reference: &[(String, f64)]) -> Result<ThicknessReport, LayersError> {
    let mut out = report.clone();
    out.comparisons.clear();
    let mut layer_errors = Vec::new();
    for (name, ref_um) in reference {
        if !(*ref_um > 0.0) {
            return Err(LayersError::MalformedReference(format!("{name}: reference {ref_um} must be positive")));
        }
        let est = estimate_um(report, name)?;
        let pct = (est - ref_um).abs() / ref_um * 100.0;
        if !is_total(report, name) {
            layer_errors.push(pct);
        }
        out.comparisons.push(ReferenceComparison {
            layer: name.clone(),
            estimated_um: est,
            reference_um: *ref_um,
            percent_error: pct,
        });
    }
    out.mean_abs_relative_error_pct =
        (!layer_errors.is_empty()).then(|| layer_errors.iter().sum::<f64>() / layer_errors.len() as f64);
    Ok(out)
}

/// `layer,um` table with a header row.
pub fn parse_reference_csv(text: &str) -> Result<Vec<(String, f64)>, LayersError> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines
        .next()
        .ok_or_else(|| LayersError::MalformedReference("empty table".into()))?;
    if normalize(header) != "LAYER,UM" {
        return Err(LayersError::MalformedReference(format!("unexpected header '{header}'")));
    }
    lines
        .map(|line| {
            let (name, um) = line
                .rsplit_once(',')
                .ok_or_else(|| LayersError::MalformedReference(format!("bad row '{line}'")))?;
            let um = um
                .trim()
                .parse::<f64>()
                .map_err(|e| LayersError::MalformedReference(format!("bad value in '{line}': {e}")))?;
            Ok((name.trim().to_string(), um))
        })
        .collect()
}

/// A row as printed in a table: optional pixel count and micrometers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrintedRow {
    pub layer: String,
    pub px: Option<f64>,
    pub um: f64,
}

/// Disagreement between a printed figure and the arithmetic of the report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Discrepancy {
    pub layer: String,
    pub field: String,
    pub printed: f64,
    pub computed: f64,
}

/// Check printed rows against the report: pixel counts, micrometer values,
/// and each row's own `px * resolution` product.
pub fn check_printed(report: &ThicknessReport, rows: &[PrintedRow]) -> Result<Vec<Discrepancy>, LayersError> {
    let res = report.axial_res_um_per_px;
    let mut out = Vec::new();
    for row in rows {
        let est_um = estimate_um(report, &row.layer)?;
        let est_px = est_um / res;
        let mut flag = |field: &str, printed: f64, computed: f64, tol: f64| {
            if (printed - computed).abs() > tol {
                out.push(Discrepancy {
                    layer: row.layer.clone(),
                    field: field.to_string(),
                    printed,
                    computed,
                });
            }
        };
        if let Some(px) = row.px {
            flag("px", px, est_px, 0.5);
            flag("px_times_resolution", row.um, px * res, PRINT_TOL);
        }
        flag("um", row.um, est_um, PRINT_TOL);
    }
    Ok(out)
}
