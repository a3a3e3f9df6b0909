//! Layer thickness statistics in pixels and micrometers.

use serde::{Deserialize, Serialize};

use super::reference::ReferenceComparison;
use super::{BoundaryMap, LayersError};
use crate::imaging::DEFAULT_AXIAL_RES_UM_PER_PX;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerThickness {
    pub name: String,
    pub mean_px: f64,
    pub std_px: f64,
    /// Exactly `mean_px * axial_res_um_per_px`.
    pub mean_um: f64,
    /// Columns (pooled over all maps) that contributed.
    pub columns: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThicknessReport {
    pub axial_res_um_per_px: f64,
    pub layers: Vec<LayerThickness>,
    /// Top boundary to bottom boundary.
    pub total: LayerThickness,
    #[serde(default)]
    pub comparisons: Vec<ReferenceComparison>,
    /// Mean of the per-layer percent errors (total row excluded).
    #[serde(default)]
    pub mean_abs_relative_error_pct: Option<f64>,
}

impl ThicknessReport {
    pub fn layer(&self, name: &str) -> Option<&LayerThickness> {
        self.layers.iter().find(|l| l.name == name)
    }
}

fn stats(name: String, values: &[f64], res: f64) -> Result<LayerThickness, LayersError> {
    if values.is_empty() {
        return Err(LayersError::NoOverlapColumns(name));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    Ok(LayerThickness {
        name,
        mean_px: mean,
        std_px: var.sqrt(),
        mean_um: mean * res,
        columns: values.len(),
    })
}

fn differences(maps: &[BoundaryMap], upper: usize, lower: usize) -> Vec<f64> {
    maps.iter()
        .flat_map(|m| {
            m.depths[upper]
                .iter()
                .zip(&m.depths[lower])
                .filter_map(|(a, b)| Some(b.as_ref()? - a.as_ref()?))
        })
        .collect()
}

/// Thickness of every layer, pooling the columns of all `maps`.
pub fn compute_thickness(maps: &[BoundaryMap], axial_res_um_per_px: f64) -> Result<ThicknessReport, LayersError> {
    if !(axial_res_um_per_px > 0.0 && axial_res_um_per_px.is_finite()) {
        return Err(LayersError::BadParams(format!(
            "axial resolution {axial_res_um_per_px} must be positive"
        )));
    }
    let first = maps.first().ok_or(LayersError::TooFewBoundaries { found: 0, needed: 2 })?;
    let count = first.boundary_count();
    if count < 2 {
        return Err(LayersError::TooFewBoundaries {
            found: count,
            needed: 2,
        });
    }
    if maps
        .iter()
        .any(|m| m.boundary_count() != count || m.layer_names != first.layer_names)
    {
        return Err(LayersError::BadParams("maps use different boundary schemes".into()));
    }
    let layers = (0..count - 1)
        .map(|k| {
            stats(
                first.layer_names[k].clone(),
                &differences(maps, k, k + 1),
                axial_res_um_per_px,
            )
        })
        .collect::<Result<Vec<_>, _>>()?;
    let total_name = format!(
        "{} to {}",
        first.boundary_names[0],
        first.layer_names.last().expect("count >= 2")
    );
    let total = stats(total_name, &differences(maps, 0, count - 1), axial_res_um_per_px)?;
    Ok(ThicknessReport {
        axial_res_um_per_px,
        layers,
        total,
        comparisons: Vec::new(),
        mean_abs_relative_error_pct: None,
    })
}

/// Thickness at the default axial resolution.
pub fn compute_thickness_default(maps: &[BoundaryMap]) -> Result<ThicknessReport, LayersError> {
    compute_thickness(maps, DEFAULT_AXIAL_RES_UM_PER_PX)
}
