//! JSON pipeline configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::layers::DEFAULT_MAX_GAP_COLS;
use crate::phantom::PhantomSpec;
use crate::registration::{DetectorParams, FlowParams, KeypointAlgo, Method};
use crate::shadow::{AlphaSearch, DetectParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum InputSource {
    /// Directory of PNG frames.
    StackDir {
        path: PathBuf,
        #[serde(default = "default_pattern")]
        pattern: String,
    },
    /// Multi-page TIFF file.
    Tiff { path: PathBuf },
    /// Inline phantom specification.
    Phantom(PhantomSpec),
    /// Phantom specification stored in a JSON file.
    PhantomFile { path: PathBuf },
}

fn default_pattern() -> String {
    "*.png".to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegistrationConfig {
    pub enabled: bool,
    pub method: Method,
    pub algo: KeypointAlgo,
    /// Explicit first-pass references; takes precedence over `auto_refs`.
    pub refs: Option<Vec<usize>>,
    pub auto_refs: bool,
    pub drop_threshold_px: f64,
    pub window: usize,
    pub ransac_iterations: usize,
    pub inlier_tol_px: f64,
    pub detector: DetectorParams,
    pub flow: FlowParams,
}

impl Default for RegistrationConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            method: Method::Hybrid,
            algo: KeypointAlgo::Orb,
            refs: None,
            auto_refs: true,
            drop_threshold_px: 4.0,
            window: 5,
            ransac_iterations: 2000,
            inlier_tol_px: 2.0,
            detector: DetectorParams::default(),
            flow: FlowParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ShadowSource {
    Auto,
    Coco { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ShadowConfig {
    pub enabled: bool,
    pub source: ShadowSource,
    pub detect: DetectParams,
    /// Fixed strength, used when `alpha_opt` is false.
    pub alpha: f64,
    pub alpha_opt: bool,
    /// Search grid, weights and suppression mode.
    pub search: AlphaSearch,
}

impl Default for ShadowConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            source: ShadowSource::Auto,
            detect: DetectParams::default(),
            alpha: 1.3,
            alpha_opt: true,
            search: AlphaSearch::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ThicknessConfig {
    pub enabled: bool,
    /// Boundary masks named like the frames; phantom input falls back to
    /// its ground-truth masks.
    pub mask_dir: Option<PathBuf>,
    /// Overrides the stack's axial resolution.
    pub axial_res_um_per_px: Option<f64>,
    /// `layer,um` reference table.
    pub reference_csv: Option<PathBuf>,
    pub max_gap_cols: usize,
}

impl Default for ThicknessConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            mask_dir: None,
            axial_res_um_per_px: None,
            reference_csv: None,
            max_gap_cols: DEFAULT_MAX_GAP_COLS,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmitConfig {
    pub stacks: bool,
    pub enface: bool,
    pub csv: bool,
}

impl Default for EmitConfig {
    fn default() -> Self {
        Self {
            stacks: true,
            enface: true,
            csv: true,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub input: Option<InputSource>,
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub registration: RegistrationConfig,
    #[serde(default)]
    pub shadow: ShadowConfig,
    #[serde(default)]
    pub thickness: ThicknessConfig,
    #[serde(default)]
    pub emit: EmitConfig,
}


fn invalid(field: &str, reason: impl Into<String>) -> PipelineError {
    PipelineError::ConfigInvalid {
        field: field.to_string(),
        reason: reason.into(),
    }
}

fn must_exist(field: &str, path: &Path) -> Result<(), PipelineError> {
    if path.exists() {
        Ok(())
    } else {
        Err(invalid(field, format!("{} does not exist", path.display())))
    }
}

impl PipelineConfig {
    pub fn from_json(text: &str) -> Result<Self, PipelineError> {
        serde_json::from_str(text).map_err(|e| invalid("<root>", e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, PipelineError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| invalid("<file>", format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Check required fields, referenced paths and parameter ranges.
    pub fn validate(&self) -> Result<(), PipelineError> {
        match &self.input {
            None => return Err(invalid("input", "missing input source")),
            Some(InputSource::StackDir { path, .. }) => must_exist("input.stack_dir.path", path)?,
            Some(InputSource::Tiff { path }) => must_exist("input.tiff.path", path)?,
            Some(InputSource::PhantomFile { path }) => must_exist("input.phantom_file.path", path)?,
            Some(InputSource::Phantom(spec)) => spec.validate().map_err(|e| invalid("input.phantom", e.to_string()))?,
        }
        match &self.output_dir {
            None => return Err(invalid("output_dir", "missing output directory")),
            Some(p) if p.as_os_str().is_empty() => return Err(invalid("output_dir", "empty path")),
            _ => {}
        }
        let r = &self.registration;
        if r.window < 2 {
            return Err(invalid("registration.window", "must be at least 2"));
        }
        if r.ransac_iterations == 0 {
            return Err(invalid("registration.ransac_iterations", "must be positive"));
        }
        if !(r.inlier_tol_px > 0.0) {
            return Err(invalid("registration.inlier_tol_px", "must be positive"));
        }
        if let ShadowSource::Coco { path } = &self.shadow.source {
            must_exist("shadow.source.coco.path", path)?;
        }
        if !(self.shadow.alpha > 0.0) {
            return Err(invalid("shadow.alpha", "must be positive"));
        }
        self.shadow
            .search
            .validate()
            .map_err(|e| invalid("shadow.search", e.to_string()))?;
        if let Some(p) = &self.thickness.mask_dir {
            must_exist("thickness.mask_dir", p)?;
        }
        if let Some(p) = &self.thickness.reference_csv {
            must_exist("thickness.reference_csv", p)?;
        }
        if let Some(res) = self.thickness.axial_res_um_per_px {
            if !(res > 0.0) {
                return Err(invalid("thickness.axial_res_um_per_px", "must be positive"));
            }
        }
        Ok(())
    }
}
