//! End-to-end run: load or generate, register, deshadow, enface and metrics,
//! thickness. Every artifact lands under the output directory together with
//! a `run_manifest.json` describing the run.

pub mod config;
pub mod csv;

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};
use thiserror::Error;

pub use config::{
    EmitConfig, InputSource, PipelineConfig, RegistrationConfig, ShadowConfig, ShadowSource, ThicknessConfig,
};

use crate::imaging::{enface, load_stack, load_tiff_stack, save_stack, Image, Stack};
use crate::layers::{
    compare_reference, compute_thickness, interpolate_gaps, parse_reference_csv, trace_boundaries, BoundaryMap,
    GapFlag, ThicknessReport,
};
use crate::metrics::{pearson_correlation, snr_db};
use crate::par;
use crate::phantom::{generate_phantom, GroundTruth, PhantomSpec};
use crate::registration::{register_stack, RansacParams, RegistrationPlan};
use crate::shadow::{
    detect_stack_shadows, import_coco_regions, optimize_alpha, region_stats, suppress_stack, ShadowRegion,
};

pub const MANIFEST_NAME: &str = "run_manifest.json";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid configuration at {field}: {reason}")]
    ConfigInvalid { field: String, reason: String },
    #[error("{stage}: {reason}")]
    Stage { stage: String, reason: String },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

fn stage_err(stage: &str, e: impl ToString) -> PipelineError {
    PipelineError::Stage {
        stage: stage.to_string(),
        reason: e.to_string(),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct StageRecord {
    pub name: String,
    /// `ok`, `skipped` or `error`.
    pub status: String,
    pub summary: Value,
}

impl StageRecord {
    fn ok(name: &str, summary: Value) -> Self {
        Self {
            name: name.into(),
            status: "ok".into(),
            summary,
        }
    }

    fn skipped(name: &str, why: &str) -> Self {
        Self {
            name: name.into(),
            status: "skipped".into(),
            summary: json!({ "reason": why }),
        }
    }

    fn error(name: &str, e: &PipelineError) -> Self {
        Self {
            name: name.into(),
            status: "error".into(),
            summary: json!({ "error": e.to_string() }),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub config: PipelineConfig,
    pub seed: u64,
    pub versions: Value,
    pub stages: Vec<StageRecord>,
}

impl RunManifest {
    pub fn succeeded(&self) -> bool {
        self.stages.iter().all(|s| s.status != "error")
    }
}

/// Thickness output: the report plus the gaps interpolation left open.
#[derive(Debug, Clone, Serialize)]
pub struct ThicknessArtifact {
    pub report: ThicknessReport,
    pub unfilled_gaps: Vec<(usize, GapFlag)>,
}

fn write(path: PathBuf, contents: &str) -> Result<(), PipelineError> {
    fs::write(path, contents)?;
    Ok(())
}

fn write_json(path: PathBuf, value: &impl Serialize) -> Result<(), PipelineError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| stage_err("output", e))?;
    text.push('\n');
    write(path, &text)
}

pub fn load_input(
    source: &InputSource,
    seed: u64,
) -> Result<(Stack, Option<(PhantomSpec, GroundTruth)>), PipelineError> {
    let phantom = |mut spec: PhantomSpec| -> Result<_, PipelineError> {
        spec.seed = seed;
        let (stack, gt) = generate_phantom(&spec).map_err(|e| stage_err("input", e))?;
        Ok((stack, Some((spec, gt))))
    };
    match source {
        InputSource::StackDir { path, pattern } => {
            Ok((load_stack(path, pattern).map_err(|e| stage_err("input", e))?, None))
        }
        InputSource::Tiff { path } => Ok((load_tiff_stack(path).map_err(|e| stage_err("input", e))?, None)),
        InputSource::Phantom(spec) => phantom(spec.clone()),
        InputSource::PhantomFile { path } => {
            let text = fs::read_to_string(path)?;
            let spec: PhantomSpec = serde_json::from_str(&text).map_err(|e| stage_err("input", e))?;
            phantom(spec)
        }
    }
}

/// Registration plan from the config section.
pub fn build_plan(stack: &Stack, cfg: &RegistrationConfig, seed: u64) -> Result<RegistrationPlan, PipelineError> {
    let mut plan = match (&cfg.refs, cfg.auto_refs) {
        (Some(refs), _) => RegistrationPlan::with_refs(stack.len(), cfg.method, refs),
        (None, true) => RegistrationPlan::auto(stack, cfg.method, cfg.drop_threshold_px, cfg.window)
            .map_err(|e| stage_err("registration", e))?,
        (None, false) => RegistrationPlan::central(stack.len(), cfg.method),
    };
    plan.algo = cfg.algo;
    plan.detector = cfg.detector;
    plan.flow = cfg.flow;
    plan.ransac = RansacParams {
        iterations: cfg.ransac_iterations,
        inlier_tol_px: cfg.inlier_tol_px,
        seed,
    };
    plan.validate(stack.len()).map_err(|e| stage_err("registration", e))?;
    Ok(plan)
}

/// Regions from the configured source.
pub fn shadow_regions(stack: &Stack, cfg: &ShadowConfig) -> Result<(Vec<ShadowRegion>, &'static str), PipelineError> {
    match &cfg.source {
        ShadowSource::Auto => Ok((detect_stack_shadows(stack, &cfg.detect), "auto")),
        ShadowSource::Coco { path } => {
            let import = import_coco_regions(path, stack).map_err(|e| stage_err("shadow", e))?;
            Ok((import.regions, "coco"))
        }
    }
}

/// Boundary maps for every frame of a mask stack.
pub fn trace_masks(masks: &[Image], expected: usize) -> Result<Vec<BoundaryMap>, PipelineError> {
    par::map_indexed(masks, |_, m| trace_boundaries(m, expected))
        .into_iter()
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| stage_err("thickness", e))
}

/// Thickness from masks: trace, fill gaps, measure, optionally compare.
pub fn thickness_from_masks(
    masks: &[Image],
    names: Option<(&[String], &[String])>,
    axial_res: f64,
    max_gap_cols: usize,
    reference: Option<&[(String, f64)]>,
) -> Result<ThicknessArtifact, PipelineError> {
    let expected = names.map_or(crate::layers::DEFAULT_BOUNDARIES.len(), |(b, _)| b.len());
    let mut maps = trace_masks(masks, expected)?;
    if let Some((b, l)) = names {
        maps = maps
            .into_iter()
            .map(|m| m.with_names(b.to_vec(), l.to_vec()))
            .collect::<Result<_, _>>()
            .map_err(|e| stage_err("thickness", e))?;
    }
    let mut unfilled_gaps = Vec::new();
    let filled: Vec<BoundaryMap> = maps
        .iter()
        .enumerate()
        .map(|(i, m)| {
            let (f, flags) = interpolate_gaps(m, max_gap_cols);
            unfilled_gaps.extend(flags.into_iter().map(|g| (i, g)));
            f
        })
        .collect();
    let mut report = compute_thickness(&filled, axial_res).map_err(|e| stage_err("thickness", e))?;
    if let Some(table) = reference {
        report = compare_reference(&report, table).map_err(|e| stage_err("thickness", e))?;
    }
    Ok(ThicknessArtifact { report, unfilled_gaps })
}

/// Per-frame correlation with the central frame and SNR.
pub fn frame_metrics(stack: &Stack) -> (Vec<f64>, Vec<f64>) {
    let reference = stack.frame(stack.len() / 2);
    let corr = par::map_indexed(stack.frames(), |_, f| pearson_correlation(f, reference).unwrap_or(0.0));
    let snr = par::map_indexed(stack.frames(), |_, f| snr_db(f));
    (corr, snr)
}

struct Run<'a> {
    cfg: &'a PipelineConfig,
    out: &'a Path,
    stages: Vec<StageRecord>,
}

impl Run<'_> {
    fn record<T>(&mut self, name: &str, result: Result<(T, Value), PipelineError>) -> Option<T> {
        match result {
            Ok((v, summary)) => {
                self.stages.push(StageRecord::ok(name, summary));
                Some(v)
            }
            Err(e) => {
                self.stages.push(StageRecord::error(name, &e));
                None
            }
        }
    }

    fn register(&self, stack: &Stack) -> Result<(Stack, Value), PipelineError> {
        let plan = build_plan(stack, &self.cfg.registration, self.cfg.seed)?;
        let (registered, report) = register_stack(stack, &plan).map_err(|e| stage_err("registration", e))?;
        if self.cfg.emit.stacks {
            save_stack(&registered, self.out.join("registered")).map_err(|e| stage_err("registration", e))?;
        }
        if self.cfg.emit.csv {
            write(self.out.join("registration_report.csv"), &csv::registration_csv(&report))?;
        }
        let failed: Vec<usize> = report.failed_frames().collect();
        Ok((
            registered,
            json!({
                "method": plan.method,
                "pass1_refs": plan.pass1_refs,
                "pass2_ref": plan.pass2_ref,
                "mean_correlation": report.correlation.mean,
                "min_correlation": report.correlation.min,
                "failed_frames": failed,
            }),
        ))
    }

    fn deshadow(&self, stack: &Stack) -> Result<(Stack, Value), PipelineError> {
        let sc = &self.cfg.shadow;
        let (regions, source) = shadow_regions(stack, sc)?;
        if self.cfg.emit.csv {
            write(self.out.join("shadow_report.csv"), &csv::shadow_csv(&regions, source))?;
        }
        if regions.is_empty() {
            if self.cfg.emit.stacks {
                save_stack(stack, self.out.join("deshadowed")).map_err(|e| stage_err("shadow", e))?;
            }
            return Ok((stack.clone(), json!({ "source": source, "regions": 0, "alpha": null })));
        }
        let mode = sc.search.mode;
        let alpha = if sc.alpha_opt {
            let result = optimize_alpha(stack, &regions, &sc.search).map_err(|e| stage_err("shadow", e))?;
            if self.cfg.emit.csv {
                write(self.out.join("alpha_trace.csv"), &csv::alpha_csv(&result))?;
            }
            result.alpha
        } else {
            sc.alpha
        };
        let before = region_stats(stack, &regions).map_err(|e| stage_err("shadow", e))?;
        let out = suppress_stack(stack, &regions, alpha, mode).map_err(|e| stage_err("shadow", e))?;
        let after = region_stats(&out, &regions).map_err(|e| stage_err("shadow", e))?;
        if self.cfg.emit.stacks {
            save_stack(&out, self.out.join("deshadowed")).map_err(|e| stage_err("shadow", e))?;
        }
        Ok((
            out,
            json!({
                "source": source,
                "regions": regions.len(),
                "alpha": alpha,
                "mode": mode,
                "before": { "mean": before.mean, "std": before.std_dev, "zeros": before.zero_count },
                "after": { "mean": after.mean, "std": after.std_dev, "zeros": after.zero_count },
            }),
        ))
    }

    fn enface_and_metrics(&self, stack: &Stack) -> Result<((), Value), PipelineError> {
        if self.cfg.emit.enface {
            let img = enface(stack).map_err(|e| stage_err("enface", e))?;
            img.to_gray_image()
                .save(self.out.join("enface.png"))
                .map_err(|e| stage_err("enface", e))?;
        }
        let (corr, snr) = frame_metrics(stack);
        if self.cfg.emit.csv {
            write(self.out.join("metrics.csv"), &csv::metrics_csv(&corr, &snr))?;
        }
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len().max(1) as f64;
        Ok(((), json!({ "mean_correlation": mean(&corr), "mean_snr_db": mean(&snr) })))
    }

    fn thickness(
        &self,
        stack: &Stack,
        phantom: Option<&(PhantomSpec, GroundTruth)>,
    ) -> Result<(Option<()>, Value), PipelineError> {
        let tc = &self.cfg.thickness;
        let reference = match &tc.reference_csv {
            Some(p) => Some(parse_reference_csv(&fs::read_to_string(p)?).map_err(|e| stage_err("thickness", e))?),
            None => None,
        };
        let res = tc.axial_res_um_per_px.unwrap_or(stack.axial_res_um_per_px());
        let artifact = if let Some(dir) = &tc.mask_dir {
            let masks = load_stack(dir, "*.png").map_err(|e| stage_err("thickness", e))?;
            thickness_from_masks(masks.frames(), None, res, tc.max_gap_cols, reference.as_deref())?
        } else if let Some((spec, gt)) = phantom {
            let masks = gt.boundary_masks(spec.width, spec.height);
            thickness_from_masks(
                &masks,
                Some((&gt.boundary_names, &gt.layer_names)),
                res,
                tc.max_gap_cols,
                reference.as_deref(),
            )?
        } else {
            return Ok((None, json!({ "reason": "no boundary masks available" })));
        };
        write_json(self.out.join("thickness_report.json"), &artifact)?;
        Ok((
            Some(()),
            json!({
                "total_mean_px": artifact.report.total.mean_px,
                "mean_abs_relative_error_pct": artifact.report.mean_abs_relative_error_pct,
                "unfilled_gaps": artifact.unfilled_gaps.len(),
            }),
        ))
    }
}

/// Run every stage. Configuration problems abort before any output is
/// written; stage failures are recorded and independent stages still run.
pub fn run_pipeline(config: &PipelineConfig) -> Result<RunManifest, PipelineError> {
    config.validate()?;
    let out = config.output_dir.clone().expect("validated");
    fs::create_dir_all(&out)?;
    let mut run = Run {
        cfg: config,
        out: &out,
        stages: Vec::new(),
    };

    let input = config.input.as_ref().expect("validated");
    let loaded = run.record(
        "input",
        load_input(input, config.seed).map(|(stack, phantom)| {
            let summary = json!({
                "frames": stack.len(),
                "width": stack.width(),
                "height": stack.height(),
                "phantom": phantom.is_some(),
            });
            ((stack, phantom), summary)
        }),
    );
    let Some((stack, phantom)) = loaded else {
        return finish(run, config);
    };
    if let Some((_, gt)) = &phantom {
        write_json(out.join("ground_truth.json"), gt)?;
    }

    let registered = if config.registration.enabled {
        let r = run.register(&stack);
        run.record("registration", r)
    } else {
        run.stages.push(StageRecord::skipped("registration", "disabled"));
        None
    };
    let current = registered.unwrap_or_else(|| stack.clone());

    let deshadowed = if config.shadow.enabled {
        let r = run.deshadow(&current);
        run.record("shadow", r)
    } else {
        run.stages.push(StageRecord::skipped("shadow", "disabled"));
        None
    };
    let current = deshadowed.unwrap_or(current);

    let r = run.enface_and_metrics(&current);
    run.record("enface_metrics", r);

    if config.thickness.enabled {
        match run.thickness(&stack, phantom.as_ref()) {
            Ok((Some(()), summary)) => run.stages.push(StageRecord::ok("thickness", summary)),
            Ok((None, summary)) => run.stages.push(StageRecord {
                name: "thickness".into(),
                status: "skipped".into(),
                summary,
            }),
            Err(e) => run.stages.push(StageRecord::error("thickness", &e)),
        }
    } else {
        run.stages.push(StageRecord::skipped("thickness", "disabled"));
    }
    finish(run, config)
}

fn finish(run: Run<'_>, config: &PipelineConfig) -> Result<RunManifest, PipelineError> {
    let manifest = RunManifest {
        config: config.clone(),
        seed: config.seed,
        versions: json!({ "octpost-core": env!("CARGO_PKG_VERSION") }),
        stages: run.stages,
    };
    write_json(run.out.join(MANIFEST_NAME), &manifest)?;
    Ok(manifest)
}
