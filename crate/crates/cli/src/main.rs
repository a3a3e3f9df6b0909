use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use octpost_core::imaging::{enface, load_stack, save_stack, Stack};
use octpost_core::layers::{parse_reference_csv, BoundaryMap};
use octpost_core::phantom::{generate_phantom, PhantomSpec};
use octpost_core::pipeline::{
    build_plan, csv, frame_metrics, run_pipeline, shadow_regions, thickness_from_masks, InputSource, PipelineConfig,
    ShadowSource,
};
use octpost_core::registration::{register_stack, KeypointAlgo, Method};
use octpost_core::shadow::{optimize_alpha, suppress_stack, SuppressMode};

#[derive(Debug, Parser)]
#[command(name = "octpost", version, about = "OCT B-scan stack post-processing")]
struct Cli {
    /// Seed for every random choice; overrides the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (0 or absent: one per core). Outputs do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// JSON pipeline configuration; command-line flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic stack with ground truth.
    Phantom(PhantomArgs),
    /// Register a stack to its reference frames.
    Register(RegisterArgs),
    /// Detect and suppress shadow columns.
    Deshadow(DeshadowArgs),
    /// Write the enface projection of a stack.
    Enface(EnfaceArgs),
    /// Per-frame correlation and SNR as CSV.
    Metrics(MetricsArgs),
    /// Layer thickness from boundary masks.
    Thickness(ThicknessArgs),
    /// Run every stage from a configuration.
    Pipeline(PipelineArgs),
}

#[derive(Debug, Args)]
struct PhantomArgs {
    /// Phantom specification JSON; defaults to the seven-layer retinal phantom.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct RegisterArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// height, keypoint, flow or hybrid.
    #[arg(long)]
    method: Option<Method>,
    /// orb, fast_brief or dog.
    #[arg(long)]
    algo: Option<KeypointAlgo>,
    /// Comma-separated first-pass reference frames.
    #[arg(long, value_delimiter = ',', conflicts_with = "auto_refs")]
    refs: Option<Vec<usize>>,
    /// Choose references from ILM height changes.
    #[arg(long)]
    auto_refs: bool,
}

#[derive(Debug, Args)]
struct DeshadowArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// `auto` or `coco:<file.json>`.
    #[arg(long)]
    regions: Option<String>,
    /// Fixed suppression strength.
    #[arg(long, conflicts_with = "alpha_opt")]
    alpha: Option<f64>,
    /// Search the strength that best matches unshadowed statistics.
    #[arg(long)]
    alpha_opt: bool,
    /// complement_boost or verbatim.
    #[arg(long)]
    mode: Option<SuppressMode>,
}

#[derive(Debug, Args)]
struct EnfaceArgs {
    #[arg(long = "in")]
    input: PathBuf,
    /// Output PNG path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct MetricsArgs {
    #[arg(long = "in")]
    input: PathBuf,
    /// Output CSV path; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ThicknessArgs {
    /// Directory of boundary-line masks.
    #[arg(long)]
    mask: Option<PathBuf>,
    /// Micrometers per pixel row.
    #[arg(long)]
    axial_res: Option<f64>,
    /// `layer,um` reference table.
    #[arg(long)]
    reference: Option<PathBuf>,
    /// Boundaries per mask.
    #[arg(long, default_value_t = 8)]
    boundaries: usize,
    /// Output JSON path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct PipelineArgs {
    /// Directory of PNG frames; overrides the configured input.
    #[arg(long = "in")]
    input: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    configure_threads(cli.threads)?;
    let mut config = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    match cli.command {
        Command::Phantom(a) => phantom(a, cli.seed, &config),
        Command::Register(a) => register(a, config),
        Command::Deshadow(a) => deshadow(a, config),
        Command::Enface(a) => {
            let stack = read_stack(&a.input)?;
            enface(&stack)?.to_gray_image().save(&a.out)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Metrics(a) => {
            let stack = read_stack(&a.input)?;
            let (corr, snr) = frame_metrics(&stack);
            let text = csv::metrics_csv(&corr, &snr);
            match a.out {
                Some(p) => fs::write(p, text)?,
                None => print!("{text}"),
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Thickness(a) => thickness(a, config),
        Command::Pipeline(a) => pipeline(a, config),
    }
}

#[cfg(feature = "parallel")]
fn configure_threads(threads: Option<usize>) -> Result<()> {
    if let Some(n) = threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the worker pool")?;
    }
    Ok(())
}

#[cfg(not(feature = "parallel"))]
fn configure_threads(_threads: Option<usize>) -> Result<()> {
    Ok(())
}

fn read_stack(dir: &Path) -> Result<Stack> {
    load_stack(dir, "*.png").with_context(|| format!("loading {}", dir.display()))
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn phantom(a: PhantomArgs, seed: Option<u64>, config: &PipelineConfig) -> Result<ExitCode> {
    let mut spec = match (&a.spec, &config.input) {
        (Some(p), _) => serde_json::from_str::<PhantomSpec>(&fs::read_to_string(p)?)
            .with_context(|| format!("parsing {}", p.display()))?,
        (None, Some(InputSource::Phantom(spec))) => spec.clone(),
        (None, Some(InputSource::PhantomFile { path })) => serde_json::from_str(&fs::read_to_string(path)?)?,
        (None, _) => PhantomSpec::table1(512, 496, 16),
    };
    if let Some(s) = seed {
        spec.seed = s;
    }
    let (stack, gt) = generate_phantom(&spec)?;
    save_stack(&stack, &a.out)?;
    write_json(&a.out.join("ground_truth.json"), &gt)?;
    Ok(ExitCode::SUCCESS)
}

fn register(a: RegisterArgs, config: PipelineConfig) -> Result<ExitCode> {
    let mut rc = config.registration;
    if let Some(m) = a.method {
        rc.method = m;
    }
    if let Some(algo) = a.algo {
        rc.algo = algo;
    }
    if a.refs.is_some() {
        rc.refs = a.refs;
    } else if a.auto_refs {
        rc.refs = None;
        rc.auto_refs = true;
    }
    let stack = read_stack(&a.input)?;
    let plan = build_plan(&stack, &rc, config.seed)?;
    let (registered, report) = register_stack(&stack, &plan)?;
    save_stack(&registered, &a.out)?;
    fs::write(a.out.join("registration_report.csv"), csv::registration_csv(&report))?;
    let failed = report.failed_frames().count();
    if failed > 0 {
        eprintln!("{failed} frame(s) kept unregistered; see registration_report.csv");
    }
    Ok(ExitCode::SUCCESS)
}

fn deshadow(a: DeshadowArgs, config: PipelineConfig) -> Result<ExitCode> {
    let mut sc = config.shadow;
    if let Some(r) = &a.regions {
        sc.source = match r.split_once(':') {
            None if r == "auto" => ShadowSource::Auto,
            Some(("coco", path)) => ShadowSource::Coco { path: path.into() },
            _ => bail!("--regions expects `auto` or `coco:<file>`, got '{r}'"),
        };
    }
    if let Some(alpha) = a.alpha {
        sc.alpha = alpha;
        sc.alpha_opt = false;
    } else if a.alpha_opt {
        sc.alpha_opt = true;
    }
    if let Some(m) = a.mode {
        sc.search.mode = m;
    }
    let stack = read_stack(&a.input)?;
    let (regions, source) = shadow_regions(&stack, &sc)?;
    fs::create_dir_all(&a.out)?;
    fs::write(a.out.join("shadow_report.csv"), csv::shadow_csv(&regions, source))?;
    if regions.is_empty() {
        save_stack(&stack, &a.out)?;
        return Ok(ExitCode::SUCCESS);
    }
    let alpha = if sc.alpha_opt {
        let result = optimize_alpha(&stack, &regions, &sc.search)?;
        fs::write(a.out.join("alpha_trace.csv"), csv::alpha_csv(&result))?;
        result.alpha
    } else {
        sc.alpha
    };
    let out = suppress_stack(&stack, &regions, alpha, sc.search.mode)?;
    save_stack(&out, &a.out)?;
    Ok(ExitCode::SUCCESS)
}

fn thickness(a: ThicknessArgs, config: PipelineConfig) -> Result<ExitCode> {
    let tc = config.thickness;
    let Some(mask_dir) = a.mask.or(tc.mask_dir) else {
        bail!("--mask is required");
    };
    let reference = match a.reference.or(tc.reference_csv) {
        Some(p) => Some(parse_reference_csv(&fs::read_to_string(&p)?)?),
        None => None,
    };
    let masks = read_stack(&mask_dir)?;
    let res = a
        .axial_res
        .or(tc.axial_res_um_per_px)
        .unwrap_or(masks.axial_res_um_per_px());
    let (b, l) = BoundaryMap::default_names(a.boundaries);
    let artifact = thickness_from_masks(masks.frames(), Some((&b, &l)), res, tc.max_gap_cols, reference.as_deref())?;
    write_json(&a.out, &artifact)?;
    Ok(ExitCode::SUCCESS)
}

fn pipeline(a: PipelineArgs, mut config: PipelineConfig) -> Result<ExitCode> {
    if let Some(dir) = a.input {
        config.input = Some(InputSource::StackDir {
            path: dir,
            pattern: "*.png".into(),
        });
    }
    if let Some(out) = a.out {
        config.output_dir = Some(out);
    }
    let manifest = run_pipeline(&config)?;
    for s in &manifest.stages {
        eprintln!("{:<16} {}", s.name, s.status);
    }
    Ok(if manifest.succeeded() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}
