use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};

use stenosis_core::evaluation::{load_manifest, summary};
use stenosis_core::frame::load_sequence;
use stenosis_core::phantom::{render_sequence, write_sequence, PhantomSpec};
use stenosis_core::pipeline::{
    run_pipeline, trace_text, DepthSource, OutputPaths, PipelineError, RunOptions, SegmenterKind,
    EXIT_INGEST, EXIT_NO_KEYFRAME,
};
use stenosis_core::tracking::select_keyframe;
use stenosis_core::{CameraIntrinsics, PipelineConfig};

/// Stenosis severity (PSA/PSD) from bronchoscopy frame sequences.
#[derive(Parser)]
#[command(name = "stenosis", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Full pipeline on one sequence.
    Run(RunArgs),
    /// Render a synthetic airway sequence with ground truth.
    Render(RenderArgs),
    /// Summarize reports against ground truth.
    Eval(EvalArgs),
    /// Print the per-frame tracker log and the keyframe decision.
    Trace(TraceArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum SegmenterArg {
    Threshold,
    Slic,
}

impl From<SegmenterArg> for SegmenterKind {
    fn from(s: SegmenterArg) -> Self {
        match s {
            SegmenterArg::Threshold => SegmenterKind::Threshold,
            SegmenterArg::Slic => SegmenterKind::Slic,
        }
    }
}

#[derive(Args)]
struct SequenceArgs {
    /// Directory of numbered frame images.
    #[arg(long)]
    input: PathBuf,
    /// Calibration file (`key = value`: fx, fy, cx, cy, width, height, gamma).
    #[arg(long)]
    calibration: PathBuf,
    #[arg(long, value_enum, default_value = "threshold")]
    segmenter: SegmenterArg,
    /// JSON file with pipeline settings; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    intensity_threshold: Option<u8>,
    #[arg(long)]
    min_iou: Option<f64>,
    #[arg(long)]
    max_missed_frames: Option<usize>,
    #[arg(long)]
    slab_half_thickness: Option<f64>,
    #[arg(long)]
    plane_sweep_steps: Option<usize>,
    #[arg(long)]
    min_segment_pixels: Option<usize>,
}

impl SequenceArgs {
    fn pipeline_config(&self) -> anyhow::Result<PipelineConfig> {
        let mut cfg = match &self.config {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .with_context(|| format!("reading {}", p.display()))?;
                serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))?
            }
            None => PipelineConfig::default(),
        };
        if let Some(v) = self.intensity_threshold {
            cfg.intensity_threshold = v;
        }
        if let Some(v) = self.min_iou {
            cfg.min_iou = v;
        }
        if let Some(v) = self.max_missed_frames {
            cfg.max_missed_frames = v;
        }
        if let Some(v) = self.slab_half_thickness {
            cfg.slab_half_thickness = v;
        }
        if let Some(v) = self.plane_sweep_steps {
            cfg.plane_sweep_steps = v;
        }
        if let Some(v) = self.min_segment_pixels {
            cfg.min_segment_pixels = v;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    sequence: SequenceArgs,
    /// `photometric` or `file:<path>` (a raster or a directory of `depth_<index>.bin`).
    #[arg(long, default_value = "photometric")]
    depth: DepthSource,
    /// Measure this frame index instead of tracking.
    #[arg(long)]
    manual_keyframe: Option<usize>,
    /// Report JSON path; printed to stdout when absent.
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long)]
    overlay: Option<PathBuf>,
    #[arg(long)]
    trace: Option<PathBuf>,
    /// OBJ export of the keyframe cloud and both sections.
    #[arg(long)]
    mesh: Option<PathBuf>,
}

#[derive(Args)]
struct RenderArgs {
    /// Phantom spec JSON. Without it the standard 200-frame layout is used.
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Stenosis radius as a fraction of the tube radius (standard layout).
    #[arg(long, default_value_t = 0.5)]
    r_min: f64,
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Square image size in pixels.
    #[arg(long, default_value_t = 320)]
    size: usize,
    /// Focal length in pixels.
    #[arg(long, default_value_t = 160.0)]
    focal: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    manifest: PathBuf,
}

#[derive(Args)]
struct TraceArgs {
    #[command(flatten)]
    sequence: SequenceArgs,
    /// Write the log here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        Failure {
            code: e.exit_code() as u8,
            error: e.into(),
        }
    }
}

fn ingest(error: anyhow::Error) -> Failure {
    Failure {
        code: EXIT_INGEST as u8,
        error,
    }
}

fn run(args: RunArgs) -> Result<(), Failure> {
    let config = args.sequence.pipeline_config().map_err(ingest)?;
    let opts = RunOptions {
        input: args.sequence.input.clone(),
        calibration: args.sequence.calibration.clone(),
        config,
        depth: args.depth,
        manual_keyframe: args.manual_keyframe,
        segmenter: args.sequence.segmenter.into(),
        outputs: OutputPaths {
            report: args.report.clone(),
            overlay: args.overlay,
            trace: args.trace,
            mesh: args.mesh,
        },
    };
    let analysis = run_pipeline(&opts)?;
    let r = &analysis.report;
    eprintln!(
        "keyframe {} ({:?}): PSA {:.2}  PSD {:.2}",
        r.keyframe_index,
        r.provenance.keyframe_source,
        r.psa(),
        r.psd()
    );
    eprintln!(
        "timing: tracking {:.3} s, keyframe measurement {:.3} s",
        analysis.timings.tracking.as_secs_f64(),
        analysis.timings.measurement.as_secs_f64()
    );
    for w in &r.warnings {
        eprintln!("warning: {w}");
    }
    if args.report.is_none() {
        print!("{}", r.to_canonical_string());
    }
    Ok(())
}

fn render(args: RenderArgs) -> Result<(), Failure> {
    let spec = match &args.spec {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .with_context(|| format!("reading {}", p.display()))
                .map_err(ingest)?;
            PhantomSpec::from_json(&text).map_err(|e| ingest(e.into()))?
        }
        None => PhantomSpec::standard(args.r_min, args.noise, args.seed),
    };
    let k = CameraIntrinsics::centered(args.size, args.focal, spec.gamma)
        .map_err(|e| ingest(e.into()))?;
    let seq = render_sequence(&spec, &k).map_err(|e| ingest(e.into()))?;
    let write = |out: &Path| -> anyhow::Result<()> {
        write_sequence(&seq, &k, out)?;
        std::fs::write(out.join("spec.json"), spec.to_json())?;
        Ok(())
    };
    write(&args.out).map_err(|error| Failure { code: 1, error })?;
    eprintln!(
        "wrote {} frames to {}; truth PSA {:.2} PSD {:.2} keyframes {:?}",
        seq.frames.len(),
        args.out.display(),
        seq.truth.psa_true,
        seq.truth.psd_true,
        seq.truth.keyframe_interval
    );
    Ok(())
}

fn eval(args: EvalArgs) -> Result<(), Failure> {
    let loaded = load_manifest(&args.manifest).map_err(|e| ingest(e.into()))?;
    print!("{}", summary(&loaded));
    Ok(())
}

fn trace(args: TraceArgs) -> Result<(), Failure> {
    let cfg = args.sequence.pipeline_config().map_err(ingest)?;
    let (frames, _) = load_sequence(&args.sequence.input, &args.sequence.calibration)
        .map_err(PipelineError::from)?;
    let segmenter = SegmenterKind::from(args.sequence.segmenter).build(&cfg);
    let selection = select_keyframe(&frames, segmenter.as_ref(), &cfg);
    let mut text = trace_text(&selection.trace);
    match &selection.decision {
        Ok(d) => text.push_str(&format!(
            "# keyframe {} ({:?} from frame {})\n",
            d.keyframe_index, d.reason, d.first_miss_index
        )),
        Err(e) => text.push_str(&format!("# no keyframe: {e}\n")),
    }
    match &args.out {
        Some(p) => std::fs::write(p, &text).map_err(|e| Failure {
            code: 1,
            error: anyhow::Error::new(e).context(format!("writing {}", p.display())),
        })?,
        None => print!("{text}"),
    }
    match selection.decision {
        Ok(_) => Ok(()),
        Err(e) => Err(Failure {
            code: EXIT_NO_KEYFRAME as u8,
            error: e.into(),
        }),
    }
}

/// The error chain, skipping causes whose text the outer messages already carry.
fn message(error: &anyhow::Error) -> String {
    let mut text = String::new();
    for cause in error.chain() {
        let c = cause.to_string();
        if !text.contains(&c) {
            if !text.is_empty() {
                text.push_str(": ");
            }
            text.push_str(&c);
        }
    }
    text
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => run(a),
        Command::Render(a) => render(a),
        Command::Eval(a) => eval(a),
        Command::Trace(a) => trace(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", message(&f.error));
            ExitCode::from(f.code)
        }
    }
}
