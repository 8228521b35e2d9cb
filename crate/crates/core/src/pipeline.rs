//! End-to-end stage graph: segmentation, tracking, keyframe, depth,
//! geometry, report.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use image::{Rgb, RgbImage};

use crate::camera::CameraIntrinsics;
use crate::config::{ConfigError, PipelineConfig};
use crate::depth::{
    DepthError, DepthMap, DepthProvider, FileProvider, PhotometricModel, PhotometricProvider,
};
use crate::frame::{load_sequence, Frame, IngestError};
use crate::geometry::{
    backproject, compute_psa_psd, cross_section, reference_sweep, stenosis_plane, write_obj,
    CrossSection, GeometryError, PlaneFit, PointCloud, SweepResult,
};
use crate::report::{Diagnostics, KeyframeSource, Provenance, Severity, StenosisReport};
use crate::segmentation::{
    SegmentError, SegmentMask, Segmenter, SlicSegmenter, ThresholdSegmenter,
};
use crate::tracking::{select_keyframe, TraceRecord, TrackError};

pub const EXIT_INGEST: i32 = 2;
pub const EXIT_NO_KEYFRAME: i32 = 3;
pub const EXIT_GEOMETRY: i32 = 4;
pub const EXIT_DEPTH: i32 = 5;
/// Failures writing outputs.
pub const EXIT_OUTPUT: i32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("config: {0}")]
    Config(#[from] ConfigError),
    #[error("ingest: {0}")]
    Ingest(#[from] IngestError),
    #[error("tracking: {0}")]
    Tracking(#[source] TrackError),
    #[error("keyframe: manual keyframe {index} outside the sequence of {frames} frames")]
    ManualKeyframe { index: usize, frames: usize },
    #[error("segmentation: frame {frame}: {source}")]
    Segmentation {
        frame: usize,
        #[source]
        source: SegmentError,
    },
    #[error("depth: frame {frame}: {source}")]
    Depth {
        frame: usize,
        #[source]
        source: DepthError,
    },
    #[error("geometry: frame {frame}: {source}")]
    Geometry {
        frame: usize,
        #[source]
        source: GeometryError,
    },
    #[error("output {path}: {msg}")]
    Output { path: PathBuf, msg: String },
}

impl PipelineError {
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_)
            | PipelineError::Ingest(_)
            | PipelineError::ManualKeyframe { .. } => EXIT_INGEST,
            PipelineError::Tracking(_) => EXIT_NO_KEYFRAME,
            PipelineError::Segmentation { .. } | PipelineError::Geometry { .. } => EXIT_GEOMETRY,
            PipelineError::Depth { .. } => EXIT_DEPTH,
            PipelineError::Output { .. } => EXIT_OUTPUT,
        }
    }

    pub fn stage(&self) -> &'static str {
        match self {
            PipelineError::Config(_) => "config",
            PipelineError::Ingest(_) => "ingest",
            PipelineError::Tracking(_) | PipelineError::ManualKeyframe { .. } => "tracking",
            PipelineError::Segmentation { .. } => "segmentation",
            PipelineError::Depth { .. } => "depth",
            PipelineError::Geometry { .. } => "geometry",
            PipelineError::Output { .. } => "output",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DepthSource {
    Photometric,
    /// A raster file, or a directory of per-frame rasters.
    File(PathBuf),
}

impl std::str::FromStr for DepthSource {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "photometric" => Ok(DepthSource::Photometric),
            _ => match s.strip_prefix("file:") {
                Some(p) if !p.is_empty() => Ok(DepthSource::File(PathBuf::from(p))),
                _ => Err(format!(
                    "expected 'photometric' or 'file:<path>', got '{s}'"
                )),
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SegmenterKind {
    #[default]
    Threshold,
    Slic,
}

impl SegmenterKind {
    pub fn build(self, cfg: &PipelineConfig) -> Box<dyn Segmenter> {
        match self {
            SegmenterKind::Threshold => Box::new(ThresholdSegmenter { config: *cfg }),
            SegmenterKind::Slic => Box::new(SlicSegmenter::default()),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct OutputPaths {
    pub report: Option<PathBuf>,
    /// Keyframe with the stenosis contour in green and the reference section in blue.
    pub overlay: Option<PathBuf>,
    pub trace: Option<PathBuf>,
    /// OBJ of the keyframe cloud and both section outlines.
    pub mesh: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOptions {
    pub input: PathBuf,
    pub calibration: PathBuf,
    pub config: PipelineConfig,
    pub depth: DepthSource,
    pub manual_keyframe: Option<usize>,
    pub segmenter: SegmenterKind,
    pub outputs: OutputPaths,
}

impl RunOptions {
    pub fn new(input: impl Into<PathBuf>, calibration: impl Into<PathBuf>) -> Self {
        Self {
            input: input.into(),
            calibration: calibration.into(),
            config: PipelineConfig::default(),
            depth: DepthSource::Photometric,
            manual_keyframe: None,
            segmenter: SegmenterKind::Threshold,
            outputs: OutputPaths::default(),
        }
    }
}

/// Geometry of one keyframe.
#[derive(Debug, Clone)]
pub struct Measurement {
    pub cloud: PointCloud,
    pub stenosis_fit: PlaneFit,
    pub stenosis: CrossSection,
    pub sweep: SweepResult,
    pub severity: Severity,
    pub warnings: Vec<String>,
}

/// Back-projects, fits the stenosis plane on the mask contour, sweeps for
/// the reference and compares the two sections.
pub fn measure_keyframe(
    mask: &SegmentMask,
    depth: &DepthMap,
    k: &CameraIntrinsics,
    cfg: &PipelineConfig,
) -> Result<Measurement, GeometryError> {
    let cloud = backproject(depth, k)?;
    let stenosis_fit = stenosis_plane(&cloud, mask)?;
    let stenosis = cross_section(&cloud, &stenosis_fit.plane, cfg)?;
    let sweep = reference_sweep(&cloud, &stenosis.plane, cfg)?;
    let (severity, warnings) = compute_psa_psd(&stenosis, &sweep.best)?;
    Ok(Measurement {
        cloud,
        stenosis_fit,
        stenosis,
        sweep,
        severity,
        warnings,
    })
}

#[derive(Debug, Clone, Default)]
pub struct Timings {
    pub tracking: Duration,
    pub measurement: Duration,
}

#[derive(Debug, Clone)]
pub struct Analysis {
    pub report: StenosisReport,
    pub keyframe: Frame,
    pub mask: SegmentMask,
    pub measurement: Measurement,
    pub trace: Vec<TraceRecord>,
    pub timings: Timings,
}

/// Runs every stage on frames already in memory.
pub fn analyze(
    frames: &[Frame],
    k: &CameraIntrinsics,
    cfg: &PipelineConfig,
    segmenter: &dyn Segmenter,
    depth: &dyn DepthProvider,
    manual_keyframe: Option<usize>,
) -> Result<Analysis, PipelineError> {
    cfg.validate()?;
    let t0 = Instant::now();
    let (position, source, trace) = match manual_keyframe {
        Some(index) => {
            let pos = frames.iter().position(|f| f.index() == index).ok_or(
                PipelineError::ManualKeyframe {
                    index,
                    frames: frames.len(),
                },
            )?;
            (pos, KeyframeSource::Manual, Vec::new())
        }
        None => {
            let selection = select_keyframe(frames, segmenter, cfg);
            let decision = selection.decision.map_err(PipelineError::Tracking)?;
            let pos = frames
                .iter()
                .position(|f| f.index() == decision.keyframe_index)
                .expect("keyframe comes from the sequence");
            (pos, KeyframeSource::Tracked, selection.trace)
        }
    };
    let tracking = t0.elapsed();

    let t1 = Instant::now();
    let keyframe = &frames[position];
    let frame = keyframe.index();
    let mask = segmenter
        .segment(keyframe)
        .map_err(|source| PipelineError::Segmentation { frame, source })?;
    let depth_map = depth
        .depth_for(keyframe)
        .map_err(|source| PipelineError::Depth { frame, source })?;
    let measurement = measure_keyframe(&mask, &depth_map, k, cfg)
        .map_err(|source| PipelineError::Geometry { frame, source })?;
    let measurement_time = t1.elapsed();

    let m = &measurement;
    let report = StenosisReport {
        keyframe_index: frame,
        severity: m.severity,
        warnings: m.warnings.clone(),
        provenance: Provenance {
            config: *cfg,
            depth_provider: depth.id(),
            segmenter: segmenter.name(),
            keyframe_source: source,
        },
        diagnostics: Diagnostics {
            stenosis_plane_normal: m.stenosis.plane.normal,
            stenosis_plane_offset: m.stenosis.plane.offset,
            reference_plane_z: m.sweep.best.plane.offset,
            stenosis_section_points: m.stenosis.members.len(),
            reference_section_points: m.sweep.best.members.len(),
            cloud_points: m.cloud.len(),
        },
    };
    Ok(Analysis {
        report,
        keyframe: keyframe.clone(),
        mask,
        measurement,
        trace,
        timings: Timings {
            tracking,
            measurement: measurement_time,
        },
    })
}

pub fn depth_provider(source: &DepthSource, gamma: f64) -> Box<dyn DepthProvider> {
    match source {
        DepthSource::Photometric => {
            Box::new(PhotometricProvider(PhotometricModel::with_gamma(gamma)))
        }
        DepthSource::File(path) => Box::new(FileProvider { path: path.clone() }),
    }
}

/// Loads the sequence, analyzes it and writes every requested output.
pub fn run_pipeline(opts: &RunOptions) -> Result<Analysis, PipelineError> {
    opts.config.validate()?;
    let (frames, k) = load_sequence(&opts.input, &opts.calibration)?;
    let segmenter = opts.segmenter.build(&opts.config);
    let depth = depth_provider(&opts.depth, k.gamma);
    let analysis = analyze(
        &frames,
        &k,
        &opts.config,
        segmenter.as_ref(),
        depth.as_ref(),
        opts.manual_keyframe,
    )?;
    write_outputs(&analysis, &opts.outputs)?;
    Ok(analysis)
}

fn output_error(path: &Path, e: impl std::fmt::Display) -> PipelineError {
    PipelineError::Output {
        path: path.to_path_buf(),
        msg: e.to_string(),
    }
}

pub fn write_outputs(analysis: &Analysis, outputs: &OutputPaths) -> Result<(), PipelineError> {
    if let Some(path) = &outputs.report {
        std::fs::write(path, analysis.report.to_canonical_string())
            .map_err(|e| output_error(path, e))?;
    }
    if let Some(path) = &outputs.overlay {
        overlay(analysis)
            .save(path)
            .map_err(|e| output_error(path, e))?;
    }
    if let Some(path) = &outputs.trace {
        std::fs::write(path, trace_text(&analysis.trace)).map_err(|e| output_error(path, e))?;
    }
    if let Some(path) = &outputs.mesh {
        let m = &analysis.measurement;
        let file = std::fs::File::create(path).map_err(|e| output_error(path, e))?;
        let mut out = std::io::BufWriter::new(file);
        write_obj(
            &mut out,
            &m.cloud,
            &[("stenosis", &m.stenosis), ("reference", &m.sweep.best)],
        )
        .and_then(|_| std::io::Write::flush(&mut out))
        .map_err(|e| output_error(path, e))?;
    }
    Ok(())
}

pub fn trace_text(trace: &[TraceRecord]) -> String {
    let mut s = String::from("# frame iou missed status\n");
    for r in trace {
        writeln!(s, "{r}").expect("string write");
    }
    s
}

const GREEN: Rgb<u8> = Rgb([0, 255, 0]);
const BLUE: Rgb<u8> = Rgb([0, 0, 255]);

/// Keyframe in gray with the reference section pixels in blue and the
/// stenosis contour on top in green.
pub fn overlay(analysis: &Analysis) -> RgbImage {
    let f = &analysis.keyframe;
    let mut img = RgbImage::from_fn(f.width() as u32, f.height() as u32, |x, y| {
        let v = f.get(x as usize, y as usize);
        Rgb([v, v, v])
    });
    let m = &analysis.measurement;
    for &i in &m.sweep.best.members {
        let (x, y) = m.cloud.pixel_of(i);
        img.put_pixel(x as u32, y as u32, BLUE);
    }
    for (x, y) in analysis.mask.mask.outer_ring() {
        img.put_pixel(x as u32, y as u32, GREEN);
    }
    img
}
