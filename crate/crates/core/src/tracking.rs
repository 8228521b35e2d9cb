//! IoU tracking of the dark segment and keyframe selection.
//!
//! The track follows the lumen from in front of the vocal cords. Once the
//! camera passes them the darkest region jumps to the stenosis, the IoU with
//! the last confirmed segment collapses and, after more than
//! `max_missed_frames` consecutive misses, the track is lost. The keyframe is
//! the first frame of that terminal run of misses.

use std::fmt;

use rayon::prelude::*;

use crate::config::PipelineConfig;
use crate::frame::Frame;
use crate::segmentation::{mask_iou, SegmentError, SegmentMask, Segmenter};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TrackError {
    #[error("cannot step a lost track (frame {frame_index})")]
    Lost { frame_index: usize },
    #[error("frame {frame_index} arrives after frame {last}")]
    OutOfOrder { frame_index: usize, last: usize },
    #[error("first frame {frame_index} has no dark region to initialise the track")]
    Init { frame_index: usize },
    #[error("track never lost over {frames} frames; the sequence ends before the subglottis")]
    NoKeyframe { frames: usize },
    #[error("keyframe selection needs at least 2 frames, got {0}")]
    TooFewFrames(usize),
    #[error("frame {frame_index}: {source}")]
    Segmentation {
        frame_index: usize,
        #[source]
        source: SegmentError,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrackStatus {
    Active,
    Lost,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MissReason {
    /// A segment was found but overlaps the confirmed one too little.
    IoUBreak,
    /// No dark region at all.
    SegmentationLoss,
}

impl fmt::Display for TrackStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TrackStatus::Active => "active",
            TrackStatus::Lost => "lost",
        })
    }
}

/// What the segmenter reported for one frame.
#[derive(Debug, Clone)]
pub enum Observation {
    Segment(SegmentMask),
    Missing { frame_index: usize },
}

impl Observation {
    pub fn frame_index(&self) -> usize {
        match self {
            Observation::Segment(s) => s.frame_index,
            Observation::Missing { frame_index } => *frame_index,
        }
    }

    /// `NoDarkRegion` becomes a miss; any other segmentation error is fatal.
    pub fn from_result(
        frame_index: usize,
        result: Result<SegmentMask, SegmentError>,
    ) -> Result<Self, TrackError> {
        match result {
            Ok(mask) => Ok(Observation::Segment(mask)),
            Err(SegmentError::NoDarkRegion { .. }) => Ok(Observation::Missing { frame_index }),
            Err(source) => Err(TrackError::Segmentation {
                frame_index,
                source,
            }),
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrackState {
    pub last_confirmed: SegmentMask,
    pub missed_count: usize,
    /// `(frame_index, iou)` for every observed frame; misses without a
    /// segment record an IoU of zero.
    pub history: Vec<(usize, f64)>,
    pub status: TrackStatus,
    miss_run: Option<(usize, MissReason)>,
}

/// One line of the tracker trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRecord {
    pub frame_index: usize,
    pub iou: f64,
    pub missed_count: usize,
    pub status: TrackStatus,
}

impl fmt::Display for TraceRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {:.4} {} {}",
            self.frame_index, self.iou, self.missed_count, self.status
        )
    }
}

impl TrackState {
    pub fn new(initial: SegmentMask) -> Self {
        let history = vec![(initial.frame_index, 1.0)];
        Self {
            last_confirmed: initial,
            missed_count: 0,
            history,
            status: TrackStatus::Active,
            miss_run: None,
        }
    }

    /// First frame and cause of the current run of misses, if any.
    pub fn miss_run(&self) -> Option<(usize, MissReason)> {
        self.miss_run
    }

    pub fn step(
        &mut self,
        obs: Observation,
        cfg: &PipelineConfig,
    ) -> Result<TraceRecord, TrackError> {
        let frame_index = obs.frame_index();
        if self.status == TrackStatus::Lost {
            return Err(TrackError::Lost { frame_index });
        }
        if let Some(&(last, _)) = self.history.last() {
            if frame_index <= last {
                return Err(TrackError::OutOfOrder { frame_index, last });
            }
        }
        let (iou, reason) = match obs {
            Observation::Segment(current) => {
                let iou = mask_iou(&self.last_confirmed, &current).map_err(|source| {
                    TrackError::Segmentation {
                        frame_index,
                        source,
                    }
                })?;
                if iou >= cfg.min_iou {
                    self.last_confirmed = current;
                    (iou, None)
                } else {
                    (iou, Some(MissReason::IoUBreak))
                }
            }
            Observation::Missing { .. } => (0.0, Some(MissReason::SegmentationLoss)),
        };
        match reason {
            None => {
                self.missed_count = 0;
                self.miss_run = None;
            }
            Some(reason) => {
                self.missed_count += 1;
                self.miss_run.get_or_insert((frame_index, reason));
                if self.missed_count > cfg.max_missed_frames {
                    self.status = TrackStatus::Lost;
                }
            }
        }
        self.history.push((frame_index, iou));
        Ok(TraceRecord {
            frame_index,
            iou,
            missed_count: self.missed_count,
            status: self.status,
        })
    }
}

/// Functional form of [`TrackState::step`].
pub fn track_step(
    mut state: TrackState,
    current: Observation,
    cfg: &PipelineConfig,
) -> Result<TrackState, TrackError> {
    state.step(current, cfg)?;
    Ok(state)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KeyframeDecision {
    pub keyframe_index: usize,
    pub first_miss_index: usize,
    pub reason: MissReason,
}

#[derive(Debug, Clone)]
pub struct KeyframeSelection {
    pub decision: Result<KeyframeDecision, TrackError>,
    pub trace: Vec<TraceRecord>,
}

/// Runs the tracker over pre-computed observations. The trace covers every
/// frame consumed, including the failing ones.
pub fn track_observations<I>(observations: I, cfg: &PipelineConfig) -> KeyframeSelection
where
    I: IntoIterator<Item = Observation>,
{
    let mut iter = observations.into_iter();
    let mut trace = Vec::new();
    let fail = |e, trace| KeyframeSelection {
        decision: Err(e),
        trace,
    };
    let mut state = match iter.next() {
        None => return fail(TrackError::TooFewFrames(0), trace),
        Some(Observation::Missing { frame_index }) => {
            return fail(TrackError::Init { frame_index }, trace)
        }
        Some(Observation::Segment(first)) => {
            trace.push(TraceRecord {
                frame_index: first.frame_index,
                iou: 1.0,
                missed_count: 0,
                status: TrackStatus::Active,
            });
            TrackState::new(first)
        }
    };
    let mut frames = 1;
    for obs in iter {
        frames += 1;
        match state.step(obs, cfg) {
            Ok(record) => trace.push(record),
            Err(e) => return fail(e, trace),
        }
        if state.status == TrackStatus::Lost {
            let (first_miss_index, reason) = state.miss_run.expect("a lost track has a miss run");
            return KeyframeSelection {
                decision: Ok(KeyframeDecision {
                    keyframe_index: first_miss_index,
                    first_miss_index,
                    reason,
                }),
                trace,
            };
        }
    }
    let err = if frames < 2 {
        TrackError::TooFewFrames(frames)
    } else {
        TrackError::NoKeyframe { frames }
    };
    fail(err, trace)
}

/// Segments every frame (in parallel) and tracks the darkest region.
pub fn select_keyframe(
    frames: &[Frame],
    segmenter: &dyn Segmenter,
    cfg: &PipelineConfig,
) -> KeyframeSelection {
    if frames.len() < 2 {
        return KeyframeSelection {
            decision: Err(TrackError::TooFewFrames(frames.len())),
            trace: Vec::new(),
        };
    }
    let observations: Result<Vec<Observation>, TrackError> = frames
        .par_iter()
        .map(|f| Observation::from_result(f.index(), segmenter.segment(f)))
        .collect();
    match observations {
        Ok(obs) => track_observations(obs, cfg),
        Err(e) => KeyframeSelection {
            decision: Err(e),
            trace: Vec::new(),
        },
    }
}
